"""Irreversibility attacks on block-permuted embeddings.

The image-space inversion network is replaced by a reconstruction channel
that acts directly on embeddings. An attacked record counts as reversed when
``cosine(channel(protected), original) >= threshold``; the reversibility
success rate (RSR) is the fraction of reversed records.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import BlockPartition, cosine_rows, cosine_similarity, normalize_rows
from .data import Dataset
from .errors import ChannelGap, InvalidDisplacement, MissingOriginal, PartitionMismatch
from .metrics import OperatingPoint, ScoreSet, non_mated_scores, threshold_at_fmr
from .pemiu import (BlockPermutation, iter_by_displacement, make_rng, protect_rows,
                    sample_uniform, sample_with_displacement, search_space_size,
                    unprotect)

# P values listed per block size in the reference sweep; other K use 2..N.
DEFAULT_DISPLACEMENTS = {32: tuple(range(4, 17)), 64: tuple(range(2, 9)), 128: tuple(range(2, 5))}
DEFAULT_FMR_TARGETS = (0.001, 0.01)


def default_displacements(part: BlockPartition) -> tuple:
    return DEFAULT_DISPLACEMENTS.get(part.K, tuple(range(2, part.N + 1)))


@dataclass(frozen=True)
class ReconstructionChannel:
    """Stand-in for the inversion network plus re-extraction.

    kind ``identity`` returns its input, ``gaussian`` adds i.i.d. noise of
    standard deviation ``sigma`` per coordinate (seeded by ``seed + row``
    position) and ``external`` looks reconstructions up by record id.
    """

    kind: str = "identity"
    sigma: float = 0.0
    seed: int = 0
    renormalize: bool = False
    table: Optional[Mapping] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("identity", "gaussian", "external"):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.kind == "external" and self.table is None:
            raise ValueError("external channel needs a reconstruction table")

    def describe(self) -> str:
        if self.kind == "gaussian":
            return f"gaussian:{self.sigma!r}"
        return self.kind

    def apply(self, ids: Sequence[str], x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        if self.kind == "identity" or (self.kind == "gaussian" and self.sigma == 0):
            return x
        if self.kind == "external":
            missing = [r for r in ids if r not in self.table]
            if missing:
                raise ChannelGap(f"no reconstruction for record {missing[0]!r}")
            return np.vstack([np.asarray(self.table[r], dtype=np.float32) for r in ids])
        out = np.empty_like(x)
        for k in range(x.shape[0]):
            noise = make_rng(self.seed + k).standard_normal(x.shape[1]) * self.sigma
            out[k] = x[k].astype(np.float64) + noise
        return normalize_rows(out) if self.renormalize else out

    def __call__(self, record_id, v) -> np.ndarray:
        return self.apply([record_id], np.asarray(v)[None, :])[0]


IDENTITY = ReconstructionChannel()


def gaussian_channel(sigma: float, seed: int = 0, renormalize: bool = False) -> ReconstructionChannel:
    return ReconstructionChannel("gaussian", float(sigma), int(seed), renormalize)


def external_channel(table: Mapping) -> ReconstructionChannel:
    return ReconstructionChannel("external", table=dict(table))


def parse_channel(text: str, seed: int = 0, renormalize: bool = False) -> ReconstructionChannel:
    """Parse ``identity`` or ``gaussian:<sigma>``."""
    if text == "identity":
        return IDENTITY
    if text.startswith("gaussian:"):
        return gaussian_channel(float(text.split(":", 1)[1]), seed, renormalize)
    raise ValueError(f"unknown channel spec {text!r}")


def _threshold(op) -> float:
    return op.threshold if isinstance(op, OperatingPoint) else float(op)


def reconstruction_scores(protected, originals: Mapping, channel: ReconstructionChannel = IDENTITY):
    """Cosine of each channel output against its record's original."""
    items = list(protected.items()) if isinstance(protected, Mapping) else list(protected)
    ids = [r for r, _ in items]
    for r in ids:
        if r not in originals:
            raise MissingOriginal(f"no original embedding for record {r!r}")
    if not items:
        return np.empty(0)
    xp = np.vstack([np.asarray(v, dtype=np.float32) for _, v in items])
    xo = np.vstack([np.asarray(originals[r], dtype=np.float32) for r in ids])
    return cosine_rows(channel.apply(ids, xp), xo)


def rsr(protected, originals: Mapping, channel: ReconstructionChannel = IDENTITY, op=None) -> float:
    """Fraction of attacked records whose reconstruction is accepted.

    ``protected`` is a mapping or sequence of ``(record_id, embedding)``;
    ``op`` is an :class:`OperatingPoint` or a bare threshold.
    """
    s = reconstruction_scores(protected, originals, channel)
    if s.size == 0:
        raise ValueError("no records to attack")
    return int(np.count_nonzero(s >= _threshold(op))) / s.size


# --- sweeps --------------------------------------------------------------------

@dataclass(frozen=True)
class RsrRow:
    K: int
    P: Optional[int]  # None: every identity has its own uniform shuffle
    operating_point_label: str
    target_fmr: float
    threshold: float
    rsr: float
    n_attacked: int
    seed: int
    accepted: int = 0


@dataclass
class RsrGrid:
    rows: list
    meta: dict = field(default_factory=dict)

    HEADER = ("K", "P", "target_fmr", "threshold", "rsr", "n_attacked", "seed")

    def value(self, K, P, target_fmr) -> float:
        for r in self.rows:
            if r.K == K and r.P == P and r.target_fmr == target_fmr:
                return r.rsr
        raise KeyError((K, P, target_fmr))

    def series(self, K, target_fmr) -> list:
        """``(P, rsr)`` pairs for one block size, in sweep order."""
        return [(r.P, r.rsr) for r in self.rows if r.K == K and r.target_fmr == target_fmr]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for r in self.rows:
            w.writerow([r.K, "uniform" if r.P is None else r.P, repr(r.target_fmr),
                        repr(r.threshold), repr(r.rsr), r.n_attacked, r.seed])
        return buf.getvalue()


def _fmr_label(target: float) -> str:
    return f"FMR={target * 100:g}%"


def identity_mappings(ds: Dataset, part: BlockPartition, seed: int) -> np.ndarray:
    """One uniform shuffle per identity, seeded with ``seed + identity``."""
    cache = {}
    out = np.empty((len(ds), part.N), dtype=np.intp)
    for k, ident in enumerate(ds.identities):
        ident = int(ident)
        if ident not in cache:
            cache[ident] = sample_uniform(part, seed + ident).as_array()
        out[k] = cache[ident]
    return out


def record_mappings(ds: Dataset, part: BlockPartition, seed: int) -> np.ndarray:
    """One uniform shuffle per record, seeded with ``seed + record index``."""
    return np.vstack([sample_uniform(part, seed + k).as_array() for k in range(len(ds))])


def rsr_sweep(dataset: Dataset, k_values: Iterable[int], mode: str = "fixed",
              displacements=None, channel: ReconstructionChannel = IDENTITY,
              fmr_targets: Sequence[float] = DEFAULT_FMR_TARGETS, seed: int = 7,
              calibration: str = "per-k", threads: int = 1) -> RsrGrid:
    """RSR over block sizes and displacement counts.

    mode ``fixed``: for each ``(K, P)`` one permutation moving exactly ``P``
    blocks (seeded by ``seed``) protects every record. mode
    ``per-identity``: each identity gets its own uniform shuffle and the
    grid has one row per ``K`` with ``P`` left empty.

    ``displacements`` is ``None`` (defaults per K), a list applied to every
    K, or a dict ``{K: [P, ...]}``.

    Thresholds come from non-mated scores of: the per-identity protected
    system at that K (``per-k``), the cell's own protected embeddings
    (``per-cell``), or the unprotected embeddings (``unprotected``).
    """
    if mode not in ("fixed", "per-identity"):
        raise ValueError(f"unknown mode {mode!r}")
    if calibration not in ("per-k", "per-cell", "unprotected"):
        raise ValueError(f"unknown calibration {calibration!r}")
    targets = [float(t) for t in fmr_targets]
    parts = [BlockPartition(dataset.S, int(K)) for K in k_values]

    cells = []
    for part in parts:
        if mode == "per-identity":
            cells.append((part, None))
            continue
        if displacements is None:
            plist = default_displacements(part)
        elif isinstance(displacements, Mapping):
            plist = displacements.get(part.K, default_displacements(part))
        else:
            plist = displacements
        for P in plist:
            if P == 1 or P < 0 or P > part.N:
                raise InvalidDisplacement(f"P={P} invalid for K={part.K} (N={part.N})")
            cells.append((part, int(P)))

    x = dataset.embeddings
    ids = dataset.ids
    unprotected_ops = {}

    def system_ops(protected_x):
        non = ScoreSet(np.empty(0), non_mated_scores(protected_x, dataset.identities))
        return {t: threshold_at_fmr(non, t) for t in targets}

    def per_k_ops(part):
        return system_ops(protect_rows(x, part, identity_mappings(dataset, part, seed)))

    if calibration == "unprotected":
        unprotected_ops = system_ops(x)

    def run_cell(cell):
        part, P = cell
        if P is None:
            maps = identity_mappings(dataset, part, seed)
        else:
            maps = sample_with_displacement(part, P, seed).as_array()
        xp = protect_rows(x, part, maps)
        scores = cosine_rows(channel.apply(ids, xp), x)
        return scores, xp

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        outputs = list(pool.map(run_cell, cells))
        if calibration == "per-k":
            k_ops = dict(zip([p.K for p in parts], pool.map(per_k_ops, parts)))
        elif calibration == "per-cell":
            cell_ops = list(pool.map(lambda o: system_ops(o[1]), outputs))

    rows = []
    for i, ((part, P), (scores, _)) in enumerate(zip(cells, outputs)):
        if calibration == "per-k":
            ops = k_ops[part.K]
        elif calibration == "per-cell":
            ops = cell_ops[i]
        else:
            ops = unprotected_ops
        for t in targets:
            thr = ops[t].threshold
            acc = int(np.count_nonzero(scores >= thr))
            rows.append(RsrRow(part.K, P, _fmr_label(t), t, thr, acc / scores.size,
                               int(scores.size), int(seed), acc))
    meta = {"mode": mode, "calibration": calibration, "channel": channel.describe(),
            "seed": int(seed), "targets": targets}
    return RsrGrid(rows, meta)


# --- seed attacks --------------------------------------------------------------

def known_seed_attack(protected, key, channel: ReconstructionChannel = IDENTITY,
                      part: Optional[BlockPartition] = None, displacement: Optional[int] = None,
                      record_id: str = "") -> np.ndarray:
    """Invert the shuffle with a known permutation or seed, then reconstruct.

    ``key`` is a :class:`BlockPermutation`, or an integer seed from which
    the permutation is regenerated (uniformly, or with ``displacement``
    moved blocks) for partition ``part``.
    """
    if isinstance(key, BlockPermutation):
        perm = key
        if part is not None and part != perm.partition:
            raise PartitionMismatch(f"{part} vs {perm.partition}")
    else:
        if part is None:
            raise ValueError("a partition is required to regenerate a permutation from a seed")
        perm = (sample_uniform(part, key) if displacement is None
                else sample_with_displacement(part, displacement, key))
    if np.asarray(protected).shape[-1] != perm.partition.S:
        raise PartitionMismatch(f"embedding length {np.asarray(protected).shape[-1]} != {perm.partition.S}")
    return channel(record_id, unprotect(protected, perm))


@dataclass
class AttackReport:
    success: bool
    best_score: float
    candidates_tried: int
    recovered_permutation: Optional[BlockPermutation]
    search_space_size: int
    threshold: float = float("nan")
    order: str = "exhaustive"
    seed: Optional[int] = None
    budget: int = 0

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "best_score": self.best_score,
            "candidates_tried": self.candidates_tried,
            "recovered_permutation": (None if self.recovered_permutation is None
                                      else self.recovered_permutation.to_dict()),
            "search_space_size": self.search_space_size,
            "search_space_size_str": str(self.search_space_size),
            "log10_search_space": math.log10(self.search_space_size),
            "threshold": self.threshold,
            "order": self.order,
            "seed": self.seed,
            "budget": self.budget,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _candidate_stream(part: BlockPartition, order: str, seed, limit: int):
    if order == "exhaustive":
        it = iter_by_displacement(part.N)
        for _ in range(limit):
            try:
                yield next(it)
            except StopIteration:
                return
    elif order == "random":
        base = 0 if seed is None else int(seed)
        for k in range(limit):
            yield sample_uniform(part, base + k).mapping
    else:
        raise ValueError(f"unknown order {order!r}")


def brute_force_attack(protected, reference, part: BlockPartition, op, budget: int,
                       order: str = "exhaustive", seed: Optional[int] = None,
                       channel: ReconstructionChannel = IDENTITY, batch: int = 4096,
                       record_id: str = "") -> AttackReport:
    """Guess the block shuffle by searching candidate permutations.

    Each candidate ``pi`` is scored as
    ``cosine(channel(unprotect(protected, pi)), reference)``. The search
    stops at the first candidate reaching the threshold of ``op`` or after
    ``min(budget, N!)`` candidates. Exhaustive order runs by ascending
    displacement; random order draws uniform shuffles seeded ``seed + k``.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    protected = np.asarray(protected, dtype=np.float32)
    reference = np.asarray(reference, dtype=np.float32)
    if protected.shape != (part.S,) or reference.shape != (part.S,):
        raise PartitionMismatch("embeddings do not match the partition dimension")
    thr = _threshold(op)
    space = search_space_size(part.N)
    limit = min(int(budget), space)

    # With the identity channel a candidate's score is a sum of block dot
    # products: sum_j <protected_j, reference_{pi(j)}> / norms.
    fast = channel.kind == "identity" or (channel.kind == "gaussian" and channel.sigma == 0)
    if fast:
        pb = protected.astype(np.float64).reshape(part.N, part.K)
        rb = reference.astype(np.float64).reshape(part.N, part.K)
        D = pb @ rb.T / math.sqrt(np.dot(pb.ravel(), pb.ravel()) * np.dot(rb.ravel(), rb.ravel()))
        cols = np.arange(part.N)

    def exact(mapping):
        rec = channel(record_id, unprotect(protected, BlockPermutation(part, mapping)))
        return cosine_similarity(rec, reference)

    tried = 0
    best = -math.inf
    stream = _candidate_stream(part, order, seed, limit)
    while True:
        chunk = [m for _, m in zip(range(batch), stream)]
        if not chunk:
            break
        if fast:
            maps = np.asarray(chunk, dtype=np.intp)
            scores = D[cols[None, :], maps].sum(axis=1)
            hits = np.nonzero(scores >= thr - 1e-9)[0]
            for h in hits:
                s = exact(chunk[h])
                if s >= thr:
                    return AttackReport(True, s, tried + int(h) + 1, BlockPermutation(part, chunk[h]),
                                        space, thr, order, seed, int(budget))
            best = max(best, float(np.clip(scores.max(), -1.0, 1.0)))
        else:
            for h, m in enumerate(chunk):
                s = exact(m)
                if s >= thr:
                    return AttackReport(True, s, tried + h + 1, BlockPermutation(part, m),
                                        space, thr, order, seed, int(budget))
                best = max(best, s)
        tried += len(chunk)
    return AttackReport(False, best, tried, None, space, thr, order, seed, int(budget))
