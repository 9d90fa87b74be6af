"""Verification error rates over mated and non-mated score sets.

A comparison is accepted iff ``score >= threshold``. All rates are
empirical step functions; comparisons between rates are done on integer
counts so results are exact and reproducible.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional

import numpy as np

from .core import cosine_matrix, cosine_rows
from .errors import EmptyScoreList, LabelContradiction, UnknownRecord

# Candidate threshold above every valid score: rejects everything.
ABOVE_MAX = float(np.nextafter(1.0, 2.0))
_CHUNK = 8192


def _as_scores(values, name) -> np.ndarray:
    s = np.asarray(values, dtype=np.float64).ravel()
    if not np.all(np.isfinite(s)):
        raise ValueError(f"{name} scores contain NaN or Inf")
    if s.size and (s.min() < -1.0 or s.max() > 1.0):
        raise ValueError(f"{name} scores must lie in [-1, 1]")
    return s


@dataclass(frozen=True)
class ScoreSet:
    mated: np.ndarray
    non_mated: np.ndarray
    config_label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mated", _as_scores(self.mated, "mated"))
        object.__setattr__(self, "non_mated", _as_scores(self.non_mated, "non-mated"))


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    fmr: float
    fnmr: float
    target_fmr: Optional[float] = None

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "fmr": self.fmr, "fnmr": self.fnmr,
                "target_fmr": self.target_fmr}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _require(arr, what):
    if arr.size == 0:
        raise EmptyScoreList(f"no {what} scores")


def _count_ge(sorted_scores: np.ndarray, t) -> np.ndarray:
    return sorted_scores.size - np.searchsorted(sorted_scores, t, side="left")


def _count_lt(sorted_scores: np.ndarray, t) -> np.ndarray:
    return np.searchsorted(sorted_scores, t, side="left")


def fmr_at(scores: ScoreSet, t: float) -> float:
    _require(scores.non_mated, "non-mated")
    return int(np.count_nonzero(scores.non_mated >= t)) / scores.non_mated.size


def fnmr_at(scores: ScoreSet, t: float) -> float:
    _require(scores.mated, "mated")
    return int(np.count_nonzero(scores.mated < t)) / scores.mated.size


def threshold_at_fmr(scores: ScoreSet, target: float) -> OperatingPoint:
    """Smallest candidate threshold whose FMR does not exceed ``target``.

    Candidates are the distinct non-mated scores plus one value above 1.
    FNMR is reported when mated scores are available, NaN otherwise.
    """
    non = scores.non_mated
    _require(non, "non-mated")
    if not 0.0 < target <= 1.0:
        raise ValueError(f"target FMR must be in (0, 1], got {target}")
    n = non.size
    max_count = int(Fraction(target) * n)  # floor, exact
    cand = np.unique(non)
    counts = _count_ge(np.sort(non), cand)
    ok = np.nonzero(counts <= max_count)[0]
    # counts decrease along cand, so the first admissible candidate is the smallest
    t = float(cand[ok[0]]) if ok.size else ABOVE_MAX
    fmr = int(_count_ge(np.sort(non), t)) / n
    fnmr = fnmr_at(scores, t) if scores.mated.size else float("nan")
    return OperatingPoint(t, fmr, fnmr, float(target))


def _candidates(scores: ScoreSet) -> np.ndarray:
    return np.unique(np.concatenate([scores.mated, scores.non_mated]))


def _counts(scores: ScoreSet, thresholds):
    fa = _count_ge(np.sort(scores.non_mated), thresholds)
    fr = _count_lt(np.sort(scores.mated), thresholds)
    return fa, fr


def eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and the threshold where it is reached.

    Scans every observed score as a threshold and keeps the one minimising
    ``|FMR - FNMR|``, preferring the lower threshold on ties. Returns
    ``((FMR + FNMR) / 2, threshold)``.
    """
    _require(scores.mated, "mated")
    _require(scores.non_mated, "non-mated")
    n_non, n_mat = scores.non_mated.size, scores.mated.size
    cand = _candidates(scores)
    fa, fr = _counts(scores, cand)
    # |fa/n_non - fr/n_mat| scaled by n_non*n_mat, in exact integers
    dtype = np.int64 if n_non * n_mat < 2**62 else object
    gap = np.abs(fa.astype(dtype) * n_mat - fr.astype(dtype) * n_non)
    k = int(np.argmin(gap))  # argmin returns the first (lowest) index on ties
    num = int(fa[k]) * n_mat + int(fr[k]) * n_non
    return num / (2 * n_non * n_mat), float(cand[k])


def eer_operating_point(scores: ScoreSet) -> OperatingPoint:
    _, t = eer(scores)
    return OperatingPoint(t, fmr_at(scores, t), fnmr_at(scores, t), None)


def det_curve(scores: ScoreSet):
    """DET points, one per distinct score plus a final reject-all point.

    Returns ``(thresholds, fmr, fnmr)`` arrays ordered by rising threshold,
    so ``fmr`` is non-increasing and ``fnmr`` non-decreasing.
    """
    _require(scores.mated, "mated")
    _require(scores.non_mated, "non-mated")
    cand = _candidates(scores)
    if cand[-1] < ABOVE_MAX:
        cand = np.append(cand, ABOVE_MAX)
    fa, fr = _counts(scores, cand)
    return cand, fa / scores.non_mated.size, fr / scores.mated.size


def det_to_csv(scores: ScoreSet, fh=None) -> str:
    t, fa, fr = det_curve(scores)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "fmr", "fnmr"])
    for row in zip(t, fa, fr):
        w.writerow([repr(float(x)) for x in row])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def score_protocol(dataset, pairing: Iterable, comparator: Optional[Callable] = None,
                   config_label: str = "") -> ScoreSet:
    """Score a pairing list against ``dataset`` into a :class:`ScoreSet`.

    ``pairing`` holds ``(id_a, id_b, mated)`` triples. Scores keep pairing
    order within each list. The default comparator is row-wise cosine.
    """
    pairs = list(pairing)
    index = dataset.index
    ia, ib, flags = [], [], []
    for a, b, mated in pairs:
        for rid in (a, b):
            if rid not in index:
                raise UnknownRecord(rid)
        ra, rb = index[a], index[b]
        same = dataset.identities[ra] == dataset.identities[rb]
        if bool(mated) and not same:
            raise LabelContradiction(f"pair ({a}, {b}) declared mated but identities differ")
        if not bool(mated) and same:
            raise LabelContradiction(f"pair ({a}, {b}) declared non-mated but identities match")
        ia.append(ra)
        ib.append(rb)
        flags.append(bool(mated))
    flags = np.asarray(flags, dtype=bool)
    if not pairs:
        return ScoreSet(np.empty(0), np.empty(0), config_label)
    ia = np.asarray(ia, dtype=np.intp)
    ib = np.asarray(ib, dtype=np.intp)
    x = dataset.embeddings
    if comparator is None:
        s = np.empty(ia.size)
        for lo in range(0, ia.size, _CHUNK):
            hi = lo + _CHUNK
            s[lo:hi] = cosine_rows(x[ia[lo:hi]], x[ib[lo:hi]])
    else:
        s = np.asarray([comparator(x[a], x[b]) for a, b in zip(ia, ib)], dtype=np.float64)
    return ScoreSet(s[flags], s[~flags], config_label)


def non_mated_scores(embeddings, identities) -> np.ndarray:
    """Cosine scores of all cross-identity row pairs (upper triangle order)."""
    g = cosine_matrix(embeddings)
    ids = np.asarray(identities)
    iu = np.triu_indices(len(ids), 1)
    keep = ids[iu[0]] != ids[iu[1]]
    return g[iu][keep]
