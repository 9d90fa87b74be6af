"""Block-permutation protection of embeddings.

An embedding of dimension ``S`` is cut into ``N = S / K`` blocks of ``K``
coordinates and the blocks are shuffled. A :class:`BlockPermutation` stores
the shuffle as a mapping where ``mapping[j]`` is the input block copied to
output block ``j``.

Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence``; the identifier is recorded in every output manifest as
:data:`PRNG_ALGORITHM`. Sampling uses only ``Generator.integers``, whose
bounded-integer algorithm is platform independent.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .core import BlockPartition, as_embedding
from .errors import DimensionMismatch, InvalidDisplacement, PartitionMismatch

PRNG_ALGORITHM = "numpy.PCG64+SeedSequence"


def make_rng(seed) -> np.random.Generator:
    """Return a generator for ``seed``; generators are passed through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True)
class BlockPermutation:
    partition: BlockPartition
    mapping: tuple

    def __post_init__(self):
        m = tuple(int(i) for i in self.mapping)
        if sorted(m) != list(range(self.partition.N)):
            raise ValueError(f"mapping is not a bijection on {self.partition.N} blocks: {m}")
        object.__setattr__(self, "mapping", m)

    @property
    def displacement(self) -> int:
        """Number of blocks moved away from their own position."""
        return sum(1 for j, i in enumerate(self.mapping) if i != j)

    @property
    def is_identity(self) -> bool:
        return self.displacement == 0

    def as_array(self) -> np.ndarray:
        return np.asarray(self.mapping, dtype=np.intp)

    def to_dict(self) -> dict:
        return {"S": self.partition.S, "K": self.partition.K, "mapping": list(self.mapping)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "BlockPermutation":
        return cls(BlockPartition(int(d["S"]), int(d["K"])), tuple(d["mapping"]))

    @classmethod
    def from_json(cls, text: str) -> "BlockPermutation":
        return cls.from_dict(json.loads(text))


def identity(part: BlockPartition) -> BlockPermutation:
    return BlockPermutation(part, tuple(range(part.N)))


def _fisher_yates(values: list, rng: np.random.Generator) -> list:
    for i in range(len(values) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        values[i], values[j] = values[j], values[i]
    return values


def _random_derangement(m: int, rng: np.random.Generator) -> list:
    # Fisher-Yates from the top fixes position i at step i; restarting on the
    # first fixed point is rejection sampling, hence uniform over derangements.
    while True:
        a = list(range(m))
        ok = True
        for i in range(m - 1, -1, -1):
            j = int(rng.integers(0, i + 1))
            a[i], a[j] = a[j], a[i]
            if a[i] == i:
                ok = False
                break
        if ok:
            return a


def sample_uniform(part: BlockPartition, seed) -> BlockPermutation:
    """Draw a permutation uniformly from all ``N!`` block shuffles."""
    rng = make_rng(seed)
    return BlockPermutation(part, tuple(_fisher_yates(list(range(part.N)), rng)))


def sample_with_displacement(part: BlockPartition, P: int, seed) -> BlockPermutation:
    """Draw a permutation moving exactly ``P`` blocks.

    A ``P``-subset of block positions is chosen uniformly (partial
    Fisher-Yates), then a uniform derangement of that subset is applied.
    """
    P = int(P)
    if P == 1 or P < 0 or P > part.N:
        raise InvalidDisplacement(f"displacement must be 0 or in 2..{part.N}, got {P}")
    if P == 0:
        return identity(part)
    rng = make_rng(seed)
    idx = list(range(part.N))
    for i in range(P):
        j = int(rng.integers(i, part.N))
        idx[i], idx[j] = idx[j], idx[i]
    subset = sorted(idx[:P])
    d = _random_derangement(P, rng)
    mapping = list(range(part.N))
    for k, pos in enumerate(subset):
        mapping[pos] = subset[d[k]]
    return BlockPermutation(part, tuple(mapping))


@lru_cache(maxsize=None)
def derangements(n: int) -> int:
    """Number of permutations of ``n`` items with no fixed point."""
    if n < 0:
        raise ValueError("n must be non-negative")
    a, b = 1, 0  # D(0), D(1)
    if n == 0:
        return a
    for k in range(2, n + 1):
        a, b = b, (k - 1) * (a + b)
    return b


def count_with_displacement(N: int, P: int) -> int:
    """Exact number of permutations of ``N`` blocks moving exactly ``P``."""
    if not 0 <= P <= N:
        raise ValueError(f"need 0 <= P <= N, got N={N}, P={P}")
    return math.comb(N, P) * derangements(P)


def search_space_size(N: int) -> int:
    return math.factorial(N)


def _check_len(v: np.ndarray, part: BlockPartition):
    if v.shape[-1] != part.S:
        raise DimensionMismatch(f"embedding length {v.shape[-1]} != partition dimension {part.S}")


def protect(v, perm: BlockPermutation) -> np.ndarray:
    """Shuffle the blocks of ``v``: output block ``j`` is input block ``perm.mapping[j]``."""
    v = as_embedding(v)
    part = perm.partition
    _check_len(v, part)
    return v.reshape(part.N, part.K)[perm.as_array()].reshape(part.S)


def unprotect(v_prime, perm: BlockPermutation) -> np.ndarray:
    """Undo :func:`protect` for the same permutation."""
    v_prime = as_embedding(v_prime)
    part = perm.partition
    _check_len(v_prime, part)
    out = np.empty((part.N, part.K), dtype=np.float32)
    out[perm.as_array()] = v_prime.reshape(part.N, part.K)
    return out.reshape(part.S)


def protect_rows(x, part: BlockPartition, mappings) -> np.ndarray:
    """Protect every row of ``x`` with its own mapping (shape ``(n, N)``)."""
    x = np.asarray(x, dtype=np.float32)
    _check_len(x, part)
    mappings = np.asarray(mappings, dtype=np.intp)
    if mappings.ndim == 1:
        mappings = np.broadcast_to(mappings, (x.shape[0], part.N))
    blocks = x.reshape(x.shape[0], part.N, part.K)
    rows = np.arange(x.shape[0])[:, None]
    return blocks[rows, mappings].reshape(x.shape[0], part.S)


def unprotect_rows(x, part: BlockPartition, mappings) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    _check_len(x, part)
    mappings = np.asarray(mappings, dtype=np.intp)
    if mappings.ndim == 1:
        mappings = np.broadcast_to(mappings, (x.shape[0], part.N))
    out = np.empty((x.shape[0], part.N, part.K), dtype=np.float32)
    rows = np.arange(x.shape[0])[:, None]
    out[rows, mappings] = x.reshape(x.shape[0], part.N, part.K)
    return out.reshape(x.shape[0], part.S)


def invert(perm: BlockPermutation) -> BlockPermutation:
    inv = [0] * perm.partition.N
    for j, i in enumerate(perm.mapping):
        inv[i] = j
    return BlockPermutation(perm.partition, tuple(inv))


def compose(p1: BlockPermutation, p2: BlockPermutation) -> BlockPermutation:
    """Mapping ``j -> p1(p2(j))``.

    ``protect(protect(v, p2), p1) == protect(v, compose(p2, p1))``.
    """
    if p1.partition != p2.partition:
        raise PartitionMismatch(f"{p1.partition} vs {p2.partition}")
    return BlockPermutation(p1.partition, tuple(p1.mapping[i] for i in p2.mapping))


def iter_derangements(m: int) -> Iterator[tuple]:
    """Derangements of ``range(m)`` in lexicographic order (lazy)."""
    if m == 0:
        yield ()
        return
    used = [False] * m
    cur = [0] * m

    def rec(pos):
        if pos == m:
            yield tuple(cur)
            return
        for v in range(m):
            if used[v] or v == pos:
                continue
            # the last free value must not be forced onto its own slot
            if pos == m - 2:
                last = next(x for x in range(m) if not used[x] and x != v)
                if last == m - 1:
                    continue
            used[v] = True
            cur[pos] = v
            yield from rec(pos + 1)
            used[v] = False

    yield from rec(0)


def iter_by_displacement(N: int, displacements: Sequence[int] | None = None) -> Iterator[tuple]:
    """Enumerate block mappings by ascending displacement.

    Within one displacement ``P`` the moved positions run through
    ``itertools.combinations`` order and, for each subset, derangements run
    in lexicographic order.
    """
    if displacements is None:
        displacements = [0] + list(range(2, N + 1))
    for P in displacements:
        if P == 0:
            yield tuple(range(N))
            continue
        for subset in itertools.combinations(range(N), P):
            for d in iter_derangements(P):
                mapping = list(range(N))
                for k, pos in enumerate(subset):
                    mapping[pos] = subset[d[k]]
                yield tuple(mapping)
