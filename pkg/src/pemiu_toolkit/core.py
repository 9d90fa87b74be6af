"""Embedding arrays, block arithmetic and the cosine comparator.

Embeddings are plain 1-D ``numpy.float32`` arrays. Batches are 2-D arrays
with one embedding per row. All reductions run in float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IndivisibleBlockSize, ZeroVector

DEFAULT_DIM = 512
BLOCK_SIZES = (16, 32, 64, 128)
ZERO_NORM = 1e-12
UNIT_NORM_TOL = 1e-6


def as_embedding(values) -> np.ndarray:
    """Validate ``values`` and return them as a contiguous float32 vector."""
    v = np.ascontiguousarray(values, dtype=np.float32)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatch(f"embedding must be a non-empty vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("embedding contains NaN or Inf")
    return v


def is_unit_norm(v, tol: float = UNIT_NORM_TOL) -> bool:
    n = np.sqrt(np.dot(np.asarray(v, np.float64), np.asarray(v, np.float64)))
    return abs(n - 1.0) <= tol


def normalize(v) -> np.ndarray:
    """Scale ``v`` to unit Euclidean norm."""
    v = as_embedding(v)
    v64 = v.astype(np.float64)
    n = np.sqrt(np.dot(v64, v64))
    if n <= ZERO_NORM:
        raise ZeroVector("cannot normalize a zero vector")
    return (v64 / n).astype(np.float32)


def normalize_rows(x) -> np.ndarray:
    x64 = np.asarray(x, dtype=np.float64)
    n = np.sqrt(np.einsum("ij,ij->i", x64, x64))
    if np.any(n <= ZERO_NORM):
        raise ZeroVector("cannot normalize a zero row")
    return (x64 / n[:, None]).astype(np.float32)


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between ``a`` and ``b``, clipped to [-1, 1].

    Computed as ``dot(a, b) / sqrt(dot(a, a) * dot(b, b))`` in float64, so a
    vector compared with a bitwise copy of itself scores exactly 1.0. Shares
    the reduction path of :func:`cosine_rows`, so scalar and batched scores
    agree bitwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return float(cosine_rows(a[None, :], b[None, :])[0])


def cosine_rows(a, b) -> np.ndarray:
    """Row-wise cosine similarity of two equally shaped batches."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    if np.any(aa <= ZERO_NORM**2) or np.any(bb <= ZERO_NORM**2):
        raise ZeroVector("cosine similarity undefined for a zero vector")
    return np.clip(np.einsum("ij,ij->i", a, b) / np.sqrt(aa * bb), -1.0, 1.0)


def cosine_matrix(x) -> np.ndarray:
    """All-pairs cosine similarity of the rows of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    sq = np.einsum("ij,ij->i", x, x)
    if np.any(sq <= ZERO_NORM**2):
        raise ZeroVector("cosine similarity undefined for a zero vector")
    return np.clip((x @ x.T) / np.sqrt(np.outer(sq, sq)), -1.0, 1.0)


@dataclass(frozen=True)
class BlockPartition:
    """Split of an ``S``-dimensional embedding into ``N`` blocks of ``K``."""

    S: int
    K: int

    def __post_init__(self):
        if self.S <= 0 or self.K <= 0:
            raise ValueError(f"dimension and block size must be positive (S={self.S}, K={self.K})")
        if self.S % self.K:
            raise IndivisibleBlockSize(f"block size {self.K} does not divide dimension {self.S}")

    @property
    def N(self) -> int:
        return self.S // self.K


def partition(S: int, K: int) -> BlockPartition:
    return BlockPartition(int(S), int(K))
