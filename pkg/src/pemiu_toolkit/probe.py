"""Linear attribute probes for soft-biometric leakage.

A logistic-regression probe is trained on unprotected embeddings and then
applied to protected or reconstructed ones. Accuracy near 0.5 on balanced
labels means the attribute is no longer linearly readable.

Inputs are scaled to unit norm before training and prediction, so
predictions only depend on the direction of an embedding.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import DimensionMismatch, SingleClass, TooFewExamples
from .pemiu import make_rng


@dataclass(frozen=True)
class ProbeHyper:
    epochs: int = 200
    learning_rate: float = 0.1
    l2: float = 1e-4


@dataclass(frozen=True)
class LinearProbe:
    weights: np.ndarray
    bias: float
    training_meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])

    def decision(self, x) -> np.ndarray:
        x = _unit_rows(x)
        if x.shape[1] != self.dim:
            raise DimensionMismatch(f"probe expects dimension {self.dim}, got {x.shape[1]}")
        return x @ self.weights + self.bias

    def predict(self, x) -> np.ndarray:
        return (self.decision(x) >= 0).astype(np.uint8)


@dataclass(frozen=True)
class ProbeReport:
    folds: tuple
    mean: float
    std: float
    n_folds: int
    seed: Optional[int] = None

    @classmethod
    def from_folds(cls, accs, seed=None) -> "ProbeReport":
        a = np.asarray(accs, dtype=np.float64)
        return cls(tuple(float(v) for v in a), float(np.mean(a)), float(np.std(a)), len(a), seed)

    def to_dict(self) -> dict:
        return {"folds": list(self.folds), "mean": self.mean, "std": self.std,
                "n_folds": self.n_folds, "seed": self.seed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def summary(self) -> str:
        return f"{self.mean:.2f} ± {self.std:.2f}"


def _unit_rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    n = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, n, out=np.zeros_like(x), where=n > 0)


def fit_logistic(x, y, hyper: ProbeHyper = ProbeHyper(), seed=None) -> LinearProbe:
    """Full-batch gradient descent on the L2-regularised logistic loss.

    Starts from zero weights, so the result is fully determined by the data
    and ``hyper``; ``seed`` is only recorded.
    """
    x = _unit_rows(x)
    y = np.asarray(y, dtype=np.float64)
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(hyper.epochs):
        z = x @ w + b
        p = 0.5 * (1.0 + np.tanh(0.5 * z))  # overflow-free sigmoid
        r = p - y
        w -= hyper.learning_rate * (x.T @ r / n + hyper.l2 * w)
        b -= hyper.learning_rate * float(r.mean())
    meta = {"epochs": hyper.epochs, "learning_rate": hyper.learning_rate,
            "l2": hyper.l2, "seed": seed}
    return LinearProbe(w, b, meta)


def evaluate_probe(probe: LinearProbe, embeddings, labels) -> float:
    """Fraction of ``labels`` the probe predicts correctly."""
    labels = np.asarray(labels).astype(np.uint8)
    pred = probe.predict(embeddings)
    if pred.shape[0] != labels.shape[0]:
        raise DimensionMismatch("embeddings and labels differ in length")
    return float(np.count_nonzero(pred == labels)) / labels.shape[0]


def stratified_folds(labels, folds: int, seed) -> list:
    """Split indices into ``folds`` test sets with class proportions kept."""
    labels = np.asarray(labels)
    rng = make_rng(seed)
    out = [[] for _ in range(folds)]
    offset = 0
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        idx = idx[rng.permutation(idx.size)]
        for k, i in enumerate(idx):
            out[(k + offset) % folds].append(int(i))
        offset += idx.size
    return [np.sort(np.asarray(f, dtype=np.intp)) for f in out]


def _check_labels(labels, folds):
    labels = np.asarray(labels)
    if labels.size == 0:
        raise TooFewExamples("no examples")
    classes, counts = np.unique(labels, return_counts=True)
    if not set(classes.tolist()) <= {0, 1}:
        raise ValueError(f"labels must be binary 0/1, got classes {classes.tolist()}")
    if classes.size < 2:
        raise SingleClass(f"only class {int(classes[0])} present")
    if counts.min() < 2:
        raise TooFewExamples("need at least 2 examples per class")
    if folds < 2:
        raise TooFewExamples("need at least 2 folds")
    if labels.size < folds:
        raise TooFewExamples(f"{labels.size} examples cannot fill {folds} folds")


def cross_validate(embeddings, labels, eval_sets: Optional[Mapping] = None, folds: int = 5,
                   hyper: ProbeHyper = ProbeHyper(), seed=7):
    """Train one probe per fold and score every held-out fold.

    ``eval_sets`` maps a name to embeddings aligned row by row with
    ``embeddings`` (e.g. their protected versions). Each fold's probe,
    trained on the other folds of the unprotected data, is scored on the
    fold's rows of every evaluation set. The unprotected data itself is
    always reported as ``"unprotected"``.

    Returns ``(probes, {name: ProbeReport})``.
    """
    x = np.asarray(embeddings)
    y = np.asarray(labels).astype(np.uint8)
    _check_labels(y, folds)
    sets = {"unprotected": x}
    for name, e in (eval_sets or {}).items():
        e = np.asarray(e)
        if e.shape != x.shape:
            raise DimensionMismatch(f"eval set {name!r} has shape {e.shape}, expected {x.shape}")
        sets[name] = e
    split = stratified_folds(y, folds, seed)
    probes = []
    accs = {name: [] for name in sets}
    for test in split:
        train = np.setdiff1d(np.arange(y.size), test)
        probe = fit_logistic(x[train], y[train], hyper, seed)
        probes.append(probe)
        for name, e in sets.items():
            accs[name].append(evaluate_probe(probe, e[test], y[test]))
    return probes, {name: ProbeReport.from_folds(a, seed) for name, a in accs.items()}


def train_probe(embeddings, labels, folds: int = 5, hyper: ProbeHyper = ProbeHyper(), seed=7):
    """Cross-validated probe on unprotected data: ``(probes, ProbeReport)``."""
    probes, reports = cross_validate(embeddings, labels, None, folds, hyper, seed)
    return probes, reports["unprotected"]
