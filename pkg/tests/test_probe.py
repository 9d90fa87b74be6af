import json

import numpy as np
import pytest

from pemiu_toolkit.attack import record_mappings
from pemiu_toolkit.core import normalize_rows, partition
from pemiu_toolkit.data import SynthSpec, generate
from pemiu_toolkit.errors import DimensionMismatch, SingleClass, TooFewExamples
from pemiu_toolkit.pemiu import protect_rows
from pemiu_toolkit.probe import (ProbeReport, cross_validate, evaluate_probe, fit_logistic,
                                 stratified_folds, train_probe)


def _balanced(n):
    return np.arange(n) % 2


def test_identical_features_give_chance(rng):
    x = np.tile(normalize_rows(rng.standard_normal((1, 64))), (400, 1))
    _, rep = train_probe(x, _balanced(400), seed=1)
    assert abs(rep.mean - 0.5) <= 0.05


def test_separable_offset_is_learned():
    ds = generate(SynthSpec(n_identities=200, attribute_offset=0.5, seed=2))
    _, rep = train_probe(ds.embeddings, ds.attributes, seed=3)
    assert rep.mean >= 0.95


def test_determinism():
    ds = generate(SynthSpec(n_identities=80, seed=4))
    a = train_probe(ds.embeddings, ds.attributes, seed=9)[1]
    b = train_probe(ds.embeddings, ds.attributes, seed=9)[1]
    assert a == b


def test_flipped_labels_complement():
    ds = generate(SynthSpec(n_identities=80, seed=4))
    probe = fit_logistic(ds.embeddings, ds.attributes)
    y = ds.attributes
    assert evaluate_probe(probe, ds.embeddings, y) + evaluate_probe(probe, ds.embeddings, 1 - y) == pytest.approx(1.0)


def test_train_accuracy_not_below_heldout():
    ds = generate(SynthSpec(n_identities=150, attribute_offset=0.1, seed=5))
    probes, rep = train_probe(ds.embeddings, ds.attributes, seed=1)
    folds = stratified_folds(ds.attributes, 5, 1)
    train_accs = []
    for probe, test in zip(probes, folds):
        tr = np.setdiff1d(np.arange(len(ds)), test)
        train_accs.append(evaluate_probe(probe, ds.embeddings[tr], ds.attributes[tr]))
    assert np.mean(train_accs) >= rep.mean


def test_per_sample_shuffle_k16_near_chance(reference_dataset):
    ds = reference_dataset
    part = partition(512, 16)
    xp = protect_rows(ds.embeddings, part, record_mappings(ds, part, 7))
    _, reps = cross_validate(ds.embeddings, ds.attributes, {"k16": xp}, seed=7)
    assert 0.40 <= reps["k16"].mean <= 0.60
    assert reps["unprotected"].mean > reps["k16"].mean


def test_scale_invariance():
    ds = generate(SynthSpec(n_identities=60, seed=6))
    probe = fit_logistic(ds.embeddings, ds.attributes)
    assert np.array_equal(probe.predict(ds.embeddings), probe.predict(ds.embeddings * 3.5))


def test_label_errors(rng):
    x = rng.standard_normal((10, 8))
    with pytest.raises(SingleClass):
        train_probe(x, np.zeros(10))
    with pytest.raises(TooFewExamples):
        train_probe(x, np.r_[np.zeros(9), 1])
    with pytest.raises(TooFewExamples):
        train_probe(x[:4], _balanced(4), folds=5)
    with pytest.raises(TooFewExamples):
        train_probe(x[:0], _balanced(0))
    with pytest.raises(ValueError):
        train_probe(x, np.arange(10) % 3)


def test_eval_set_shape_checked(rng):
    x = rng.standard_normal((20, 8))
    with pytest.raises(DimensionMismatch):
        cross_validate(x, _balanced(20), {"bad": x[:, :4]})


def test_stratified_folds_partition_indices():
    y = np.r_[np.zeros(13), np.ones(7)]
    folds = stratified_folds(y, 5, 0)
    assert sorted(np.concatenate(folds).tolist()) == list(range(20))
    for f in folds:
        assert 1 <= int(y[f].sum()) <= 2


def test_report_json_consistent():
    rep = ProbeReport.from_folds([0.5, 0.6, 0.7], seed=2)
    d = json.loads(rep.to_json())
    assert d["mean"] == pytest.approx(np.mean(d["folds"]))
    assert d["std"] == pytest.approx(np.std(d["folds"]))
    assert d["n_folds"] == 3 and d["seed"] == 2
    assert rep.summary() == "0.60 ± 0.08"
