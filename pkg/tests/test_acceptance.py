"""Acceptance criteria 1-10, one test each.

Each test records its criterion number and a short measurement; the
terminal summary prints one PASS/FAIL line per criterion.
"""
import math
import time
from collections import Counter

import numpy as np
import pytest

from oracles import displacement_histogram, eer_scan_fast, threshold_scan_fast
from pemiu_toolkit.attack import (IDENTITY, brute_force_attack, known_seed_attack,
                                  record_mappings, rsr, rsr_sweep)
from pemiu_toolkit.cli import main
from pemiu_toolkit.core import normalize, partition
from pemiu_toolkit.data import (SynthSpec, from_bytes, generate, read_dataset, to_bytes,
                                write_dataset)
from pemiu_toolkit.errors import MalformedFile
from pemiu_toolkit.metrics import ScoreSet, eer, threshold_at_fmr
from pemiu_toolkit.pemiu import (count_with_displacement, make_rng, protect, protect_rows,
                                 sample_uniform, sample_with_displacement, unprotect, unprotect_rows)
from pemiu_toolkit.probe import cross_validate


@pytest.fixture
def criterion(record_property):
    def tag(number, title):
        record_property("criterion", number)
        record_property("title", title)
        return lambda detail: record_property("detail", detail)
    return tag


def test_criterion_01_round_trip(criterion):
    note = criterion(1, "round trip bitwise, 1000 x K in {16,32,64,128}")
    start = time.perf_counter()
    x = np.random.default_rng(1).standard_normal((1000, 512)).astype(np.float32)
    ok = True
    for K in (16, 32, 64, 128):
        part = partition(512, K)
        rng = make_rng(K)
        maps = np.stack([sample_uniform(part, rng).as_array() for _ in range(1000)])
        back = unprotect_rows(protect_rows(x, part, maps), part, maps)
        ok &= back.tobytes() == x.tobytes()
        ok &= unprotect(protect(x[0], sample_uniform(part, 3)), sample_uniform(part, 3)).tobytes() == x[0].tobytes()
    elapsed = time.perf_counter() - start
    note(f"{elapsed:.2f}s")
    assert ok
    assert elapsed < 5


def test_criterion_02_combinatorics(criterion):
    note = criterion(2, "count_with_displacement vs enumeration, N<=8")
    start = time.perf_counter()
    for n in range(1, 9):
        hist = displacement_histogram(n)
        counts = [count_with_displacement(n, p) for p in range(n + 1)]
        assert counts == [hist.get(p, 0) for p in range(n + 1)]
        assert sum(counts) == math.factorial(n)
    assert [count_with_displacement(4, p) for p in (2, 3, 4)] == [6, 8, 9]
    elapsed = time.perf_counter() - start
    note(f"{elapsed:.2f}s")
    assert elapsed < 10


def test_criterion_03_sampler_uniformity(criterion):
    note = criterion(3, "sampler uniformity")
    part4 = partition(512, 128)
    rng = make_rng(2024)
    freq = Counter(sample_uniform(part4, rng).mapping for _ in range(24_000))
    part5 = partition(5, 1)
    rng = make_rng(2025)
    freq5 = Counter(sample_with_displacement(part5, 3, rng).mapping for _ in range(24_000))
    note(f"N=4 range [{min(freq.values())},{max(freq.values())}], "
         f"N=5 P=3 range [{min(freq5.values())},{max(freq5.values())}]")
    assert len(freq) == 24 and all(850 <= c <= 1150 for c in freq.values())
    assert len(freq5) == math.comb(5, 3) * 2
    assert all(900 <= c <= 1500 for c in freq5.values())


def test_criterion_04_metric_oracles(criterion):
    note = criterion(4, "eer / threshold_at_fmr vs exhaustive scan")
    rng = np.random.default_rng(4)
    for k in range(100):
        n_mat = int(rng.integers(50, 950))
        scores = np.round(np.clip(rng.normal(0, 0.3, 1000), -1, 1), int(rng.integers(2, 5)))
        scores[:n_mat] = np.clip(scores[:n_mat] + 0.5, -1, 1)
        mated, non = scores[:n_mat], scores[n_mat:]
        ss = ScoreSet(mated, non)
        rate, thr = eer(ss)
        o_rate, o_thr = eer_scan_fast(mated, non)
        assert thr == o_thr and rate == float(o_rate), k
        for target in (0.001, 0.01, 0.1):
            op = threshold_at_fmr(ss, target)
            o_t, o_fmr = threshold_scan_fast(non, target)
            assert op.threshold == o_t and op.fmr == float(o_fmr), (k, target)
    assert eer(ScoreSet([0.9, 0.8], [0.1, 0.2]))[0] == 0.0
    same = np.linspace(-0.5, 0.5, 101)
    assert eer(ScoreSet(same, same))[0] == 0.5
    note("100 score sets, exact agreement")


def test_criterion_05_rsr_boundaries(criterion, reference_dataset):
    note = criterion(5, "RSR boundary cases")
    ds = reference_dataset
    orig = {r: ds.embeddings[k] for k, r in enumerate(ds.ids)}
    for t in (-1.0, 0.0, 0.5, 0.99, math.nextafter(1.0, 0.0)):
        assert rsr(orig, orig, IDENTITY, t) == 1.0
    part = partition(512, 16)
    prot = {r: protect(v, sample_uniform(part, 1000 + k)) for k, (r, v) in enumerate(orig.items())}
    rec = {r: known_seed_attack(v, 1000 + k, part=part) for k, (r, v) in enumerate(prot.items())}
    value = rsr(rec, orig, IDENTITY, 0.999999)
    note(f"unprotected 1.0, known-seed {value}")
    assert value == 1.0


def test_criterion_06_table_iii_trend(criterion, reference_dataset):
    note = criterion(6, "RSR weakly decreasing in P; RSR(128,2) > RSR(32,16)")
    start = time.perf_counter()
    grid = rsr_sweep(reference_dataset, [32, 64, 128], seed=7)
    elapsed = time.perf_counter() - start
    for t in (0.001, 0.01):
        for K in (32, 64, 128):
            vals = [v for _, v in grid.series(K, t)]
            assert all(a >= b for a, b in zip(vals, vals[1:])), (K, t, vals)
        assert grid.value(128, 2, t) > grid.value(32, 16, t)
    note(f"RSR(128,2)={grid.value(128, 2, 0.001):.4f} RSR(32,16)={grid.value(32, 16, 0.001):.4f} "
         f"at 0.1%, {elapsed:.1f}s")
    assert elapsed < 60


def test_criterion_07_brute_force(criterion):
    note = criterion(7, "brute force N=4 within 24; 32! search space")
    rng = np.random.default_rng(7)
    part = partition(512, 128)
    worst = 0
    for s in range(20):
        v = normalize(rng.standard_normal(512))
        rep = brute_force_attack(protect(v, sample_uniform(part, s)), v, part, 0.999, 10**6)
        assert rep.success and rep.best_score == 1.0 and rep.candidates_tried <= 24
        worst = max(worst, rep.candidates_tried)
    v = normalize(rng.standard_normal(512))
    p16 = partition(512, 16)
    rep = brute_force_attack(protect(v, sample_uniform(p16, 1)), v, p16, 0.999, 100)
    note(f"worst N=4 candidates {worst}, K=16 space {rep.search_space_size}")
    assert rep.search_space_size == 263130836933693530167218012160000000


def test_criterion_08_table_ii_trend(criterion, reference_dataset):
    note = criterion(8, "probe accuracy: unprotected >= 0.90, K=16 in [0.40,0.60], K=128 >= K=16")
    ds = reference_dataset
    start = time.perf_counter()
    evals = {}
    for K in (16, 128):
        part = partition(512, K)
        evals[f"k{K}"] = protect_rows(ds.embeddings, part, record_mappings(ds, part, 7))
    _, reps = cross_validate(ds.embeddings, ds.attributes, evals, folds=5, seed=7)
    elapsed = time.perf_counter() - start
    u, a16, a128 = reps["unprotected"].mean, reps["k16"].mean, reps["k128"].mean
    note(f"unprotected {u:.3f}, K=16 {a16:.3f}, K=128 {a128:.3f}, {elapsed:.1f}s")
    assert u >= 0.90
    assert 0.40 <= a16 <= 0.60
    assert a128 >= a16
    assert elapsed < 30


def test_criterion_09_binary_io(criterion, tmp_path):
    note = criterion(9, "binary round trip on 10,000 records; truncation offset")
    ds = generate(SynthSpec(n_identities=5000, samples_per_identity=2, seed=9))
    assert len(ds) == 10_000
    path = write_dataset(ds, tmp_path / "big.pseb")
    back = read_dataset(path)
    assert back.equals(ds)
    blob = path.read_bytes()
    assert to_bytes(back) == blob
    with pytest.raises(MalformedFile) as e:
        from_bytes(blob[:-1])
    # the last field is the final record's embedding of 4*S bytes
    expected = len(blob) - 4 * ds.S
    note(f"{len(blob)} bytes, truncation offset {e.value.offset} (expected {expected})")
    assert e.value.offset == expected


def test_criterion_10_determinism(criterion, tmp_path):
    note = criterion(10, "rsr-sweep CSV byte-identical, --threads 1 vs 8")
    bodies = []
    for t in (1, 8):
        out = tmp_path / f"threads{t}"
        assert main(["rsr-sweep", "--seed", "7", "--threads", str(t), "-o", str(out)]) == 0
        bodies.append((out / "rsr.csv").read_bytes())
    note(f"{len(bodies[0])} bytes each")
    assert bodies[0] == bodies[1]
