import json
import math

import numpy as np
import pytest

from pemiu_toolkit.attack import (IDENTITY, RsrGrid, brute_force_attack, external_channel,
                                  gaussian_channel, identity_mappings, known_seed_attack,
                                  parse_channel, reconstruction_scores, record_mappings, rsr,
                                  rsr_sweep)
from pemiu_toolkit.core import cosine_similarity, normalize, partition
from pemiu_toolkit.errors import (ChannelGap, InvalidDisplacement, MissingOriginal,
                                  PartitionMismatch)
from pemiu_toolkit.metrics import ScoreSet, non_mated_scores, threshold_at_fmr
from pemiu_toolkit.pemiu import (BlockPermutation, protect, protect_rows, sample_uniform,
                                 sample_with_displacement, unprotect)


@pytest.fixture(scope="module")
def small_ds():
    from pemiu_toolkit.data import SynthSpec, generate
    return generate(SynthSpec(n_identities=60, seed=11))


def originals(ds):
    return {r: ds.embeddings[k] for k, r in enumerate(ds.ids)}


def test_unprotected_rsr_is_one(small_ds):
    orig = originals(small_ds)
    for thr in (-1.0, 0.0, 0.5, 0.999999, 1.0):
        assert rsr(orig, orig, IDENTITY, thr) == 1.0


def test_known_seed_restores_everything(small_ds):
    part = partition(512, 16)
    orig = originals(small_ds)
    prot = {r: protect(v, sample_uniform(part, 100 + k)) for k, (r, v) in enumerate(orig.items())}
    recovered = {r: known_seed_attack(v, 100 + k, part=part) for k, (r, v) in enumerate(prot.items())}
    assert rsr(recovered, orig, IDENTITY, 1.0) == 1.0
    for r in orig:
        assert recovered[r].tobytes() == orig[r].tobytes()


def test_rsr_errors(small_ds):
    orig = originals(small_ds)
    with pytest.raises(MissingOriginal):
        rsr({"ghost": orig[small_ds.ids[0]]}, orig, IDENTITY, 0.5)
    ext = external_channel({small_ds.ids[0]: orig[small_ds.ids[0]]})
    with pytest.raises(ChannelGap):
        rsr(orig, orig, ext, 0.5)


def test_rsr_weakly_decreasing_in_threshold(small_ds):
    part = partition(512, 64)
    orig = originals(small_ds)
    prot = {r: protect(v, sample_with_displacement(part, 5, 1)) for r, v in orig.items()}
    rates = [rsr(prot, orig, IDENTITY, t) for t in np.linspace(-0.2, 1.0, 25)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


def test_full_shuffle_rsr_small(reference_dataset):
    ds = reference_dataset
    part = partition(512, 16)
    xp = protect_rows(ds.embeddings, part, identity_mappings(ds, part, 7))
    op = threshold_at_fmr(ScoreSet([], non_mated_scores(xp, ds.identities)), 0.001)
    prot = {r: xp[k] for k, r in enumerate(ds.ids)}
    assert rsr(prot, originals(ds), IDENTITY, op) <= 0.05


def test_channel_kinds(rng):
    v = normalize(rng.standard_normal(512))
    assert IDENTITY("x", v) is not None and np.array_equal(IDENTITY("x", v), v)
    assert np.array_equal(gaussian_channel(0.0)("x", v), v)
    g = gaussian_channel(0.05, seed=3, renormalize=True)
    w = g("x", v)
    assert abs(np.linalg.norm(w.astype(np.float64)) - 1) < 1e-6
    assert np.array_equal(w, g("x", v))
    assert parse_channel("gaussian:0.05", 3, True) == g
    with pytest.raises(ValueError):
        parse_channel("dnn")
    with pytest.raises(ValueError):
        gaussian_channel(-1.0)


def test_known_seed_with_noise_beats_no_inversion(rng):
    part = partition(512, 32)
    ch = gaussian_channel(0.05, seed=1)
    wins = 0
    for s in range(20):
        v = normalize(rng.standard_normal(512))
        vp = protect(v, sample_uniform(part, s))
        rec = known_seed_attack(vp, s, ch, part=part)
        c_rec = cosine_similarity(rec, v)
        assert c_rec < 1.0
        wins += c_rec > cosine_similarity(ch("r", vp), v)
    assert wins == 20


def test_known_seed_wrong_seed_fails(rng):
    part = partition(512, 64)
    v = normalize(rng.standard_normal(512))
    vp = protect(v, sample_with_displacement(part, 6, 1))
    rec = known_seed_attack(vp, 2, part=part, displacement=6)
    assert not np.array_equal(rec, v)
    assert cosine_similarity(rec, v) < 1 - 1e-6


def test_known_seed_partition_mismatch(rng):
    v = normalize(rng.standard_normal(512))
    perm = sample_uniform(partition(512, 64), 1)
    with pytest.raises(PartitionMismatch):
        known_seed_attack(v, perm, part=partition(512, 32))
    with pytest.raises(PartitionMismatch):
        known_seed_attack(v[:256], perm)


def test_reconstruction_scores_external(small_ds):
    orig = originals(small_ds)
    table = {r: -v for r, v in orig.items()}
    s = reconstruction_scores(orig, orig, external_channel(table))
    assert np.all(s == -1.0)


# --- sweep ---------------------------------------------------------------------

def test_sweep_row_structure(small_ds):
    grid = rsr_sweep(small_ds, [32, 64, 128])
    for t in (0.001, 0.01):
        assert len([r for r in grid.rows if r.target_fmr == t]) == 13 + 7 + 3
    assert all(r.P != 1 for r in grid.rows)
    assert all(r.n_attacked == len(small_ds) for r in grid.rows)
    assert all(r.rsr == r.accepted / r.n_attacked for r in grid.rows)


def test_sweep_p_zero_rows(small_ds):
    grid = rsr_sweep(small_ds, [64], displacements=[0, 2])
    assert grid.value(64, 0, 0.001) == 1.0 and grid.value(64, 0, 0.01) == 1.0


def test_sweep_invalid_displacement(small_ds):
    with pytest.raises(InvalidDisplacement):
        rsr_sweep(small_ds, [128], displacements=[1])
    with pytest.raises(InvalidDisplacement):
        rsr_sweep(small_ds, [128], displacements=[5])


def test_sweep_matches_direct_rsr(small_ds):
    grid = rsr_sweep(small_ds, [64], displacements={64: [3]}, calibration="unprotected", seed=5)
    perm = sample_with_displacement(partition(512, 64), 3, 5)
    orig = originals(small_ds)
    prot = {r: protect(v, perm) for r, v in orig.items()}
    op = threshold_at_fmr(ScoreSet([], non_mated_scores(small_ds.embeddings, small_ds.identities)), 0.01)
    assert grid.value(64, 3, 0.01) == rsr(prot, orig, IDENTITY, op)


def test_sweep_calibrations_and_modes(small_ds):
    for cal in ("per-k", "per-cell", "unprotected"):
        g = rsr_sweep(small_ds, [128], calibration=cal)
        assert len(g.rows) == 6
    g = rsr_sweep(small_ds, [16, 128], mode="per-identity")
    assert [r.P for r in g.rows] == [None] * 4
    assert "uniform" in g.to_csv()


def test_sweep_threads_do_not_change_output(small_ds):
    a = rsr_sweep(small_ds, [32, 64], seed=3, threads=1).to_csv()
    b = rsr_sweep(small_ds, [32, 64], seed=3, threads=6).to_csv()
    assert a == b


def test_sweep_csv_header(small_ds):
    text = rsr_sweep(small_ds, [128]).to_csv()
    assert text.splitlines()[0] == "K,P,target_fmr,threshold,rsr,n_attacked,seed"


def test_record_mappings_differ_per_record(small_ds):
    part = partition(512, 16)
    maps = record_mappings(small_ds, part, 1)
    assert len({tuple(m) for m in maps}) > len(small_ds) - 2
    ident = identity_mappings(small_ds, part, 1)
    assert np.array_equal(ident[0], ident[1])


# --- brute force ---------------------------------------------------------------

def _victim(rng, K, seed, P=None):
    part = partition(512, K)
    v = normalize(rng.standard_normal(512))
    perm = sample_uniform(part, seed) if P is None else sample_with_displacement(part, P, seed)
    return part, v, protect(v, perm), perm


def test_brute_force_n4(rng):
    for s in range(10):
        part, v, vp, perm = _victim(rng, 128, s)
        rep = brute_force_attack(vp, v, part, 0.999, 24)
        assert rep.success and rep.candidates_tried <= 24
        assert rep.best_score == 1.0
        assert rep.recovered_permutation == perm
        assert cosine_similarity(unprotect(vp, rep.recovered_permutation), v) == 1.0
        assert rep.search_space_size == 24


def test_brute_force_n2(rng):
    part = partition(4, 2)
    v = normalize(rng.standard_normal(4))
    vp = protect(v, BlockPermutation(part, (1, 0)))
    rep = brute_force_attack(vp, v, part, 1.0, 100)
    assert rep.success and rep.candidates_tried == 2


def test_brute_force_large_space(rng):
    part, v, vp, _ = _victim(rng, 16, 4)
    rep = brute_force_attack(vp, v, part, 0.9, 1000)
    assert not rep.success and rep.candidates_tried == 1000
    assert rep.search_space_size == math.factorial(32) == 263130836933693530167218012160000000
    d = json.loads(rep.to_json())
    assert d["search_space_size"] == math.factorial(32)


def test_brute_force_exhaustive_unlimited_recovers(rng):
    for K in (64, 128):
        for s in range(3):
            part, v, vp, perm = _victim(rng, K, s)
            rep = brute_force_attack(vp, v, part, 1.0, math.factorial(part.N))
            assert rep.success and rep.best_score == 1.0 and rep.recovered_permutation == perm


def test_brute_force_low_displacement_found_early(rng):
    part, v, vp, perm = _victim(rng, 16, 9, P=2)
    rep = brute_force_attack(vp, v, part, 1.0, 10**4)
    assert rep.success and rep.candidates_tried <= 1 + math.comb(32, 2)
    assert rep.recovered_permutation == perm


def test_brute_force_random_order_reproducible(rng):
    part, v, vp, _ = _victim(rng, 64, 2)
    a = brute_force_attack(vp, v, part, 1.0, 50_000, order="random", seed=8)
    b = brute_force_attack(vp, v, part, 1.0, 50_000, order="random", seed=8)
    assert a.candidates_tried == b.candidates_tried
    assert a.success == b.success
    assert a.candidates_tried <= a.search_space_size


def test_brute_force_slow_path_agrees(rng):
    part, v, vp, perm = _victim(rng, 128, 5)
    fast = brute_force_attack(vp, v, part, 0.999, 24)
    ext_like = gaussian_channel(1e-9, seed=0)
    slow = brute_force_attack(vp, v, part, 0.999, 24, channel=ext_like)
    assert slow.success and slow.candidates_tried == fast.candidates_tried


def test_rsr_grid_lookup():
    g = RsrGrid([])
    with pytest.raises(KeyError):
        g.value(32, 4, 0.01)
