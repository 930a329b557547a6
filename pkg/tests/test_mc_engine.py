import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2dcast.mc_engine import (
    derive_seed,
    estimate,
    sample_first_slot,
    sample_slot_outcome,
    second_slot_snr_mean,
    simulate_baseline,
    simulate_collapsed,
    simulate_full,
)
from d2dcast.topology import GainMatrix, block_gain_matrix, geometric_gain_matrix, PathlossParams

from conftest import G01, G11


def combined(a, b):
    return math.hypot(a, b)


class TestFirstSlot:
    def test_zero_threshold_decodes_everyone(self):
        rng = np.random.default_rng(0)
        Z = sample_first_slot([0.0, 1.0, 5.0], 0.0, rng, size=100)
        assert Z.all()

    def test_zero_gain_never_decodes(self):
        rng = np.random.default_rng(0)
        Z = sample_first_slot([0.0, 1.0], 0.5, rng, size=1000)
        assert not Z[:, 0].any()

    def test_half_life(self):
        rng = np.random.default_rng(1)
        Z = sample_first_slot([G01], G01 * math.log(2), rng, size=10**5)
        sigma = math.sqrt(0.25 / 10**5)
        assert abs(Z.mean() - 0.5) <= 3 * sigma

    def test_second_slot_mean(self):
        gamma = np.array([[0.0, 2.0, 3.0], [1.0, 0.0, 4.0], [5.0, 6.0, 0.0]])
        Z = np.array([[True, False, True]])
        assert second_slot_snr_mean(Z, gamma).tolist() == [[5.0, 8.0, 3.0]]
        assert second_slot_snr_mean(np.zeros((1, 3), bool), gamma).tolist() == [[0.0, 0.0, 0.0]]


def test_slot_outcome_depends_on_class_counts_only(model_b):
    gm = block_gain_matrix(model_b, 8)
    rng = np.random.default_rng(4)
    for _ in range(20):
        out = sample_slot_outcome(gm, 1e4, rng)
        assert np.all(out.X >= 0)
        if not out.Z.any():
            assert np.all(out.X == 0)
        n1, n2 = out.Z[:4].sum(), out.Z[4:].sum()
        g = model_b.class_gains
        expected = np.where(gm.class_of == 1, n1 * g[0, 0] + n2 * g[1, 0], n1 * g[0, 1] + n2 * g[1, 1])
        own = np.where(out.Z, g[gm.class_of - 1, gm.class_of - 1], 0.0)
        assert np.allclose(out.X, expected - own)


@pytest.mark.parametrize("sim", [simulate_full, simulate_collapsed, simulate_baseline])
def test_zero_threshold_is_certain(model_b, sim):
    est = sim(block_gain_matrix(model_b, 6), 0.0, 500, 3)
    assert est.mean_success == 1.0 and est.all_success == 1.0
    assert est.stderr_mean == 0.0 and est.stderr_all == 0.0
    assert np.all(est.per_user_success == 1.0)


@pytest.mark.parametrize("sim", [simulate_full, simulate_collapsed, simulate_baseline])
def test_rejects_zero_trials(model_a, sim):
    with pytest.raises(ValueError):
        sim(block_gain_matrix(model_a, 3), 1.0, 0, 0)


def test_single_user_has_no_relay():
    gm = GainMatrix.from_dense([[0.0, 1000.0], [0.0, 0.0]])
    s = 700.0
    for sim in (simulate_full, simulate_collapsed):
        est = sim(gm, s, 10**5, 2)
        assert abs(est.mean_success - math.exp(-s / 1000.0)) <= 3 * math.sqrt(0.25 / 10**5)


def test_full_and_collapsed_agree(model_a):
    gm = block_gain_matrix(model_a, 20)
    full = simulate_full(gm, 50.0, 10**5, 7)
    coll = simulate_collapsed(gm, 50.0, 10**5, 7)
    assert abs(full.mean_success - coll.mean_success) <= 3 * combined(full.stderr_mean, coll.stderr_mean)
    assert abs(full.all_success - coll.all_success) <= 3 * combined(full.stderr_all, coll.stderr_all)
    assert coll.stderr_mean < full.stderr_mean
    assert coll.stderr_all < full.stderr_all


def test_class_path_matches_per_user_path(model_b):
    gm = block_gain_matrix(model_b, 30)
    s = 3000.0
    fast = simulate_collapsed(gm, s, 40000, 1)
    slow = simulate_collapsed(gm, s, 40000, 1, class_path=False)
    assert abs(fast.mean_success - slow.mean_success) <= 4 * combined(fast.stderr_mean, slow.stderr_mean)
    assert abs(fast.all_success - slow.all_success) <= 4 * combined(fast.stderr_all, slow.stderr_all)


class TestBaseline:
    K = 10

    @pytest.mark.parametrize("s", [10.0, 100.0, 1000.0])
    def test_closed_forms(self, model_a, s):
        est = simulate_baseline(block_gain_matrix(model_a, self.K), s, 10**5, 4)
        assert abs(est.mean_success - math.exp(-s / G01)) <= 3 * est.stderr_mean
        assert abs(est.all_success - math.exp(-s * self.K / G01)) <= 3 * max(est.stderr_all, 1e-12)


def test_phase_transition_million_users(model_a):
    K = 10**6
    gm = block_gain_matrix(model_a, K)
    s = 0.1 * G01 * math.log(K)
    assert simulate_collapsed(gm, s, 1000, 0).mean_success >= 0.95


def test_estimates_are_probabilities_and_ordered(model_b):
    gm = block_gain_matrix(model_b, 12)
    for est in estimate(gm, [1.0, 100.0, 5000.0, 1e5], 3000, 5, "collapsed", class_path=False):
        assert np.all((0 <= est.per_user_success) & (est.per_user_success <= 1))
        assert est.mean_success == pytest.approx(est.per_user_success.mean(), abs=1e-12)
        assert est.all_success <= est.mean_success


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(1, 12), st.integers(0, 2**32 - 1), st.booleans())
def test_scaling_is_bit_identical(lam, K, seed, class_path):
    from d2dcast.experiments import scenario_b

    gm = block_gain_matrix(scenario_b(), max(K, 2))
    s = 2000.0
    a = simulate_collapsed(gm, s, 2000, seed, class_path=class_path)
    b = simulate_collapsed(gm.scaled(lam), s * lam, 2000, seed, class_path=class_path)
    assert a.mean_success == b.mean_success
    assert a.all_success == b.all_success
    assert a.per_user_success.tobytes() == b.per_user_success.tobytes()


@pytest.mark.parametrize("class_path", [True, False])
def test_common_random_numbers_make_estimates_monotone(model_b, class_path):
    gm = block_gain_matrix(model_b, 16)
    grid = np.geomspace(10.0, 2e5, 25)
    ests = estimate(gm, grid, 5000, 9, "collapsed", class_path=class_path)
    mean = np.array([e.mean_success for e in ests])
    allp = np.array([e.all_success for e in ests])
    per_user = np.stack([e.per_user_success for e in ests])
    assert np.all(np.diff(mean) <= 0)
    assert np.all(np.diff(allp) <= 0)
    assert np.all(np.diff(per_user, axis=0) <= 0)


def test_thread_count_does_not_change_results():
    gm = geometric_gain_matrix(250.0, 40, PathlossParams(), seed=3)
    s = float(np.median(gm.station_gains))
    for estimator in ("full", "collapsed", "baseline"):
        a = estimate(gm, [s], 20000, 8, estimator, threads=1)[0]
        b = estimate(gm, [s], 20000, 8, estimator, threads=6)[0]
        assert 0 < a.mean_success < 1
        assert a.per_user_success.tobytes() == b.per_user_success.tobytes()
        assert (a.mean_success, a.all_success, a.stderr_mean, a.stderr_all) == (
            b.mean_success, b.all_success, b.stderr_mean, b.stderr_all)


def test_single_s_matches_batch(model_a):
    gm = block_gain_matrix(model_a, 50)
    batch = estimate(gm, [10.0, 500.0], 3000, 2, "collapsed")
    single = simulate_collapsed(gm, 500.0, 3000, 2)
    assert batch[1].mean_success == single.mean_success


def test_derive_seed_is_stable():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
