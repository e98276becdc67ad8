import math

import numpy as np
import pytest
from conftest import random_cmat
from hypothesis import given, settings
from hypothesis import strategies as st

from spoofsim import estimators as est
from spoofsim import metrics as mt
from spoofsim.array_channel import ChannelDraw, complex_normal, composite_matrices, steering_matrix
from spoofsim.errors import ModelError, NotIdentifiableError
from spoofsim.harness import TrialPlan, run_trials
from spoofsim.scenario import PI, ArrayConfig, UserLink, reference_scenario

ARR = ArrayConfig()


def mc_bmse(estimate, k_b, k_e, sigma2, n=10_000, seed=0):
    rng = np.random.default_rng(seed)
    h = complex_normal(rng, (k_b.shape[1], n))
    y = k_b @ h + k_e @ complex_normal(rng, (k_e.shape[1], n)) + complex_normal(rng, (k_b.shape[0], n), sigma2)
    return float(np.mean(np.sum(np.abs(estimate(y) - h) ** 2, axis=0)))


def random_link(rng, n_paths, power=1.0):
    return UserLink(tuple(rng.uniform(0, PI, n_paths)), power)


def test_lse_passive_is_noise_term():
    cfg = reference_scenario()
    a_b = steering_matrix(cfg.bobs[0], ARR)
    rep = mt.bmse_lse_closed_form(a_b, steering_matrix(cfg.eves[0], ARR), 1000.0, math.inf)
    expected = np.trace(np.linalg.inv(a_b.conj().T @ a_b)).real / 1000.0
    assert rep.closed_form == pytest.approx(expected, rel=1e-12)
    assert rep.floor == 0.0


def test_lse_closed_form_matches_monte_carlo():
    cfg = reference_scenario()
    k_b, k_e = composite_matrices(cfg, 0)
    rep = mt.bmse_lse_closed_form(steering_matrix(cfg.bobs[0], ARR), steering_matrix(cfg.eves[0], ARR),
                                  cfg.snr_b(), cfg.ssr())
    assert mc_bmse(lambda y: est.lse(y, k_b), k_b, k_e, 1.0) == pytest.approx(rep.closed_form, rel=0.05)


def test_lse_orthonormal_same_subspace_floor():
    q, _ = np.linalg.qr(random_cmat(np.random.default_rng(3), (10, 3)))
    rep = mt.bmse_lse_closed_form(q, q, 100.0, 4.0)
    direct = np.trace(q @ q.conj().T @ q @ q.conj().T).real / 4.0
    assert rep.floor == pytest.approx(direct, rel=1e-12)
    assert rep.floor == pytest.approx(3 / 4.0, rel=1e-12)


def test_floor_bounds_reference_strict():
    cfg = reference_scenario()
    a_b, a_e = steering_matrix(cfg.bobs[0], ARR), steering_matrix(cfg.eves[0], ARR)
    rep = mt.bmse_lse_closed_form(a_b, a_e, 1000.0, 1.0)
    lo, hi = rep.bounds
    assert lo < rep.floor < hi


def test_floor_bounds_lower_vanishes_when_eve_has_fewer_paths():
    rng = np.random.default_rng(0)
    a_b = steering_matrix(random_link(rng, 3), ARR)
    a_e = steering_matrix(random_link(rng, 1), ARR)
    lo, hi = mt.lse_floor_bounds(a_b, a_e, 1.0)
    assert lo == 0.0 and hi > 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4), st.integers(1, 4), st.floats(0.01, 100.0))
def test_floor_bounds_sandwich_random(seed, l_b, l_e, ssr):
    rng = np.random.default_rng(seed)
    a_b = steering_matrix(random_link(rng, l_b), ARR)
    a_e = steering_matrix(random_link(rng, l_e), ARR)
    try:
        rep = mt.bmse_lse_closed_form(a_b, a_e, 10.0, ssr)
    except NotIdentifiableError:
        return
    lo, hi = rep.bounds
    slack = 1e-9 * max(1.0, hi)
    assert lo - rep.floor <= slack and rep.floor - hi <= slack


def test_floor_bounds_same_matrix_random_ordering():
    rng = np.random.default_rng(1)
    for _ in range(100):
        a = steering_matrix(random_link(rng, 3), ARR)
        try:
            rep = mt.bmse_lse_closed_form(a, a, 1.0, 2.0)
        except NotIdentifiableError:
            continue
        lo, hi = rep.bounds
        assert lo <= rep.floor + 1e-9 * hi and rep.floor <= hi * (1 + 1e-9)


def test_rank_deficient_rejected():
    a = steering_matrix((0.3, 0.3), ARR)
    with pytest.raises(NotIdentifiableError):
        mt.lse_floor_bounds(a, a, 1.0)
    with pytest.raises(NotIdentifiableError):
        mt.bmse_lse_closed_form(a, a, 1.0, 1.0)
    with pytest.raises(NotIdentifiableError):
        mt.bmse_mle_closed_form(a, a, 1.0)


def test_mle_white_disturbance_reduces_to_lse():
    cfg = reference_scenario()
    k_b, _ = composite_matrices(cfg, 0)
    rep = mt.bmse_mle_closed_form(k_b, np.zeros((10, 3)), 2.0)
    assert rep.closed_form == pytest.approx(2.0 * np.trace(np.linalg.inv(k_b.conj().T @ k_b)).real, rel=1e-12)


def test_mle_high_snr_disjoint_vanishes():
    k_b, k_e = composite_matrices(reference_scenario(snr_b_db=120.0), 0)
    rep = mt.bmse_mle_closed_form(k_b, k_e, 1.0)
    assert rep.closed_form < 1e-6
    assert rep.floor == pytest.approx(0.0, abs=1e-12)


def test_mle_overlap_floor():
    b = UserLink((0.0, PI / 10, PI / 5), 1e3)
    e = UserLink((PI / 10, PI / 5), 1e3)
    k_b = math.sqrt(b.power) * steering_matrix(b, ARR)
    k_e = math.sqrt(e.power) * steering_matrix(e, ARR)
    rep = mt.bmse_mle_closed_form(k_b, k_e, 1.0)
    assert rep.floor == pytest.approx(mt.mle_overlap_floor(k_b, k_e), abs=1e-9)
    assert rep.floor > 0.1
    # the floor is reached as sigma^2 -> 0
    assert mt.bmse_mle_closed_form(k_b, k_e, 1e-9).closed_form == pytest.approx(rep.floor, rel=1e-6)


def test_mle_matches_monte_carlo():
    cfg = reference_scenario()
    k_b, k_e = composite_matrices(cfg, 0)
    r_dd = est.disturbance_correlation(k_e, 1.0)
    rep = mt.bmse_mle_closed_form(k_b, k_e, 1.0)
    assert mc_bmse(lambda y: est.mle(y, k_b, r_dd), k_b, k_e, 1.0) == pytest.approx(rep.closed_form, rel=0.05)
    assert rep.extras["projector_form"] == pytest.approx(rep.closed_form, rel=1e-9)


def test_mmse_no_information():
    rep = mt.bmse_mmse_closed_form(np.zeros((10, 3)), np.zeros((10, 2)), 1.0)
    assert rep.closed_form == pytest.approx(3.0, abs=1e-12)


def test_mmse_reference_floor_and_limit():
    k_b, k_e = composite_matrices(reference_scenario(snr_b_db=120.0), 0)
    rep = mt.bmse_mmse_closed_form(k_b, k_e, 1.0)
    assert rep.floor == pytest.approx(0.0, abs=1e-9)
    assert rep.closed_form < 1e-6
    assert np.trace(np.linalg.inv(rep.extras["bim"])).real == pytest.approx(rep.closed_form, rel=1e-9)


def test_mmse_overlap_floor_positive():
    cfg = reference_scenario(phi=0.0)
    k_b, k_e = composite_matrices(cfg, 0)
    rep = mt.bmse_mmse_closed_form(k_b, k_e, 1.0)
    assert rep.floor > 0.1
    assert rep.extras["ryy_form"] == pytest.approx(rep.closed_form, rel=1e-9)


def test_mmse_matches_monte_carlo():
    cfg = reference_scenario()
    k_b, k_e = composite_matrices(cfg, 0)
    r_yy = est.data_correlation(k_b, k_e, 1.0)
    rep = mt.bmse_mmse_closed_form(k_b, k_e, 1.0)
    assert mc_bmse(lambda y: est.mmse(y, k_b, r_yy), k_b, k_e, 1.0) == pytest.approx(rep.closed_form, rel=0.05)


def test_naive_semianalytic_matches_simulation():
    cfg = reference_scenario(snr_b_db=20.0)
    k_b, _ = composite_matrices(cfg, 0)
    rep = mt.bmse_lmmse_naive_semianalytic(k_b, cfg.eves[0], cfg.eve_uncertainty, 1.0, ARR, 2000,
                                           np.random.default_rng(0))
    recs = run_trials(cfg, TrialPlan(trials=2000, estimators=("lmmse-naive",)))
    mc = math.fsum(r["lmmse-naive"][0] for r in recs) / len(recs)
    assert mc == pytest.approx(rep.closed_form, rel=0.08)
    assert rep.extras["delta"] > 0
    assert rep.extras["approx"] == pytest.approx(rep.extras["bmse_mmse"] + rep.extras["delta"])
    with pytest.raises(ValueError):
        mt.bmse_lmmse_naive_semianalytic(k_b, cfg.eves[0], cfg.eve_uncertainty, 1.0, ARR, 0,
                                         np.random.default_rng(0))


def _setup_downlink(seed=0):
    cfg = reference_scenario()
    rng = np.random.default_rng(seed)
    a_b = [steering_matrix(b, ARR) for b in cfg.bobs]
    a_e = [steering_matrix(e, ARR) for e in cfg.eves]
    draw = ChannelDraw(tuple(complex_normal(rng, b.n_paths) for b in cfg.bobs),
                       tuple(complex_normal(rng, e.n_paths) for e in cfg.eves), np.zeros((10, 8)))
    return cfg, a_b, a_e, draw


def test_precoder_unit_norm():
    _, a_b, _, draw = _setup_downlink()
    w = mt.matched_filter_precoder(draw.h_b, a_b)
    assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(w[:, 1] * np.linalg.norm(np.column_stack([a @ h for a, h in zip(a_b, draw.h_b)])),
                               (a_b[1] @ draw.h_b[1]).conj(), atol=1e-12)
    with pytest.raises(ModelError):
        mt.matched_filter_precoder([np.zeros(3), np.zeros(2)], a_b)


def test_sinr_uses_transpose():
    _, a_b, a_e, draw = _setup_downlink(1)
    w = mt.matched_filter_precoder(draw.h_b, a_b)
    g = a_b[0] @ draw.h_b[0]
    num = abs(g @ w[:, 0]) ** 2
    den = abs(g @ w[:, 1]) ** 2
    assert mt.downlink_sinr(draw.h_b[0], a_b[0], w, 0, 50.0) == pytest.approx(50 * num / (50 * den + 1), rel=1e-12)


def test_perfect_csi_bob_beats_eve():
    _, a_b, a_e, draw = _setup_downlink(2)
    w = mt.matched_filter_precoder(draw.h_b, a_b)
    recs = mt.sinr_and_secrecy(draw, w, a_b, a_e, 1000.0)
    assert len(recs) == 2
    for r in recs:
        assert r["secrecy"] == pytest.approx(max(r["rate_b"] - r["rate_e"], 0.0))
        assert r["rate_b"] == pytest.approx(math.log2(1 + r["sinr_b"]))
    assert mt.secrecy_rate(1.0, 2.0) == 0.0 and mt.secrecy_rate(3.0, 1.0) == 2.0


def test_report_invariants():
    cfg = reference_scenario()
    rep = mt.bmse_lse_closed_form(steering_matrix(cfg.bobs[0], ARR), steering_matrix(cfg.eves[0], ARR),
                                  1000.0, 1.0)
    lo, hi = rep.bounds
    assert 0 <= lo <= rep.floor <= hi and rep.closed_form >= rep.floor
