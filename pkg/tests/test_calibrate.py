import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpbf_twin.calibrate import (ALPHA_CLAMP, CalibConfig, ColdPoolError, GaussianSpec,
                                 calibrate_absorptivity, calibration_loss, fit_length_samples,
                                 kl_gaussian, length_stats, propagate_uq, sample_alpha,
                                 synthetic_length_observations, write_histograms)
from stubs import LinearPair

P, V, T_SUB = 300.0, 1.5, 400.0
G = P / (200.0 * V)


def test_kl_reference_values():
    assert kl_gaussian((0.0, 1.0), (1.0, 1.0)) == pytest.approx(0.5)
    assert kl_gaussian((0.3, 0.7), (0.3, 0.7)) == 0.0
    assert kl_gaussian((0.0, 1.0), (1.0, 2.0)) == pytest.approx(math.log(2) - 0.25)
    assert kl_gaussian((0.0, 1.0), (1.0, 2.0), "unnormalized") == pytest.approx(math.log(2) - 1.0)
    with pytest.raises(ValueError):
        kl_gaussian((0.0, 0.0), (1.0, 1.0))
    with pytest.raises(ValueError):
        kl_gaussian((0.0, 1.0), (1.0, 1.0), "other")


@pytest.mark.parametrize("variant", ["standard", "unnormalized"])
def test_kl_gradient(variant):
    p, q = (0.4, 0.8), (1.1, 1.7)
    _, g = kl_gaussian(p, q, variant, grad=True)
    h = 1e-6
    fd_mu = (kl_gaussian((p[0] + h, p[1]), q, variant) - kl_gaussian((p[0] - h, p[1]), q, variant))
    fd_sd = (kl_gaussian((p[0], p[1] + h), q, variant) - kl_gaussian((p[0], p[1] - h), q, variant))
    assert g == pytest.approx((fd_mu / (2 * h), fd_sd / (2 * h)), rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(0.05, 5), st.floats(-5, 5), st.floats(0.05, 5))
def test_kl_non_negative(m1, s1, m2, s2):
    assert kl_gaussian((m1, s1), (m2, s2)) >= -1e-12


def test_sample_alpha_seeded_and_clamped():
    spec = GaussianSpec.from_sigma(0.3, 0.5)
    a, eps, clamped = sample_alpha(spec, 500, seed=4)
    b, _, _ = sample_alpha(spec, 500, seed=4)
    assert np.array_equal(a, b)
    assert a.min() >= ALPHA_CLAMP[0] and a.max() <= ALPHA_CLAMP[1] and clamped.any()
    assert np.array_equal(clamped, (0.3 + 0.5 * eps < ALPHA_CLAMP[0]) | (0.3 + 0.5 * eps > ALPHA_CLAMP[1]))


def test_length_stats_linear_stub():
    pair = LinearPair()
    alpha = np.array([0.2, 0.3, 0.4])
    st_ = length_stats(alpha, P, V, T_SUB, pair, want_grad=True)
    L = (1000.0 * alpha + 150.0) * G
    assert st_.mean == pytest.approx(L.mean()) and st_.std == pytest.approx(L.std())
    assert st_.d_mean == pytest.approx(np.full(3, 1000.0 * G / 3))
    with pytest.raises(ColdPoolError):
        length_stats(alpha, P, V, T_SUB, LinearPair(c_T=0.1))


def test_curve_and_direct_losses_agree():
    pair = LinearPair()
    spec = GaussianSpec.from_sigma(0.3, 0.04)
    target = GaussianSpec.from_sigma(700.0, 60.0)
    eps = np.random.default_rng(0).standard_normal(200)
    out = {}
    for method in ("curve", "direct"):
        cfg = CalibConfig(P, V, T_SUB, samples=200, method=method)
        curve = None
        if method == "curve":
            from lpbf_twin.calibrate import LengthCurve
            curve = LengthCurve(pair, P, V, T_SUB, cfg.smoothing)
        out[method] = calibration_loss(spec, eps, target, cfg, pair, curve=curve)
    assert out["curve"][0] == pytest.approx(out["direct"][0], rel=1e-10)
    assert out["curve"][1] == pytest.approx(out["direct"][1], rel=1e-8)


@pytest.mark.parametrize("method", ["curve", "direct"])
def test_calibration_matches_closed_form(method):
    # L is linear in alpha, so zero KL pins the alpha moments over the frozen draws
    m_L, s_L = 720.0, 40.0
    cfg = CalibConfig(P, V, T_SUB, samples=100, epochs=600, lr=0.02, method=method)
    eps = np.random.default_rng(cfg.seed).standard_normal(cfg.samples)
    sigma = s_L / (1000.0 * G * eps.std())
    mu = (m_L / G - 150.0) / 1000.0 - sigma * eps.mean()
    res = calibrate_absorptivity(GaussianSpec.from_sigma(m_L, s_L), cfg, LinearPair())
    assert res.kl < 1e-6
    assert res.spec.mu == pytest.approx(mu, rel=1e-3)
    assert res.spec.sigma == pytest.approx(sigma, rel=1e-2)


def test_calibration_config_validation():
    with pytest.raises(ValueError):
        CalibConfig(P, V, T_SUB, method="fast")
    with pytest.raises(ValueError):
        CalibConfig(P, V, T_SUB, samples=1)


def test_length_observations_fit():
    x, spec = synthetic_length_observations(GaussianSpec.from_sigma(500.0, 30.0, "um"), 2000, seed=1)
    assert spec.mu == pytest.approx(500.0, abs=3.0) and spec.sigma == pytest.approx(30.0, rel=0.05)
    assert fit_length_samples(x) == spec


def test_uq_with_linear_roughness(tmp_path):
    spec = GaussianSpec.from_sigma(0.3, 0.03)
    out = propagate_uq(spec, P, V, T_SUB, LinearPair(ra_line=(10.0, 5.0)), samples=400, seed=2)
    alpha, _, _ = sample_alpha(spec, 400, seed=2)
    assert out["Ra"]["mean"] == pytest.approx(10.0 + 5.0 * alpha.mean())
    assert out["Ra"]["p50"] == pytest.approx(np.percentile(10.0 + 5.0 * alpha, 50))
    assert out["L"]["std"] == pytest.approx(1000.0 * G * alpha.std())
    assert sum(out["T_peak"]["hist_counts"]) == 400 and out["meta"]["excluded"] == 0
    p = tmp_path / "h.csv"
    write_histograms(out, p)
    assert len(p.read_text().splitlines()) == 1 + 4 * 20
