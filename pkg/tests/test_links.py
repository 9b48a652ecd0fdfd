import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plsprobit import delta_weight, generalized_residual, link_bundle

import oracles


def test_bundle_at_zero():
    b = link_bundle(0.0)
    assert b.Phi == pytest.approx(0.5, abs=1e-15)
    assert b.phi == pytest.approx(oracles.PHI_AT_0, abs=1e-15)
    assert b.lam == pytest.approx(oracles.LAMBDA_AT_0, rel=1e-14)
    assert b.lam_prime == 0.0


def test_cdf_matches_quantile_oracle():
    b = link_bundle(oracles.PHI_INV_09)
    assert b.Phi == pytest.approx(0.9, abs=1e-12)


def test_tail_stability_no_overflow():
    for g in (8.0, -8.0, 37.0, -37.0, 200.0):
        b = link_bundle(g)
        assert np.isfinite(b.lam) and b.lam >= 0.0
        assert np.isfinite(b.lam_prime)
        assert 0.0 < b.Phi < 1.0


def test_clamp_bounds():
    b = link_bundle(10.0)
    assert b.Phi == 1.0 - 1e-12
    assert link_bundle(-10.0).Phi == 1e-12


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        link_bundle(np.nan)
    with pytest.raises(ValueError):
        link_bundle(np.inf)
    with pytest.raises(ValueError):
        generalized_residual(1, np.nan)


def test_generalized_residual_values():
    assert generalized_residual(1, 0.0) == pytest.approx(oracles.GENRES_1_AT_0, rel=1e-13)
    assert generalized_residual(0, 0.0) == pytest.approx(-oracles.GENRES_1_AT_0, rel=1e-13)
    assert generalized_residual(1, 1.0) == pytest.approx(oracles.GENRES_1_AT_1, rel=1e-12)


def test_generalized_residual_sign():
    for g in (-2.0, -0.3, 0.4, 3.0):
        b = link_bundle(g)
        assert np.sign(generalized_residual(1, g)) == np.sign(1 - b.Phi)
        assert np.sign(generalized_residual(0, g)) == np.sign(0 - b.Phi)


def test_residual_rejects_nonbinary():
    with pytest.raises(ValueError):
        generalized_residual(0.5, 0.0)
    with pytest.raises(ValueError):
        delta_weight(2, 0.0)


def test_delta_weight_values():
    assert delta_weight(1, 0.0) == pytest.approx(oracles.DELTA_MEAN_AT_0, rel=1e-13)
    # First term is mean-zero, so the Y-expectation equals -Lambda(0) phi(0).
    b = link_bundle(0.0)
    expectation = b.Phi * delta_weight(1, 0.0) + (1 - b.Phi) * delta_weight(0, 0.0)
    assert expectation == pytest.approx(oracles.DELTA_MEAN_AT_0, rel=1e-13)
    assert delta_weight(0, 1.0) == pytest.approx(oracles.DELTA_0_AT_1, rel=1e-12)


def test_residual_expectation_is_exactly_zero():
    # Phi Lam (1-Phi) + (1-Phi) Lam (0-Phi) cancels algebraically.
    for g in np.linspace(-6, 6, 41):
        b = link_bundle(float(g))
        e = b.Phi * generalized_residual(1, float(g)) + (1 - b.Phi) * generalized_residual(
            0, float(g)
        )
        assert abs(e) <= 1e-14


def test_lambda_positive_and_even():
    for g in np.linspace(0.0, 12.0, 49):
        b_pos = link_bundle(float(g))
        b_neg = link_bundle(float(-g))
        assert b_pos.lam > 0
        assert b_pos.lam == pytest.approx(b_neg.lam, rel=1e-12)
        assert b_pos.lam_prime == pytest.approx(-b_neg.lam_prime, rel=1e-12, abs=1e-300)


def test_lambda_identity_against_fields():
    # lam == phi / (Phi (1-Phi)) in terms of the returned (clamped) Phi.
    # Restricted to |g| <= 3.5: beyond that the double-precision Phi field
    # cannot represent the tail to 1e-12 relative (see decisions ledger).
    for g in np.linspace(-3.5, 3.5, 29):
        b = link_bundle(float(g))
        assert b.lam == pytest.approx(b.phi / (b.Phi * (1 - b.Phi)), rel=1e-12)


def test_lambda_prime_matches_finite_difference():
    h = 1e-5
    for g in range(-3, 4):
        lam_up = link_bundle(g + h).lam
        lam_dn = link_bundle(g - h).lam
        fd = (lam_up - lam_dn) / (2 * h)
        ana = link_bundle(float(g)).lam_prime
        if g == 0:
            assert abs(ana - fd) < 1e-9
        else:
            assert ana == pytest.approx(fd, rel=1e-6)


def test_matches_erf_oracle_on_grid():
    for g in np.linspace(-5, 5, 21):
        b = link_bundle(float(g))
        assert b.Phi == pytest.approx(oracles.norm_cdf(float(g)), abs=1e-14)
        assert b.lam == pytest.approx(oracles.lam_weight(float(g)), rel=1e-12)
        assert b.lam_prime == pytest.approx(
            oracles.lam_weight_prime(float(g)), rel=1e-9, abs=1e-12
        )


def test_vectorized_matches_scalar():
    g = np.array([-2.0, -0.5, 0.0, 1.5, 4.0])
    b = link_bundle(g)
    for i, gi in enumerate(g):
        bi = link_bundle(float(gi))
        assert b.phi[i] == bi.phi
        assert b.Phi[i] == bi.Phi
        assert b.lam[i] == bi.lam
        assert b.lam_prime[i] == bi.lam_prime
    y = np.array([1.0, 0.0, 1.0, 0.0, 1.0])
    r = generalized_residual(y, g)
    d = delta_weight(y, g)
    for i in range(5):
        assert r[i] == generalized_residual(float(y[i]), float(g[i]))
        assert d[i] == delta_weight(float(y[i]), float(g[i]))


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-30, max_value=30, allow_nan=False))
def test_property_residual_mean_zero_and_even(g):
    b = link_bundle(g)
    e = b.Phi * generalized_residual(1, g) + (1 - b.Phi) * generalized_residual(0, g)
    assert abs(e) <= 1e-14
    assert link_bundle(-g).lam == pytest.approx(b.lam, rel=1e-12)
