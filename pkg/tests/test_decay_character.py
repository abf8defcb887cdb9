import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sigmadamp.decay_character import (
    DEGENERATE,
    INDETERMINATE,
    OK,
    ZERO,
    DecayCharacterError,
    DecayCharacterEstimator,
    GaussianHat,
    PowerCutoff,
    RadialFunction,
    SpectralProfile,
    TabulatedRadial,
    decay_indicator,
    estimate_decay_character,
    homogeneous_norm,
    low_freq_energy,
    p_norm,
    read_profile_csv,
    shift_character,
    sphere_area,
)


def power(n, r, A=1.0, cutoff=1.0):
    return SpectralProfile(n, PowerCutoff(A, r, cutoff))


def test_sphere_area():
    assert sphere_area(1) == 2
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


def test_low_freq_energy_examples():
    assert low_freq_energy(power(1, 0), 0.5) == pytest.approx(1.0, rel=1e-8)
    for rho in (0.1, 0.5, 0.9):
        assert low_freq_energy(power(2, 0), rho) == pytest.approx(math.pi * rho**2, rel=1e-8)
        assert low_freq_energy(power(1, 1), rho) == pytest.approx(2 * rho**3 / 3, rel=1e-8)
    # beyond the cutoff only the support counts
    assert low_freq_energy(power(1, 0), 3.0) == pytest.approx(2.0, rel=1e-8)


def test_low_freq_energy_rejects_nonpositive_radius():
    with pytest.raises(DecayCharacterError):
        low_freq_energy(power(1, 0), 0.0)


def test_decay_indicator_examples():
    for rho in (0.01, 0.3, 0.9):
        assert decay_indicator(power(1, 0), 0, rho) == pytest.approx(2.0, rel=1e-8)
        assert decay_indicator(power(2, 1), 1, rho) == pytest.approx(math.pi / 2, rel=1e-8)
    assert decay_indicator(power(1, 0), 1, 0.1) == pytest.approx(200.0, rel=1e-8)
    with pytest.raises(DecayCharacterError):
        decay_indicator(power(1, 0), -0.5, 0.1)


def test_power_cutoff_needs_square_integrability():
    with pytest.raises(DecayCharacterError):
        power(1, -0.5)
    power(1, -0.49)


def test_divergent_callable_profile_detected():
    with pytest.raises(DecayCharacterError):
        low_freq_energy(SpectralProfile(1, RadialFunction(lambda r: r**-0.6)), 0.5)
    val = low_freq_energy(SpectralProfile(1, RadialFunction(lambda r: r**-0.45)), 0.5)
    assert val == pytest.approx(2 * 0.5**0.1 / 0.1, rel=1e-8)


def test_estimate_examples():
    est = estimate_decay_character(power(1, 0))
    assert est.status == OK
    assert est.r_star == pytest.approx(0.0, abs=0.02)
    assert est.P_value == pytest.approx(2.0, abs=0.02)
    assert estimate_decay_character(power(3, 1)).r_star == pytest.approx(1.0, abs=0.02)
    for n in (1, 2, 3):
        est = estimate_decay_character(SpectralProfile(n, GaussianHat(1.0, 1.0)))
        assert est.r_star == pytest.approx(0.0, abs=0.02)
        ball = sphere_area(n) / n
        assert est.P_value == pytest.approx(ball, rel=0.01)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("r", [0.0, 0.5, 1.0, 2.0])
def test_estimator_recovers_construction_exponent(n, r):
    assert estimate_decay_character(power(n, r)).r_star == pytest.approx(r, abs=0.05)


def test_estimator_statuses():
    flat = SpectralProfile(1, RadialFunction(lambda r: np.exp(-1 / np.maximum(r, 1e-300)),
                                             support=1.0))
    assert estimate_decay_character(flat).status == ZERO
    wobble = SpectralProfile(1, RadialFunction(
        lambda r: 1 + 0.9 * np.sin(3 * np.log(np.maximum(r, 1e-300))),
        support=1.0, origin_exponent=0.0))
    est = estimate_decay_character(wobble)
    assert est.status == INDETERMINATE and math.isnan(est.r_star)
    zero = estimate_decay_character(power(2, 0, A=0.0))
    assert zero.status == DEGENERATE


def test_tabulated_profile(tmp_path):
    rho = np.geomspace(1e-3, 2.0, 200)
    path = tmp_path / "prof.csv"
    path.write_text("rho,amp\n" + "".join(f"{r!r},{r**0.5!r}\n" for r in rho.tolist()))
    prof = SpectralProfile(2, read_profile_csv(path))
    assert prof(5e-4) == pytest.approx(5e-4**0.5, rel=1e-10)
    assert prof(3.0) == 0.0
    assert estimate_decay_character(prof).r_star == pytest.approx(0.5, abs=0.02)
    cfg = SpectralProfile.from_config({"kind": "tabulated", "path": str(path)}, n=2)
    assert cfg.amplitude == prof.amplitude
    with pytest.raises(DecayCharacterError):
        TabulatedRadial([0.0, 1.0], [1.0, 1.0])


def test_shift_character():
    base = power(1, 2)
    assert shift_character(base, 0) is base
    shifted = shift_character(base, 1)
    assert estimate_decay_character(shifted).r_star == pytest.approx(1.0, abs=0.05)
    with pytest.raises(DecayCharacterError):
        shift_character(power(1, 0), 1)
    with pytest.raises(DecayCharacterError):
        shift_character(base, -1)


def test_p_norm_examples():
    box = power(1, 0)
    assert float(p_norm(box, 0)) == pytest.approx(2 * math.sqrt(2), rel=1e-6)
    val = p_norm(box, 1)
    assert val.sobolev == pytest.approx(math.sqrt(2 / 3), rel=1e-8)
    assert val.value == pytest.approx(math.sqrt(2 / 3) + math.sqrt(2), rel=1e-6)
    zero = p_norm(power(1, 0, A=0.0))
    assert zero.value == 0.0 and zero.status == DEGENERATE


def test_gaussian_l2_norm_matches_real_space():
    # a Gaussian of std w in R^n has ||u||^2 = w^{-n} pi^{n/2} (unitary convention, amplitude 1)
    for n, w in [(1, 1.0), (2, 0.5), (3, 2.0)]:
        val = p_norm(SpectralProfile(n, GaussianHat(1.0, w))).sobolev
        assert val**2 == pytest.approx(math.pi ** (n / 2) / w**n, rel=1e-8)


def test_estimator_wrapper():
    est = DecayCharacterEstimator().fit(power(2, 1))
    assert est.status_ == OK and est.r_star_ == pytest.approx(1.0, abs=0.02)
    assert est.get_params()["k_max"] == 16
    X = est.transform([power(1, 0), power(1, 0.5)])
    assert X.shape == (2, 2)
    assert np.allclose(X[:, 0], [0.0, 0.5], atol=0.02)


# -- invariants -----------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(lam=st.floats(0.01, 100.0), r=st.floats(0.0, 2.0), n=st.integers(1, 3))
def test_scaling_invariance(lam, r, n):
    a = estimate_decay_character(power(n, r))
    b = estimate_decay_character(power(n, r, A=lam))
    assert b.r_star == pytest.approx(a.r_star, abs=0.05)
    assert b.P_value == pytest.approx(lam**2 * a.P_value, rel=1e-6)
    assert decay_indicator(power(n, r, A=lam), r, 0.2) == pytest.approx(
        lam**2 * decay_indicator(power(n, r), r, 0.2), rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 3), eta=st.floats(0.0, 1.5), slack=st.floats(0.01, 1.0))
def test_negative_sobolev_lower_bound(n, eta, slack):
    # rho^{-eta} |u| square integrable near 0 forces r* >= eta - n/2
    r = eta - n / 2 + slack
    prof = power(n, r)
    assert p_norm(prof).value >= 0
    assert estimate_decay_character(prof).r_star >= eta - n / 2 - 0.05


def test_singular_amplitude_overflow_near_origin():
    # rho^-1.25 overflows for rho ~ 1e-300 although rho^2 |u|^2 is integrable
    prof = power(3, -1.25)
    assert homogeneous_norm(prof) == pytest.approx(math.sqrt(8 * math.pi), rel=1e-8)
