import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erf

from sigmadamp.damping import DampingSpec
from sigmadamp.decay_character import PowerCutoff, SpectralProfile
from sigmadamp.decay_verify import (
    CONSISTENT,
    INCONCLUSIVE,
    VIOLATED,
    DecayRateRegressor,
    DecayVerifyError,
    anchored_xi_grid,
    clock_values,
    envelope_stability,
    envelope_sweep,
    fit_envelope_constant,
    fit_observed_rate,
    heat_oracle,
    heat_rate_exponent,
    predicted_rate,
)
from sigmadamp.phase_zones import ZoneParams


def test_prediction_examples():
    p = predicted_rate("Thm1_1_ii", 1, 0, 1, 0, 0, 0)
    assert p.exponent == pytest.approx(-0.25) and p.abscissa == "B"
    p = predicted_rate("Thm1_1_i", 2, 0.5, 2, 0, 0, 1)
    on_b = [b.exponent for b in p.branches if b.abscissa == "B"]
    assert on_b == pytest.approx([-1 / 3, -1 / 3])
    p = predicted_rate("Thm1_2_iii", 1, 0, 2, 0, 0, 0)
    assert p.exponent == pytest.approx(-0.5)


def test_ut_prediction_carries_b_prefactor():
    p = predicted_rate("Thm1_1_ii", 1, 0, 1, r0=0, r1=math.inf, quantity="ut")
    assert p.exponent == pytest.approx(-1.25) and p.b_power == -1
    p = predicted_rate("Thm1_2_ii", 2, 0.5, 3, r0=-1, r1=0, quantity="ut")
    assert p.abscissa == "Bhat" and p.b_power == 1


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_matsumura_rates_for_constant_damping(n, alpha):
    p = predicted_rate("Thm1_1_ii", 1, 0, n, alpha, 0, 0, damping=DampingSpec.constant())
    assert p.exponent == pytest.approx(-(n / 4 + alpha / 2))


def test_power_law_branch_reduction():
    grow = DampingSpec.power_law(1, 0.5, delta=0.25)
    p = predicted_rate("Thm1_1_i", 1, 0.25, 1, 0, r0=0, r1=0.5, damping=grow)
    # every B-branch decays slower in t than its t-branch twin
    assert p.branches[p.dominant].abscissa == "B"
    shrink = DampingSpec.power_law(1, -0.5, delta=0.25)
    p = predicted_rate("Thm1_1_i", 1, 0.25, 1, 0, r0=0, r1=0.5, damping=shrink)
    assert p.branches[p.dominant].abscissa == "t"
    assert p.abscissa == "B" and "dominant" in p.note
    q = predicted_rate("Thm1_1_i", 1, 0.25, 1, 0, 0, 0.5, quantity="ut", damping=shrink)
    assert [b.b_power for b in q.branches if b.source == "u1" and b.abscissa == "B"] == [-2]


def test_prediction_without_power_law_keeps_own_clock():
    t = np.linspace(0, 100, 201)
    tab = DampingSpec.tabulated(t, 1 + t, delta=0.25)
    p = predicted_rate("Thm1_1_i", 1, 0.25, 1, 0, 0, 0.5, damping=tab)
    assert p.abscissa == "B" and "not compared" in p.note


def test_prediction_errors():
    with pytest.raises(DecayVerifyError):
        predicted_rate("Thm1_1_ii", 1, 0, 2, 0, -1.5, 0)
    with pytest.raises(DecayVerifyError):
        predicted_rate("Thm1_1_ii", 1, 0.25, 2, 0, 0, 0)
    with pytest.raises(DecayVerifyError):
        predicted_rate("Thm1_1_i", 1, 0.0, 2, 0, 0, 0)
    with pytest.raises(DecayVerifyError):
        predicted_rate("Thm1_1_ii", 1, 0, 2, 1.5, 0, 0)
    with pytest.raises(DecayVerifyError):
        predicted_rate("Thm1_1_ii", 1, 0, 2, 0, math.inf, math.inf)
    with pytest.raises(DecayVerifyError):
        predicted_rate("nope", 1, 0, 2)


# -- fits ---------------------------------------------------------------------------

T = np.geomspace(1, 1e4, 60)


def test_fit_exact_power_law():
    rep = fit_observed_rate(T, (1 + T) ** -0.5, predicted=-0.5)
    assert rep.slope == pytest.approx(-0.5, abs=1e-12)
    assert rep.verdict == CONSISTENT and rep.window[0] >= 1e3 - 1


def test_fit_constant_series():
    rep = fit_observed_rate(T, np.full(T.size, 3.0), predicted=-0.25)
    assert rep.slope == pytest.approx(0.0, abs=1e-12) and rep.verdict == VIOLATED


def test_fit_noisy_power_law():
    rng = np.random.default_rng(0)
    vals = (1 + T) ** -0.25 * (1 + 0.01 * rng.standard_normal(T.size))
    rep = fit_observed_rate(T, vals, window_fraction=1.0, predicted=-0.25)
    assert abs(rep.slope + 0.25) < 0.02 and rep.width > 0


def test_fit_prefactor_and_window():
    b = np.sqrt(1 + T)
    rep = fit_observed_rate(T, (1 + T) ** -1.0 / b, prefactor=1 / b, window=(10, 1e3))
    assert rep.slope == pytest.approx(-1.0) and rep.verdict == INCONCLUSIVE
    assert rep.window[0] >= 10 and rep.window[1] <= 1e3


def test_fit_errors():
    with pytest.raises(DecayVerifyError):
        fit_observed_rate(T[:10], T[:10])
    with pytest.raises(DecayVerifyError):
        fit_observed_rate(T, -T)
    with pytest.raises(DecayVerifyError):
        fit_observed_rate(T, T, abscissa_values=T[::-1])


def test_regressor_wrapper():
    reg = DecayRateRegressor(window_fraction=1.0).fit(T, 2 * (1 + T) ** -0.75)
    assert reg.coef_ == pytest.approx(-0.75)
    np.testing.assert_allclose(reg.predict([0.0, 9.0]), [2.0, 2 * 10**-0.75])
    assert reg.score(T, 2 * (1 + T) ** -0.75) == pytest.approx(1.0)


def test_clock_values():
    spec = DampingSpec.power_law(1, 0.5)
    np.testing.assert_allclose(clock_values(spec, "B", [0.0, 3.0]), [0.0, 2.0])
    np.testing.assert_allclose(clock_values(spec, "Bhat", [3.0]), [2 / 3 * 7])


# -- heat oracle --------------------------------------------------------------------

BOX = SpectralProfile(1, PowerCutoff(1.0, 0.0, 1.0))


def test_heat_oracle_matches_error_function():
    t = np.array([0.0, 0.5, 10.0, 1e3])
    res = heat_oracle(1.0, 1, BOX, t)
    exact = [2.0] + [2 * math.sqrt(math.pi / (8 * x)) * erf(math.sqrt(2 * x)) for x in t[1:]]
    np.testing.assert_allclose(res.norms[0.0] ** 2, exact, rtol=1e-8)


def test_heat_oracle_slopes():
    t = np.geomspace(1, 1e6, 30)
    res = heat_oracle(1.0, 1, BOX, t)
    assert fit_observed_rate(t, res.norms[0.0] ** 2, res.A).slope == pytest.approx(-0.5, abs=1e-3)
    prof = SpectralProfile(1, PowerCutoff(1.0, 1.0, 1.0))
    res = heat_oracle(1.0, 1, prof, t, s_values=(0.0, 1.0))
    assert fit_observed_rate(t, res.norms[0.0] ** 2, res.A).slope == pytest.approx(-1.5, abs=1e-3)
    assert fit_observed_rate(t, res.norms[1.0] ** 2, res.A).slope == pytest.approx(
        heat_rate_exponent(1, 1, 1, s=1.0), abs=1e-3)


def test_heat_oracle_errors():
    with pytest.raises(DecayVerifyError):
        heat_oracle(DampingSpec.power_law(1, -1.5), 1, BOX, [0.0, 1.0])
    with pytest.raises(DecayVerifyError):
        heat_oracle(1.0, 0.0, BOX, [0.0, 1.0])
    with pytest.raises(DecayVerifyError):
        heat_rate_exponent(-1.0, 1, 1)


@settings(max_examples=12, deadline=None)
@given(r=st.sampled_from([0.0, 1.0]), n=st.sampled_from([1, 2]), order=st.sampled_from([1, 2]),
       kappa=st.sampled_from([-0.5, 0.0, 0.5]))
def test_heat_two_sided_rate(r, n, order, kappa):
    # the exponent depends on a(t) only through the clock int_0^t a
    prof = SpectralProfile(n, PowerCutoff(1.0, r, 1.0))
    t = np.geomspace(10, 1e7, 25)
    res = heat_oracle(DampingSpec.power_law(1, kappa), order, prof, t)
    rep = fit_observed_rate(t, res.norms[0.0] ** 2, res.A, min_samples=20)
    assert abs(rep.slope - heat_rate_exponent(r, n, order)) < 0.05


# -- envelopes ----------------------------------------------------------------------

def test_envelope_constant_examples():
    fit = fit_envelope_constant([0.0, 0.0], [0.5, 0.25])
    assert tuple(fit) == (0.0, 0.0)
    c, ratio = fit_envelope_constant([1.0, 3.0], [2.0, 2.0], C_ref=0.75)
    assert c == 1.5 and ratio == 2.0
    with pytest.raises(DecayVerifyError):
        fit_envelope_constant([1.0], [1.0], regimes=["mid"], regime="high")
    with pytest.raises(DecayVerifyError):
        fit_envelope_constant([1.0], [0.0])


def test_envelope_equal_times_high_frequency():
    spec = DampingSpec.constant()
    sw = envelope_sweep(spec, [2.0], [2.0], [3.0, 5.0], amplitude=False)
    assert set(sw.regime) == {"high"}
    assert fit_envelope_constant(sw.kernel, sw.envelope).C_fit == 0.0


def test_mid_frequency_K0_sweep_is_bounded():
    spec = DampingSpec.constant()
    sw = envelope_sweep(spec, np.geomspace(1, 100, 30), [0.0], np.geomspace(0.05, 0.4, 8),
                        kind="K0")
    assert set(sw.regime) == {"mid"}
    fits = sw.fits()
    assert math.isfinite(fits["mid"].C_fit) and fits["mid"].C_fit < 2


def test_envelope_stability_small_grid():
    spec = DampingSpec.constant()
    base, dense = envelope_stability(spec, (1, 50), (0, 20), anchored_xi_grid(spec, m=6),
                                     shape=(8, 6, 6), params=ZoneParams(c_prime=0.5))
    assert math.isfinite(base["all"].C_fit)
    assert dense["all"].max_ratio < 1.05
