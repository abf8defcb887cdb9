import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sigmadamp.damping import DampingSpec
from sigmadamp.phase_zones import (
    ZONE_ORDER,
    ZoneClassifier,
    ZoneError,
    ZoneLabel,
    ZoneParams,
    bound_envelope,
    classify,
    curve_t_diss,
    curve_t_ell,
    envelope_regime,
    lambda_threshold,
    mass,
    omega_threshold,
    weight,
    zone_codes,
)

TINY_EPS = ZoneParams(eps=1e-12)


def test_weight_examples():
    const = DampingSpec.constant()
    assert weight(const, 0.0, 1.0) == pytest.approx(math.sqrt(3) / 2, rel=1e-15)
    # on the curve |xi|^(sigma - 2 delta) = b/2
    assert weight(const, 3.0, 0.5) == pytest.approx(0.0, abs=1e-15)
    frac = DampingSpec.power_law(1, 0.5, sigma=1, delta=0.25)
    assert weight(frac, 2.0, 0.0) == 0.0


def test_mass_examples():
    assert mass(DampingSpec.constant(), 0.0, 1.0) == pytest.approx(0.75)
    assert mass(DampingSpec.constant(delta=0.5), 0.0, 0.0) == 0.0
    assert mass(DampingSpec.power_law(1, 1), 0.0, 1.0) == pytest.approx(0.25)


def test_classify_examples():
    const = DampingSpec.constant()
    params = ZoneParams(N=1, eps=0.1, d0=1)
    assert classify(const, params, 0.0, 1.0) is ZoneLabel.Hyp
    # delta = 0: the dissipative test is folded into the elliptic zone
    assert classify(const, params, 10.0, 0.01) is ZoneLabel.Ell
    assert classify(const, params, 0.0, 0.5) is ZoneLabel.Red


def test_classify_dissipative_zone_for_structural_damping():
    spec = DampingSpec.constant(delta=0.25)
    params = ZoneParams(d0=2)
    assert classify(spec, params, 0.0, 1e-3) is ZoneLabel.Diss
    t_diss = curve_t_diss(spec, params, 1e-3)
    assert classify(spec, params, 1.01 * t_diss, 1e-3) is ZoneLabel.Ell


def test_params_validation():
    for bad in (dict(eps=0.0), dict(eps=1.0), dict(N=0.5), dict(d0=0.0), dict(beta=0.5)):
        with pytest.raises(ZoneError):
            ZoneParams(**bad)


def test_curve_t_ell_examples():
    assert curve_t_ell(DampingSpec.power_law(1, 1), TINY_EPS, 1.0) == pytest.approx(1.0, rel=1e-9)
    decreasing = DampingSpec.power_law(1, -0.5)
    assert curve_t_ell(decreasing, ZoneParams(), 1.0) is None
    ts = [curve_t_ell(DampingSpec.power_law(1, 1), ZoneParams(eps=e), 1.0)
          for e in (0.5, 0.9, 0.999, 0.999999)]
    assert all(a < b for a, b in zip(ts, ts[1:])) and ts[-1] > 1e3


def test_curve_t_ell_tabulated_matches_closed_form():
    t = np.linspace(0, 20, 401)
    tab = DampingSpec.tabulated(t, 1 + t)
    exact = curve_t_ell(DampingSpec.power_law(1, 1), ZoneParams(), 3.0)
    assert curve_t_ell(tab, ZoneParams(), 3.0) == pytest.approx(exact, rel=1e-9)
    wavy = DampingSpec.tabulated(t, 2 + np.sin(t))
    with pytest.raises(ZoneError):
        curve_t_ell(wavy, ZoneParams(), 1.0)


def test_curve_t_diss_examples():
    params = ZoneParams(d0=1)
    # |xi|^(2 delta) = 1/2 for delta = 1/2 gives (1 + t)/2 = 1
    assert curve_t_diss(DampingSpec.constant(delta=0.5), params, 0.25) == pytest.approx(3.0)
    assert curve_t_diss(DampingSpec.constant(delta=0.25), params, 0.25) == pytest.approx(1.0)
    assert curve_t_diss(DampingSpec.constant(delta=0.25), params, 1.0) is None
    big = [curve_t_diss(DampingSpec.constant(delta=0.25), ZoneParams(d0=d), 0.25)
           for d in (1, 10, 100, 1e4)]
    assert all(a < b for a, b in zip(big, big[1:]))
    with pytest.raises(ZoneError):
        curve_t_diss(DampingSpec.constant(), params, 0.25)


def test_curve_t_diss_tabulated_matches_closed_form():
    t = np.linspace(0, 50, 501)
    tab = DampingSpec.tabulated(t, np.sqrt(1 + t), delta=0.25)
    ref = DampingSpec.power_law(1, 0.5, delta=0.25)
    params = ZoneParams()
    assert curve_t_diss(tab, params, 0.01) == pytest.approx(
        curve_t_diss(ref, params, 0.01), rel=1e-5)


def test_thresholds():
    assert omega_threshold(DampingSpec.constant(), TINY_EPS, 0.0, 5.0) == pytest.approx(0.5)
    spec = DampingSpec.constant(delta=0.25)
    assert lambda_threshold(spec, ZoneParams(d0=1), 3.0) == pytest.approx(1 / 16)
    grow = DampingSpec.power_law(1, 1)
    assert omega_threshold(grow, ZoneParams(), 4.0, 4.0) == pytest.approx(
        5 * math.sqrt(1 - 0.01) / 2)
    with pytest.raises(ZoneError):
        omega_threshold(DampingSpec.constant(delta=0.5), ZoneParams(), 0, 1)
    with pytest.raises(ZoneError):
        lambda_threshold(DampingSpec.constant(), ZoneParams(), 1)


def test_envelope_examples():
    const = DampingSpec.constant()
    params = ZoneParams()
    val, reg = bound_envelope("K1", const, params, 2.0, 2.0, 3.0, return_regime=True)
    assert reg == "high" and val == pytest.approx(1 / 3)
    assert bound_envelope("dtK1", const, params, 2.0, 2.0, 3.0) == pytest.approx(1.0)
    # equal times in the exponential branch of dtK1
    spec = DampingSpec.power_law(1, 0.5, delta=0.25)
    xi = 0.2
    t = 5.0
    assert envelope_regime(spec, params, t, t, xi) == "mid"
    expected = 2 / spec.b(t) * xi ** (2 - 1) / spec.b(t)
    assert bound_envelope("dtK1", spec, params, t, t, xi) == pytest.approx(expected)
    assert bound_envelope("K0", const, TINY_EPS, 4.0, 0.0, 0.25) == pytest.approx(math.exp(-0.25))


def test_envelope_half_delta_uses_constant_split():
    spec = DampingSpec.constant(delta=0.5)
    params = ZoneParams(M=1.0)
    assert envelope_regime(spec, params, 3.0, 1.0, 2.0) == "high"
    assert envelope_regime(spec, params, 3.0, 1.0, 0.5) == "low"
    val = bound_envelope("K0", spec, params, 3.0, 0.0, 0.5)
    assert val == pytest.approx(2 * math.exp(-0.5 * 3.0))


def test_classifier_wrapper():
    clf = ZoneClassifier(N=1, eps=0.1, d0=1).fit()
    labels = clf.predict([[0.0, 1.0], [10.0, 0.01], [0.0, 0.5]])
    assert list(labels) == ["Hyp", "Ell", "Red"]
    assert clf.get_params()["eps"] == 0.1
    assert set(clf.classes_) == {z.value for z in ZoneLabel}


# -- invariants -----------------------------------------------------------------

SPECS = [
    DampingSpec.constant(),
    DampingSpec.power_law(1, 0.5),
    DampingSpec.power_law(1, 0.5, delta=0.25),
    DampingSpec.power_law(2, -0.3, delta=0.25),
    DampingSpec.power_law(1, 1, sigma=2, delta=1),
]


@settings(max_examples=60, deadline=None)
@given(spec=st.sampled_from(SPECS), t=st.floats(0, 1e4), xi=st.floats(0, 50))
def test_partition_single_label(spec, t, xi):
    code = zone_codes(spec, ZoneParams(), t, xi)
    assert 0 <= int(code) < len(ZONE_ORDER)


def test_partition_on_dense_grid():
    for spec in SPECS:
        t, xi = np.meshgrid(np.geomspace(1e-3, 1e4, 80), np.geomspace(1e-6, 1e2, 80))
        codes = zone_codes(spec, ZoneParams(), t, xi)
        assert codes.min() >= 0


def test_curve_ordering_small_frequencies():
    # with b decreasing, small frequencies leave the dissipative zone before the elliptic one
    spec = DampingSpec.power_law(1, -0.4, delta=0.25)
    params = ZoneParams()
    for xi in np.geomspace(1e-6, 5e-4, 12):
        t_diss, t_ell = curve_t_diss(spec, params, xi), curve_t_ell(spec, params, xi)
        assert t_diss is not None and t_ell is not None
        assert t_diss <= t_ell


def test_curves_cross_once_for_increasing_damping():
    # t_diss falls and t_ell rises with xi, so the ordering holds only above one crossing
    spec = DampingSpec.power_law(1, 0.5, delta=0.25)
    params = ZoneParams()
    xi = np.geomspace(0.25, 5, 60)
    gap = np.array([curve_t_diss(spec, params, x) - curve_t_ell(spec, params, x)
                    if curve_t_diss(spec, params, x) is not None else -1.0 for x in xi])
    sign_changes = np.sum(np.diff(np.sign(gap)) != 0)
    assert sign_changes == 1 and gap[-1] < 0


def test_label_changes_across_t_ell():
    spec = DampingSpec.power_law(1, 1)
    params = ZoneParams()
    for xi in (0.7, 1.0, 3.0):
        te = curve_t_ell(spec, params, xi)
        before = classify(spec, params, te * (1 - 1e-6), xi)
        after = classify(spec, params, te * (1 + 1e-6), xi)
        assert before is ZoneLabel.Red and after is ZoneLabel.Ell


@pytest.mark.parametrize("spec", SPECS[:3])
@pytest.mark.parametrize("kind", ["K1", "dtK1", "K0", "dtK0"])
def test_envelope_nonincreasing_in_t_for_exponential_regimes(spec, kind):
    # nondecreasing b: every factor of the mid/low envelopes shrinks as t grows
    params = ZoneParams()
    s = 1.0
    for xi in (1e-3, 1e-2, 0.05):
        times = np.linspace(2.0, 200.0, 120)
        reg = np.array([str(envelope_regime(spec, params, t, s, xi, kind)) for t in times])
        vals = np.array([bound_envelope(kind, spec, params, t, s, xi) for t in times])
        assert np.isin(reg, ["mid", "low"]).all()
        for r in ("mid", "low"):
            seg = vals[reg == r]
            assert np.all(np.diff(seg) <= 1e-12 * seg[:-1])
