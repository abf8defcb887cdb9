"""Acceptance criteria 1-10, one test each; every test prints a PASS/FAIL line."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from sigmadamp.cli import main as cli_main
from sigmadamp.damping import DampingSpec, solve_g
from sigmadamp.decay_character import PowerCutoff, SpectralProfile, estimate_decay_character
from sigmadamp.decay_verify import (
    anchored_xi_grid,
    clock_values,
    envelope_stability,
    fit_observed_rate,
    heat_oracle,
    heat_rate_exponent,
)
from sigmadamp.exponents import ExponentInputs, check_hypotheses, critical_p, omega, p_star
from sigmadamp.linear_modes import integrate_modes, reconstruct_norms
from sigmadamp.phase_zones import ZoneParams
from sigmadamp.semilinear import (
    BLOWN_UP,
    DECAYED,
    FieldData,
    GridSpec,
    SemilinearConfig,
    check_blowup_data_condition,
    solve_semilinear,
)

MANIFESTS = Path(__file__).resolve().parent.parent / "manifests"
CONST = DampingSpec.constant()
BOX = SpectralProfile(1, PowerCutoff(1.0, 0.0, 1.0))


@pytest.fixture
def verdict(record_property):
    """Print one PASS/FAIL line and keep it for the terminal summary."""
    def report(number, ok, detail, elapsed):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.1f} s)"
        print(line)
        record_property("acceptance", line)
        return ok
    return report


def test_criterion_01_constant_coefficient_oracle(verdict):
    start = time.perf_counter()
    t = np.linspace(0, 50, 501)
    xis = np.array([0.1, 0.5, 1.0, 4.0])
    u0, u1 = 1.0, 0.3
    traj = integrate_modes(CONST, xis, u0, u1, t, rtol=1e-10)
    errs = []
    for j, xi in enumerate(xis):
        disc = xi**2 - 0.25
        if abs(disc) < 1e-15:
            exact = np.exp(-t / 2) * (u0 + (u1 + u0 / 2) * t)
        elif disc > 0:
            w = math.sqrt(disc)
            exact = np.exp(-t / 2) * (u0 * np.cos(w * t) + (u1 + u0 / 2) / w * np.sin(w * t))
        else:
            w = math.sqrt(-disc)
            lp, lm = -0.5 + w, -0.5 - w
            a = (u1 - lm * u0) / (lp - lm)
            exact = a * np.exp(lp * t) + (u0 - a) * np.exp(lm * t)
        errs.append(np.max(np.abs(traj.u[:, j] - exact)))
    elapsed = time.perf_counter() - start
    err = max(errs)
    assert verdict(1, err < 1e-6 and elapsed < 1.0, f"max abs error {err:.2e}", elapsed)


def _slope_vs(t, values, abscissa, window):
    return fit_observed_rate(t, values, abscissa, window=window).slope


def test_criterion_02_matsumura_rates(verdict):
    start = time.perf_counter()
    t = np.geomspace(100, 1e4, 40)
    res = reconstruct_norms(CONST, (BOX, BOX), t_grid=t)
    B = clock_values(CONST, "B", t)
    window = (B[0], B[-1])
    su = _slope_vs(t, res.norms[0.0], B, window)
    sut = _slope_vs(t, res.ut_norm, B, window)
    elapsed = time.perf_counter() - start
    ok = abs(su + 0.25) <= 0.1 and abs(sut + 1.25) <= 0.15 and elapsed < 60
    assert verdict(2, ok, f"u slope {su:.4f}, u_t slope {sut:.4f}", elapsed)


def test_criterion_03_time_dependent_damping_rate(verdict):
    start = time.perf_counter()
    spec = DampingSpec.power_law(1, 0.5)
    t = np.geomspace(100, 1e4, 40)
    res = reconstruct_norms(spec, (BOX, BOX), t_grid=t)
    B = clock_values(spec, "B", t)
    s_B = _slope_vs(t, res.norms[0.0], B, (B[0], B[-1]))
    s_t = _slope_vs(t, res.norms[0.0], t, (t[0], t[-1]))
    elapsed = time.perf_counter() - start
    ok = abs(s_B + 0.25) <= 0.1 and abs(s_t + 0.125) <= 0.05 and elapsed < 60
    assert verdict(3, ok, f"slope vs 1+B {s_B:.4f}, vs t {s_t:.4f}", elapsed)


def test_criterion_04_heat_two_sided_decay(verdict):
    start = time.perf_counter()
    t = np.geomspace(1, 1e6, 30)
    worst = 0.0
    for r in (0.0, 1.0):
        for n in (1, 2):
            prof = SpectralProfile(n, PowerCutoff(1.0, r, 1.0))
            for order in (1, 2):
                res = heat_oracle(1.0, order, prof, t)
                slope = fit_observed_rate(t, res.norms[0.0] ** 2, res.A).slope
                worst = max(worst, abs(slope - heat_rate_exponent(r, n, order)))
    elapsed = time.perf_counter() - start
    assert verdict(4, worst <= 0.05 and elapsed < 10, f"max slope deviation {worst:.2e}",
                   elapsed)


def test_criterion_05_decay_character_estimator(verdict):
    start = time.perf_counter()
    worst = 0.0
    for r in (0.0, 0.5, 1.0, 2.0):
        for n in (1, 2, 3):
            est = estimate_decay_character(SpectralProfile(n, PowerCutoff(1.0, r, 1.0)))
            worst = max(worst, abs(est.r_star - r))
    elapsed = time.perf_counter() - start
    assert verdict(5, worst <= 0.05 and elapsed < 10, f"max |r* - r| {worst:.2e}", elapsed)


def test_criterion_06_envelope_boundedness(verdict):
    start = time.perf_counter()
    params = ZoneParams(c_prime=0.5)
    rows = []
    for spec in (DampingSpec.constant(), DampingSpec.constant(delta=0.25),
                 DampingSpec.power_law(1, 0.5), DampingSpec.power_law(1, 0.5, delta=0.25)):
        base, dense = envelope_stability(spec, (1.0, 100.0), (0.0, 50.0),
                                         anchored_xi_grid(spec), shape=(20, 20, 10),
                                         params=params)
        rows.append((base["all"].C_fit, dense["all"].max_ratio))
    elapsed = time.perf_counter() - start
    ok = all(math.isfinite(c) and ratio < 1.05 for c, ratio in rows) and elapsed < 300
    detail = ", ".join(f"C={c:.3g} ratio={ratio:.4f}" for c, ratio in rows)
    assert verdict(6, ok, detail, elapsed)


def test_criterion_07_blowup_versus_global_threshold(verdict):
    start = time.perf_counter()
    assert critical_p(1, 0, 1) == 3
    outcomes = {}
    grid = GridSpec(1, 40.0, 1024)
    u1 = FieldData("gaussian", 0.5)
    assert check_blowup_data_condition(CONST, FieldData("zero"), u1, grid).satisfied
    for p in (2.0, 2.5):
        out = solve_semilinear(SemilinearConfig(CONST, p=p, grid=grid, u1=u1, horizon=60.0,
                                                n_out=120))
        outcomes[p] = (out.status, out.blowup_time)
    small = FieldData("gaussian", 1e-3)
    for p in (3.5, 4.0):
        out = solve_semilinear(SemilinearConfig(CONST, p=p, grid=GridSpec(1, 100.0, 1024),
                                                u0=small, u1=small, horizon=400.0, n_out=400))
        slope = fit_observed_rate(out.times, out.l2, window=(40.0, 400.0)).slope
        outcomes[p] = (out.status, slope)
    elapsed = time.perf_counter() - start
    ok = (all(outcomes[p][0] == BLOWN_UP for p in (2.0, 2.5))
          and all(outcomes[p][0] == DECAYED and abs(outcomes[p][1] + 0.25) <= 0.15
                  for p in (3.5, 4.0))
          and elapsed < 600)
    detail = ", ".join(f"p={p:g}: {s} ({v:.4g})" for p, (s, v) in outcomes.items())
    assert verdict(7, ok, detail, elapsed)


def test_criterion_08_exponent_tables(verdict):
    start = time.perf_counter()
    ps = p_star(ExponentInputs(1, 0, 0, 2, 0, 0))
    rng = np.random.default_rng(2024)
    count, bad = 0, 0
    while count < 1000:
        n = int(rng.integers(1, 7))
        sigma = 1 + 3 * rng.random()
        delta = sigma / 2 * rng.random()
        gamma = sigma * rng.random() * 0.99
        branch = "nondecreasing" if rng.random() < 0.5 else "decreasing"
        top = -2 * delta
        if top <= -n / 2:
            delta, top = 0.0, 0.0
        m = top - (top + n / 2) * rng.random() * 0.999
        r1 = m + 2 * delta + 3 * rng.random()
        inp = ExponentInputs(sigma, delta, gamma, n, m, r1, branch)
        if not check_hypotheses(inp).ok:
            continue
        w = omega(inp)
        count += 1
        bad += not (1 <= w < 2)
    elapsed = time.perf_counter() - start
    ok = ps == 2 == critical_p(1, 0, 2) and bad == 0 and elapsed < 1.0
    assert verdict(8, ok, f"p*={ps}, omega outside [1,2): {bad}/1000", elapsed)


def test_criterion_09_g_ode_properties(verdict):
    start = time.perf_counter()
    rows = []
    for kappa in (0.0, 0.5, 1.0):
        spec = DampingSpec.power_law(1, kappa)
        traj = solve_g(spec, 1e3)
        keep = traj.times >= traj.T0
        max_slope = float(np.max(np.abs(traj.dg[keep])))
        lo, hi = float(np.min(traj.bg[keep])), float(np.max(traj.bg[keep]))
        rows.append((kappa, traj.band_ok and lo > 0, lo, hi,
                     max_slope <= traj.slope_bound + 0.05, max_slope))
    elapsed = time.perf_counter() - start
    ok = all(r[1] and r[4] for r in rows) and elapsed < 5
    detail = ", ".join(f"kappa={k:g}: bg in [{lo:.3f}, {hi:.3f}], max|g'|={s:.3f}"
                       for k, _, lo, hi, _, s in rows)
    assert verdict(9, ok, detail, elapsed)


DETERMINISM_MANIFESTS = ("matsumura.toml", "zones_const.toml", "semilinear_short.toml",
                         "decay_character.toml")


@pytest.mark.parametrize("name", DETERMINISM_MANIFESTS)
def test_criterion_10_determinism(tmp_path, name, verdict):
    start = time.perf_counter()
    cfg = str(MANIFESTS / name)
    codes = [cli_main(["--config", cfg, "--out", str(tmp_path / f"run{k}")]) for k in (1, 2)]
    a = sorted((tmp_path / "run1").rglob("*.csv"))
    b = sorted((tmp_path / "run2").rglob("*.csv"))
    same = bool(a) and len(a) == len(b) and all(
        x.relative_to(tmp_path / "run1") == y.relative_to(tmp_path / "run2")
        and x.read_bytes() == y.read_bytes() for x, y in zip(a, b))
    elapsed = time.perf_counter() - start
    man = json.loads(next((tmp_path / "run1").rglob("manifest.json")).read_text())
    ok = same and codes[0] == codes[1] == 0
    assert verdict(10, ok, f"{name}: {len(a)} CSV file(s) identical, outcome {man['outcome']}",
                   elapsed)
