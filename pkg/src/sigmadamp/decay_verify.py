"""Executable checks of the decay-rate statements.

Predicted exponents are reduced to a single dominant power of a common
clock (``B``, ``Bhat`` or ``t``), observed norms are fitted by least squares
in log-log coordinates, kernels are compared against the regime envelopes,
and the heat flow ``v_t = -a(t) (-Delta)^alpha v`` is evaluated exactly as an
independent oracle.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin

from .damping import DampingSpec
from .decay_character import RadialFunction, SpectralProfile, homogeneous_norm
from .linear_modes import integrate_modes
from .phase_zones import ZoneParams, bound_envelope

STATEMENTS = ("Thm1_1_i", "Thm1_1_ii", "Thm1_2_i", "Thm1_2_ii", "Thm1_2_iii", "HeatA1")
ABSCISSAE = ("B", "Bhat", "t")
QUANTITIES = ("u", "ut")

CONSISTENT = "consistent"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"


class DecayVerifyError(ValueError):
    """Invalid prediction request, fit input or envelope sample."""


@dataclass(frozen=True)
class Branch:
    """One summand ``b(t)^b_power * (1 + X)^exponent`` of an estimate."""

    abscissa: str
    exponent: float
    b_power: int
    source: str


@dataclass(frozen=True)
class RatePrediction:
    """Dominant decay law ``b(t)^b_power * (1 + abscissa)^exponent``.

    ``branches`` lists every summand of the estimate before the reduction and
    ``dominant`` the index of the one that was kept.
    """

    statement: str
    quantity: str
    alpha: float
    abscissa: str
    exponent: float
    b_power: int
    branches: tuple = ()
    dominant: int = 0
    note: str = ""

    def __post_init__(self):
        if not math.isfinite(self.exponent):
            raise DecayVerifyError("predicted exponent must be finite")
        if self.abscissa == "Bhat" and self.statement not in ("Thm1_2_ii",):
            raise DecayVerifyError("Bhat is the clock of the decreasing-damping branch only")

    def to_dict(self):
        d = asdict(self)
        d["branches"] = [asdict(b) for b in self.branches]
        return d


def _time_scaling(spec):
    """Growth exponents of ``(B, Bhat, t)`` and of ``b`` in powers of ``t``.

    Only power-law damping has such exponents; ``None`` otherwise. For
    ``kappa >= 1`` the clock ``B`` grows slower than any power and gets 0.
    """
    if spec is None:
        return None
    if not spec.is_power_law:
        return None
    k = float(spec.family.kappa)
    return {"B": max(1.0 - k, 0.0), "Bhat": 1.0 + k, "t": 1.0}, k


def _branches(statement, quantity, sigma, delta, n, alpha, r0, r1, kappa_sign):
    """Summands of the estimate as ``Branch`` records (infinite characters dropped)."""
    half = n / 2
    out = []

    def add(x, num, den, bp, src):
        if math.isinf(num):
            return
        out.append(Branch(x, -num / den, bp, src))

    if statement == "HeatA1":
        # squared-norm rate -(2 r* + n + 2 alpha) / (2 order); halved for the norm
        add("B", r0 + half + alpha, 2 * sigma, 0, "u0")
        return out
    if statement == "Thm1_1_i":
        den = 2 * sigma - 2 * delta
        if quantity == "u":
            add("B", r1 + half + alpha - 2 * delta, den, -1, "u1")
            add("B", r0 + half + alpha, den, 0, "u0")
            add("t", r1 + half + alpha - 2 * delta, den, -1, "u1")
            add("t", r0 + half + alpha, den, 0, "u0")
        else:
            # (1/b(0) + 1/b(t)) / b(t): the second factor wins when b decreases
            add("B", r1 + half + 2 * sigma - 4 * delta, den, -2 if kappa_sign < 0 else -1, "u1")
            add("B", r0 + half + 2 * sigma - 2 * delta, den, -1, "u0")
            add("Bhat", r1 + half + 2 * sigma - 4 * delta, den, 0, "u1")
            add("t", r0 + half + 2 * sigma - 2 * delta, den, -1, "u0")
        return out
    if statement == "Thm1_1_ii":
        den = 2 * sigma
        if quantity == "u":
            add("B", r1 + half + alpha, den, 0, "u1")
            add("B", r0 + half + alpha, den, 0, "u0")
        else:
            add("B", r1 + half + 2 * sigma, den, -1, "u1")
            add("B", r0 + half + 2 * sigma, den, -1, "u0")
        return out
    m = min(r0, r1 - 2 * delta)
    den = 2 * sigma - 2 * delta
    clock = "Bhat" if statement == "Thm1_2_ii" else "B"
    if quantity == "u":
        add(clock, half + alpha + m, den, 0, "data")
    else:
        add(clock, half + 2 * sigma - 2 * delta + m, den, 1 if statement == "Thm1_2_ii" else -1,
            "data")
    return out


def predicted_rate(statement, sigma, delta, n, alpha=0.0, r0=0.0, r1=0.0, quantity="u",
                   damping=None):
    """Dominant decay exponent of a norm of the solution.

    Parameters
    ----------
    statement : str
        One of ``STATEMENTS``. ``HeatA1`` refers to the heat flow with
        ``a = 1/b`` and heat order ``sigma``; its abscissa ``B`` is then
        ``int_0^t a``.
    sigma, delta : float
    n : int
    alpha : float
        Sobolev order of ``||u||_{H^alpha}``, in ``[0, sigma]``. For
        ``quantity="ut"`` it is ignored.
    r0, r1 : float
        Decay characters of ``u0`` and ``u1`` (``inf`` for a zero datum,
        which removes its branches).
    quantity : {"u", "ut"}
    damping : DampingSpec, optional
        Needed to compare branches with different clocks. For power-law
        damping every branch is mapped to a power of ``t`` and the slowest
        one is kept; otherwise only branches on the statement's own clock
        are compared and the note says so.

    Returns
    -------
    RatePrediction
    """
    if statement not in STATEMENTS:
        raise DecayVerifyError(f"unknown statement {statement!r}")
    if quantity not in QUANTITIES:
        raise DecayVerifyError(f"unknown quantity {quantity!r}")
    if statement == "HeatA1" and quantity != "u":
        raise DecayVerifyError("the heat oracle only predicts norms of v")
    if not -n / 2 < r0 or not -n / 2 < r1 - 2 * delta:
        raise DecayVerifyError("need -n/2 < r*(u0) and -n/2 < r*(u1) - 2 delta")
    if statement != "HeatA1":
        if not 0 <= alpha <= sigma:
            raise DecayVerifyError("alpha must lie in [0, sigma]")
        if statement in ("Thm1_1_ii", "Thm1_2_iii") and delta != 0:
            raise DecayVerifyError(f"{statement} is the delta = 0 case")
        if statement in ("Thm1_1_i", "Thm1_2_i", "Thm1_2_ii") and not 0 < delta <= sigma / 2:
            raise DecayVerifyError(f"{statement} needs 0 < delta <= sigma/2")
    if statement.startswith("Thm1_2") and math.isinf(min(r0, r1 - 2 * delta)):
        raise DecayVerifyError("both data vanish; no rate to predict")

    scaling = _time_scaling(damping)
    kappa = scaling[1] if scaling else 0.0
    branches = _branches(statement, quantity, sigma, delta, n, alpha, r0, r1,
                         -1 if kappa < 0 else 1)
    if not branches:
        raise DecayVerifyError("both data vanish; no rate to predict")
    clock = "Bhat" if statement == "Thm1_2_ii" else "B"

    if scaling is None:
        own = [i for i, b in enumerate(branches) if b.abscissa == clock]
        i_dom = max(own, key=lambda i: (branches[i].exponent, branches[i].b_power))
        dom = branches[i_dom]
        note = ""
        if len(own) < len(branches):
            note = (f"branches on other clocks not compared without power-law damping; "
                    f"kept the slowest {clock}-branch")
        return RatePrediction(statement, quantity, float(alpha), clock, float(dom.exponent),
                              dom.b_power, tuple(branches), i_dom, note)

    grow, k = scaling
    eff = [b.exponent * grow[b.abscissa] + b.b_power * k for b in branches]
    i_dom = int(np.argmax(eff))
    dom = branches[i_dom]
    if dom.abscissa == clock:
        expo = dom.exponent
    else:
        if grow[clock] == 0:
            raise DecayVerifyError(f"cannot express a {dom.abscissa}-branch on a bounded-rate "
                                   f"{clock} clock")
        expo = (eff[i_dom] - dom.b_power * k) / grow[clock]
    note = f"dominant branch {dom.source} on {dom.abscissa} (t-exponent {eff[i_dom]:.6g})"
    return RatePrediction(statement, quantity, float(alpha), clock, float(expo), dom.b_power,
                          tuple(branches), i_dom, note)


def clock_values(spec, clock, times):
    """Samples of ``B(0, t)``, ``Bhat(0, t)`` or ``t``."""
    times = np.asarray(times, dtype=float)
    if clock == "t":
        return times.copy()
    if clock == "B":
        return np.array([spec.B(0.0, t) for t in times])
    if clock == "Bhat":
        return np.array([spec.Bhat(0.0, t) for t in times])
    raise DecayVerifyError(f"unknown abscissa {clock!r}")


# -- slope fits -------------------------------------------------------------------

@dataclass
class DecayFitReport:
    """Least-squares slope of ``log(value)`` against ``log(1 + abscissa)``."""

    slope: float
    width: float
    window: tuple
    predicted: float = None
    tolerance: float = 0.1
    verdict: str = INCONCLUSIVE
    residual: float = 0.0
    intercept: float = 0.0
    n_points: int = 0

    def to_dict(self):
        return asdict(self)


def _window_mask(x, window, window_fraction):
    lx = np.log1p(x)
    if window is not None:
        lo, hi = window
        return (x >= lo) & (x <= hi)
    if window_fraction is None:
        # last decade of 1 + abscissa
        return lx >= lx[-1] - math.log(10.0)
    if not 0 < window_fraction <= 1:
        raise DecayVerifyError("window_fraction must lie in (0, 1]")
    return lx >= lx[-1] - window_fraction * (lx[-1] - lx[0])


def fit_observed_rate(times, values, abscissa_values=None, window_fraction=None,
                      predicted=None, tolerance=0.1, residual_tol=0.05, window=None,
                      prefactor=None, min_samples=20):
    """Fit the decay slope of a positive time series.

    Parameters
    ----------
    times, values : array_like
        At least ``min_samples`` samples, values positive.
    abscissa_values : array_like, optional
        Clock values (``B(0, t)`` etc.); defaults to ``times``.
    window_fraction : float, optional
        Fit over the last fraction of the ``log(1 + abscissa)`` range; by
        default the last decade is used.
    predicted, tolerance : float
        Expected slope and allowed deviation for the verdict.
    residual_tol : float
        RMS log residual above which the verdict is ``inconclusive``.
    window : (float, float), optional
        Explicit abscissa interval overriding ``window_fraction``.
    prefactor : array_like, optional
        Divided out of ``values`` first (e.g. ``b(t)^k``).
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    x = t if abscissa_values is None else np.asarray(abscissa_values, dtype=float)
    if not (t.shape == v.shape == x.shape) or t.ndim != 1:
        raise DecayVerifyError("times, values and abscissa must be 1-D of equal length")
    if t.size < min_samples:
        raise DecayVerifyError(f"need at least {min_samples} samples, got {t.size}")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise DecayVerifyError("values must be positive and finite")
    if np.any(np.diff(x) <= 0):
        raise DecayVerifyError("abscissa must be increasing")
    if prefactor is not None:
        v = v / np.asarray(prefactor, dtype=float)
    mask = _window_mask(x, window, window_fraction)
    if mask.sum() < 3:
        raise DecayVerifyError("fewer than 3 samples in the fit window")
    lx, ly = np.log1p(x[mask]), np.log(v[mask])
    fit = stats.linregress(lx, ly)
    resid = ly - (fit.intercept + fit.slope * lx)
    rms = float(np.sqrt(np.mean(resid**2)))
    dof = mask.sum() - 2
    width = float(stats.t.ppf(0.975, dof) * fit.stderr) if dof > 0 else math.inf
    verdict = INCONCLUSIVE
    if predicted is not None and rms <= residual_tol:
        verdict = CONSISTENT if abs(fit.slope - predicted) <= tolerance else VIOLATED
    return DecayFitReport(float(fit.slope), width, (float(x[mask][0]), float(x[mask][-1])),
                          None if predicted is None else float(predicted), float(tolerance),
                          verdict, rms, float(fit.intercept), int(mask.sum()))


class DecayRateRegressor(RegressorMixin, BaseEstimator):
    """Power law ``value ~ C (1 + x)^slope`` fitted on the tail of a series.

    ``fit(X, y)`` takes the clock values ``X`` (1-D or one column) and the
    norms ``y``; ``predict`` evaluates the fitted law and ``report_`` holds
    the :class:`DecayFitReport`.
    """

    def __init__(self, window_fraction=None, predicted=None, tolerance=0.1, residual_tol=0.05,
                 min_samples=20):
        self.window_fraction = window_fraction
        self.predicted = predicted
        self.tolerance = tolerance
        self.residual_tol = residual_tol
        self.min_samples = min_samples

    def fit(self, X, y):
        x = np.asarray(X, dtype=float).reshape(-1)
        self.report_ = fit_observed_rate(x, y, x, self.window_fraction, self.predicted,
                                         self.tolerance, self.residual_tol,
                                         min_samples=self.min_samples)
        self.coef_ = self.report_.slope
        self.intercept_ = self.report_.intercept
        return self

    def predict(self, X):
        x = np.asarray(X, dtype=float).reshape(-1)
        return np.exp(self.intercept_) * np.power(1 + x, self.coef_)


# -- heat oracle ------------------------------------------------------------------

@dataclass
class HeatNorms:
    """Exact heat-flow norms: ``norms[s]`` is ``||v(t)||_{H^s}`` on ``times``."""

    times: np.ndarray
    A: np.ndarray
    norms: dict = field(default_factory=dict)

    def columns(self):
        cols = {"t": self.times, "A": self.A}
        for s in sorted(self.norms):
            cols[f"norm_s_{s:g}"] = self.norms[s]
        return cols


def heat_rate_exponent(r_star, n, alpha_order, s=0.0):
    """Two-sided rate of ``||v(t)||^2_{H^s}`` against ``1 + int_0^t a``."""
    if not -n / 2 < r_star < math.inf:
        raise DecayVerifyError("need -n/2 < r* < inf")
    return -(2 * r_star + n + 2 * s) / (2 * alpha_order)


def _heat_coefficient(a_spec):
    if isinstance(a_spec, (int, float)):
        a_spec = DampingSpec.constant(float(a_spec))
    if a_spec.is_power_law:
        if a_spec.family.kappa < -1:
            raise DecayVerifyError("a(t) is integrable on [0, inf); the heat rate does not apply")
    else:
        if np.min(a_spec.b(np.linspace(0, a_spec.horizon, 513))) <= 0:
            raise DecayVerifyError("a(t) must be positive")
    return a_spec


def heat_oracle(a_spec, alpha_order, profile, t_grid, s_values=(0.0,)):
    """Exact norms of ``v_t = -a(t) (-Delta)^alpha v`` with radial data ``profile``.

    ``v_hat(t) = exp(-|xi|^(2 alpha) A(t)) v0_hat`` with ``A = int_0^t a``;
    each norm is one radial quadrature. ``a_spec`` is a :class:`DampingSpec`
    (its ``b`` is used as ``a``) or a positive constant.
    """
    if alpha_order <= 0:
        raise DecayVerifyError("alpha_order must be positive")
    a_spec = _heat_coefficient(a_spec)
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise DecayVerifyError("t_grid must be increasing and nonnegative")
    A = np.array([a_spec.Bhat(0.0, t) if t > 0 else 0.0 for t in times])
    out = HeatNorms(times, A)
    for s in s_values:
        vals = np.empty(times.size)
        for i, Ai in enumerate(A):
            if Ai == 0:
                vals[i] = homogeneous_norm(profile, s)
                continue
            # the heat factor turns over at rho ~ A^(-1/(2 alpha)); give quad a knot there
            peak = Ai ** (-1 / (2 * alpha_order))
            knots = tuple(sorted(set(profile.knots) | {peak}))

            def damped(rho, Ai=Ai):
                rho = np.asarray(rho, dtype=float)
                return profile(rho) * np.exp(-np.power(rho, 2 * alpha_order) * Ai)

            fn = RadialFunction(damped, support=profile.support, knots=knots,
                                origin_exponent=profile.origin_exponent)
            vals[i] = homogeneous_norm(SpectralProfile(profile.n, fn), s)
        out.norms[float(s)] = vals
    return out


# -- envelope constants -------------------------------------------------------------

@dataclass(frozen=True)
class EnvelopeFit:
    """``C_fit = max |kernel| / envelope``; ``max_ratio`` is the same maximum
    measured against ``C_ref`` (so a value above 1 means the sample set
    needed a larger constant than the reference)."""

    C_fit: float
    max_ratio: float
    n_samples: int
    regime: str = None

    def __iter__(self):
        return iter((self.C_fit, self.max_ratio))


def fit_envelope_constant(kernel_samples, envelope_samples, regimes=None, regime=None,
                          C_ref=1.0):
    """Smallest constant ``C`` with ``|kernel| <= C * envelope`` on the samples.

    Parameters
    ----------
    kernel_samples, envelope_samples : array_like
        Values at matching ``(t, s, xi)`` points.
    regimes : array_like of str, optional
        Regime label of every sample; with ``regime`` given, all samples must
        carry that label.
    C_ref : float
        Reference constant for ``max_ratio`` (e.g. the fit of a coarser set).

    Returns
    -------
    EnvelopeFit
        Unpacks as ``(C_fit, max_ratio)``.
    """
    k = np.abs(np.asarray(kernel_samples, dtype=float)).ravel()
    e = np.asarray(envelope_samples, dtype=float).ravel()
    if k.shape != e.shape or k.size == 0:
        raise DecayVerifyError("kernel and envelope samples must be non-empty and matching")
    if regime is not None and regimes is not None:
        labels = np.asarray(regimes).ravel()
        if np.any(labels != regime):
            raise DecayVerifyError(f"sample outside the {regime!r} regime")
    if np.any(e < 0) or np.any(~np.isfinite(e)):
        raise DecayVerifyError("envelope samples must be finite and nonnegative")
    if np.any((e == 0) & (k > 0)):
        raise DecayVerifyError("envelope vanishes where the kernel does not")
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(k == 0, 0.0, k / np.where(e == 0, 1.0, e))
    c = float(ratio.max())
    return EnvelopeFit(c, c / C_ref, int(k.size), regime)


@dataclass
class EnvelopeSweep:
    """Samples of ``|kernel|`` and its envelope on a ``(t, s, xi)`` grid."""

    kind: str
    t: np.ndarray
    s: np.ndarray
    xi: np.ndarray
    kernel: np.ndarray
    envelope: np.ndarray
    regime: np.ndarray

    def fits(self, C_ref=None):
        """Per-regime :class:`EnvelopeFit` plus ``"all"`` over every sample."""
        out = {}
        for r in sorted(set(self.regime.tolist())):
            sel = self.regime == r
            ref = 1.0 if C_ref is None else C_ref.get(r, 1.0)
            out[r] = fit_envelope_constant(self.kernel[sel], self.envelope[sel],
                                           self.regime[sel], r, ref)
        ref = 1.0 if C_ref is None else C_ref.get("all", 1.0)
        out["all"] = fit_envelope_constant(self.kernel, self.envelope, C_ref=ref)
        return out


def envelope_sweep(spec, t_values, s_values, xi_values, kind="K1", params=None, rtol=1e-9,
                   amplitude=True):
    """Integrate kernels on a grid and pair them with the regime envelopes.

    For ``K1``/``dtK1`` one batched mode run is made per start time ``s``
    (pairs with ``s > t`` are skipped); ``K0``/``dtK0`` start at 0 and ignore
    ``s_values``.

    With ``amplitude=True`` the kernel in the high regime is replaced by its
    phase-free amplitude ``sqrt(K^2 + xi^(-2 sigma) (dK/dt)^2)`` for ``K0``,
    ``K1`` (``sqrt(xi^(2 sigma) K^2 + (dK/dt)^2)`` for the derivatives). The
    two high-regime bounds together bound this amplitude, and unlike ``|K|``
    it does not depend on where the grid meets the oscillation peaks.
    """
    params = params or ZoneParams()
    t_values = np.asarray(t_values, dtype=float)
    xi_values = np.asarray(xi_values, dtype=float)
    starts = [0.0] if kind in ("K0", "dtK0") else sorted(float(s) for s in s_values)
    init = (1.0, 0.0) if kind in ("K0", "dtK0") else (0.0, 1.0)
    xs = np.power(xi_values, spec.sigma)
    rows = []
    for s in starts:
        tt = t_values[t_values >= s]
        if tt.size == 0:
            continue
        grid = tt if tt[0] == s else np.concatenate([[s], tt])
        traj = integrate_modes(spec, xi_values, init[0], init[1], grid, rtol, s)
        u, ut = traj.u[-tt.size:], traj.ut[-tt.size:]
        if kind in ("K0", "K1"):
            vals, amp = np.abs(u), np.hypot(u, ut / xs)
        else:
            vals, amp = np.abs(ut), np.hypot(xs * u, ut)
        for i, t in enumerate(tt):
            env, reg = bound_envelope(kind, spec, params, t, s, xi_values, return_regime=True)
            reg = np.atleast_1d(reg)
            k = np.where(amplitude & (reg == "high"), amp[i], vals[i])
            for j, xi in enumerate(xi_values):
                rows.append((t, s, xi, k[j], env[j], reg[j]))
    if not rows:
        raise DecayVerifyError("no (t, s) pairs with s <= t")
    t, s, xi, k, e, r = zip(*rows)
    return EnvelopeSweep(kind, np.array(t), np.array(s), np.array(xi), np.array(k),
                         np.array(e), np.array(r))


def anchored_xi_grid(spec, m=10, factor=1.6, below=3, t=0.0):
    """Geometric frequency grid with a node on the curve ``|xi|^(sigma - 2 delta) = b(t)/2``.

    The kernel-to-envelope ratio of the high regime peaks sharply at that
    curve (critical damping), so a grid that misses it undersamples the
    maximum. ``below`` nodes lie under the curve, ``m - below - 1`` above.
    """
    if spec.delta == spec.sigma / 2:
        raise DecayVerifyError("no separating curve when delta = sigma/2")
    gamma = (spec.b(t) / 2) ** (1 / (spec.sigma - 2 * spec.delta))
    return gamma * factor ** (-below), gamma * factor ** (m - 1 - below)


def _nested(lo, hi, m, refine, geometric):
    """``m`` points on ``[lo, hi]`` refined ``refine`` times by midpoint insertion."""
    count = (m - 1) * 2**refine + 1
    return np.geomspace(lo, hi, count) if geometric else np.linspace(lo, hi, count)


def envelope_stability(spec, t_range, s_range, xi_range, shape=(20, 20, 10), kind="K1",
                       params=None, rtol=1e-9, amplitude=True):
    """``max_ratio`` of a doubled-density sample against the base constants.

    Grids are geometric in ``t`` and ``xi`` and linear in ``s``; the dense
    grid inserts a midpoint into every cell, so it contains the base grid.
    Returns ``(base_fits, dense_fits)``; the dense ``max_ratio`` values are
    relative to the base ``C_fit`` and so are at least 1.
    """
    def grids(refine):
        return (_nested(*t_range, shape[0], refine, True),
                _nested(*s_range, shape[1], refine, False),
                _nested(*xi_range, shape[2], refine, True))

    base = envelope_sweep(spec, *grids(0), kind=kind, params=params, rtol=rtol,
                          amplitude=amplitude).fits()
    ref = {r: (f.C_fit if f.C_fit > 0 else 1.0) for r, f in base.items()}
    dense = envelope_sweep(spec, *grids(1), kind=kind, params=params, rtol=rtol,
                           amplitude=amplitude).fits(ref)
    return base, dense
