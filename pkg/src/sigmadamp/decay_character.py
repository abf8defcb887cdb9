"""Decay indicators and decay characters of radial Fourier profiles.

Data are described by the magnitude of their Fourier transform as a function
of the radial frequency ``rho = |xi|`` (unitary transform, angular frequency).
Every quantity computed here depends on the magnitude only.

Radial integrals are evaluated in the logarithmic variable ``v = log rho``,
which resolves power-law behaviour near ``rho = 0`` without special handling::

    int_0^R c_n rho^(n-1) |u(rho)|^2 drho = int_{-inf}^{log R} c_n e^(n v) |u(e^v)|^2 dv
"""

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from sklearn.base import BaseEstimator

QUAD_EPSREL = 1e-11

OK = "ok"
ZERO = "zero"
INFINITE = "infinite"
INDETERMINATE = "indeterminate"
DEGENERATE = "degenerate"


class DecayCharacterError(ValueError):
    """Invalid profile, or a radial integral that does not converge."""


def sphere_area(n):
    """Surface area of the unit sphere in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


# -- amplitude families -----------------------------------------------------

@dataclass(frozen=True)
class PowerCutoff:
    """``A * rho**r_exp`` on ``[0, cutoff]``, zero beyond."""

    A: float
    r_exp: float
    cutoff: float = 1.0

    def __post_init__(self):
        if self.A < 0 or not self.cutoff > 0:
            raise DecayCharacterError("PowerCutoff needs A >= 0 and cutoff > 0")

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            val = self.A * np.power(rho, self.r_exp)
        return np.where(rho <= self.cutoff, val, 0.0)

    @property
    def support(self):
        return self.cutoff

    @property
    def knots(self):
        return (self.cutoff,)

    @property
    def origin_exponent(self):
        return self.r_exp


@dataclass(frozen=True)
class GaussianHat:
    """``A * exp(-(width * rho)**2 / 2)``, the transform of a Gaussian of std ``width``."""

    A: float
    width: float = 1.0

    def __post_init__(self):
        if self.A < 0 or not self.width > 0:
            raise DecayCharacterError("GaussianHat needs A >= 0 and width > 0")

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        with np.errstate(over="ignore"):
            return self.A * np.exp(-0.5 * (self.width * rho) ** 2)

    @property
    def support(self):
        return math.inf

    @property
    def knots(self):
        return ()

    @property
    def origin_exponent(self):
        return 0.0


@dataclass(frozen=True)
class TabulatedRadial:
    """Samples ``(rho_i, |u(rho_i)|)`` interpolated by PCHIP.

    Below the first sample the profile is extended by the power law through
    the first two samples; above the last sample it is zero.
    """

    rho: tuple
    amp: tuple
    source: str = ""
    _interp: object = field(default=None, init=False, repr=False, compare=False)
    _origin: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        amp = np.asarray(self.amp, dtype=float)
        if rho.ndim != 1 or rho.shape != amp.shape or rho.size < 2:
            raise DecayCharacterError("tabulated profile needs two equal-length columns")
        if rho[0] <= 0 or np.any(np.diff(rho) <= 0):
            raise DecayCharacterError("tabulated frequencies must be positive and increasing")
        if np.any(amp < 0):
            raise DecayCharacterError("tabulated amplitudes must be nonnegative")
        object.__setattr__(self, "rho", tuple(rho))
        object.__setattr__(self, "amp", tuple(amp))
        object.__setattr__(self, "_interp", PchipInterpolator(rho, amp, extrapolate=False))
        if amp[0] > 0 and amp[1] > 0:
            expo = math.log(amp[1] / amp[0]) / math.log(rho[1] / rho[0])
        else:
            expo = None
        object.__setattr__(self, "_origin", (rho[0], amp[0], expo))

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        r0, a0, expo = self._origin
        inside = np.nan_to_num(self._interp(rho), nan=0.0)
        with np.errstate(divide="ignore"):
            if expo is None:
                below = np.full_like(rho, a0)
            else:
                below = a0 * np.power(rho / r0, expo)
        return np.where(rho < r0, below, np.maximum(inside, 0.0))

    @property
    def support(self):
        return self.rho[-1]

    @property
    def knots(self):
        return self.rho

    @property
    def origin_exponent(self):
        expo = self._origin[2]
        return 0.0 if expo is None else expo


@dataclass(frozen=True)
class RadialFunction:
    """Arbitrary nonnegative callable profile (used for tests and studies).

    ``origin_exponent`` is the power-law exponent near 0 when known; it lets
    integrability be checked up front instead of through quadrature failure.
    """

    func: object
    support: float = math.inf
    knots: tuple = ()
    origin_exponent: float = None

    def __call__(self, rho):
        return np.asarray(self.func(np.asarray(rho, dtype=float)), dtype=float)


_KINDS = (PowerCutoff, GaussianHat, TabulatedRadial, RadialFunction)


@dataclass(frozen=True)
class SpectralProfile:
    """Radial magnitude profile ``rho -> rho**(-shift) * |u(rho)|`` in dimension ``n``.

    Parameters
    ----------
    n : int
        Space dimension.
    amplitude : PowerCutoff, GaussianHat, TabulatedRadial or RadialFunction
        Magnitude of the Fourier transform as a function of ``rho``.
    shift : float
        Extra factor ``rho**(-shift)``, see :func:`shift_character`.
    tail_exponent : float, optional
        Known decay ``|u| ~ rho**(-tail_exponent)`` at infinity, used to
        reject divergent high-frequency integrals before evaluating them.
    """

    n: int
    amplitude: object
    shift: float = 0.0
    tail_exponent: float = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DecayCharacterError(f"dimension must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not isinstance(self.amplitude, _KINDS):
            raise DecayCharacterError(f"unknown amplitude kind {self.amplitude!r}")
        e0 = self.origin_exponent
        if e0 is not None and not self.is_zero() and not e0 > -self.n / 2:
            raise DecayCharacterError(
                f"profile ~ rho^{e0:g} near 0 is not square integrable in dimension {self.n}")

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        val = self.amplitude(rho)
        if self.shift:
            with np.errstate(divide="ignore", invalid="ignore"):
                val = val * np.power(rho, -self.shift)
        return val

    @property
    def origin_exponent(self):
        e0 = getattr(self.amplitude, "origin_exponent", None)
        return None if e0 is None else e0 - self.shift

    @property
    def support(self):
        return float(self.amplitude.support)

    @property
    def knots(self):
        return tuple(float(k) for k in self.amplitude.knots)

    def is_zero(self):
        amp = self.amplitude
        if isinstance(amp, (PowerCutoff, GaussianHat)):
            return amp.A == 0
        if isinstance(amp, TabulatedRadial):
            return not any(amp.amp)
        return False

    @classmethod
    def from_config(cls, block, n, base_dir=None):
        """Build from a ``{kind, A, r_exp | width, cutoff}`` or ``{kind="tabulated", path}`` block."""
        kind = str(block.get("kind", "power_cutoff")).lower()
        A = float(block.get("A", 1.0))
        if kind == "power_cutoff":
            amp = PowerCutoff(A, float(block.get("r_exp", 0.0)), float(block.get("cutoff", 1.0)))
        elif kind == "gaussian":
            amp = GaussianHat(A, float(block.get("width", 1.0)))
        elif kind == "tabulated":
            amp = read_profile_csv(block["path"], base_dir)
        else:
            raise DecayCharacterError(f"unknown profile kind {kind!r}")
        return cls(n, amp, shift=float(block.get("shift", 0.0)))

    def to_config(self):
        amp = self.amplitude
        if isinstance(amp, PowerCutoff):
            out = {"kind": "power_cutoff", "A": amp.A, "r_exp": amp.r_exp, "cutoff": amp.cutoff}
        elif isinstance(amp, GaussianHat):
            out = {"kind": "gaussian", "A": amp.A, "width": amp.width}
        elif isinstance(amp, TabulatedRadial):
            out = {"kind": "tabulated", "path": amp.source}
        else:
            out = {"kind": "function"}
        if self.shift:
            out["shift"] = self.shift
        return out


def read_profile_csv(path, base_dir=None):
    """Read a two-column ``rho, |u|`` CSV (header and ``#`` lines skipped)."""
    import pathlib

    p = pathlib.Path(path)
    if base_dir is not None and not p.is_absolute():
        p = pathlib.Path(base_dir) / p
    rows = []
    with open(p, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                continue
    if not rows:
        raise DecayCharacterError(f"no numeric rows in {p}")
    rho, amp = zip(*rows)
    return TabulatedRadial(rho, amp, source=str(path))


# -- radial quadrature --------------------------------------------------------

def _radial_integral(profile, upper, weight_exponent=0.0):
    """``c_n * int_0^upper rho^(n-1+2w) |u(rho)|^2 drho`` in the log variable."""
    n = profile.n
    cn = sphere_area(n)
    expo = n + 2.0 * weight_exponent
    e0 = profile.origin_exponent
    if e0 is not None and not profile.is_zero() and not expo + 2 * e0 > 0:
        raise DecayCharacterError("radial integral diverges at rho = 0")

    def f(v):
        # outside ~[1e-300, 1e300] only underflow/overflow noise is left
        if not -690.0 < v < 690.0:
            return 0.0
        rho = math.exp(v)
        a = float(profile(rho))
        if a == 0.0:
            return 0.0
        if not math.isfinite(a):
            # a singular amplitude overflows near rho = 0; with a known and
            # integrable origin exponent the weighted integrand is negligible there
            return 0.0 if e0 is not None else math.inf
        return cn * math.exp(expo * v + 2.0 * math.log(a))

    upper = min(upper, profile.support)
    if upper <= 0:
        return 0.0
    top = math.log(upper) if math.isfinite(upper) else math.inf
    if not math.isfinite(top):
        tail = profile.tail_exponent
        if tail is not None and not 2 * tail > expo:
            raise DecayCharacterError("radial integral diverges at infinity")
    knots = sorted(math.log(k) for k in profile.knots if 0 < k < upper)
    # the first knot (or one unit below the top) separates the infinite lower tail
    anchor = knots[0] if knots else (top - 1.0 if math.isfinite(top) else 0.0)
    edges = [anchor] + [k for k in knots if k > anchor] + [top]
    pieces = [(-math.inf, anchor)] + list(zip(edges[:-1], edges[1:]))
    total = 0.0
    with warnings.catch_warnings():
        # roundoff warnings on integrands that underflow are expected
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in pieces:
            if hi > lo:
                total += integrate.quad(f, lo, hi, epsabs=0.0, epsrel=QUAD_EPSREL,
                                        limit=200)[0]
    if e0 is None:
        # unknown behaviour at the origin: an integrand that does not decay
        # towards v -> -inf means divergence (quad may not even warn)
        probe = [f(anchor - d) for d in (20.0, 40.0, 80.0)]
        if probe[2] > 0 and probe[2] >= probe[1] >= probe[0]:
            raise DecayCharacterError("radial integral diverges at rho = 0")
    if not math.isfinite(total):
        raise DecayCharacterError("radial integral diverges")
    return total


def low_freq_energy(profile, rho):
    """Energy of the profile in the ball of radius ``rho``.

    Returns ``c_n * int_0^rho s^(n-1) |u(s)|^2 ds`` with relative error
    below 1e-8.
    """
    if not rho > 0:
        raise DecayCharacterError(f"rho must be positive, got {rho}")
    return _radial_integral(profile, float(rho))


def decay_indicator(profile, r, rho):
    """Scaled low-frequency energy ``rho**(-2r-n) * low_freq_energy(profile, rho)``."""
    n = profile.n
    if not r > -n / 2:
        raise DecayCharacterError(f"decay indicator needs r > -n/2, got r={r}")
    energy = low_freq_energy(profile, rho)
    if energy == 0.0:
        return 0.0
    return math.exp(math.log(energy) - (2 * r + n) * math.log(rho))


def homogeneous_norm(profile, eta=0.0):
    """Homogeneous Sobolev norm ``||u||_{H^eta}`` from the radial profile."""
    if profile.is_zero():
        return 0.0
    return math.sqrt(_radial_integral(profile, math.inf, weight_exponent=eta))


# -- estimation ------------------------------------------------------------------

@dataclass(frozen=True)
class DecayCharacterEstimate:
    """Result of :func:`estimate_decay_character`.

    ``r_star`` is ``nan`` when the status is ``indeterminate`` or
    ``degenerate``, ``+inf`` for ``zero`` and ``-n/2`` for ``infinite``.
    ``P_value`` is 0 or ``inf`` in the latter two cases.
    """

    r_star: float
    P_value: float
    status: str
    slope: float
    residual: float
    rho: tuple
    energy: tuple

    @property
    def ok(self):
        return self.status == OK

    def to_dict(self):
        return {"r_star": self.r_star, "P_value": self.P_value, "status": self.status,
                "slope": self.slope, "residual": self.residual,
                "rho_min": self.rho[0] if self.rho else None,
                "rho_max": self.rho[-1] if self.rho else None}


def default_rho_max(profile):
    return min(1.0, profile.support)


def estimate_decay_character(profile, rho_max=None, k_min=4, k_max=16, residual_tol=0.05):
    """Estimate the decay character by a log-log fit of the low-frequency energy.

    The energy is sampled at ``rho = rho_max * 2**-k`` for ``k_min <= k <= k_max``;
    the least-squares slope ``s`` gives ``r* = (s - n)/2`` and the indicator
    at the smallest radius gives ``P``.

    Parameters
    ----------
    residual_tol : float
        Largest accepted RMS residual of the fit in ``log E``; above it the
        status is ``indeterminate`` and no character is reported.
    """
    n = profile.n
    if rho_max is None:
        rho_max = default_rho_max(profile)
    k = np.arange(k_min, k_max + 1)
    if k.size < 8:
        raise DecayCharacterError("the fit needs at least 8 radii")
    rho = rho_max * np.power(2.0, -k.astype(float))[::-1]
    energy = np.array([low_freq_energy(profile, r) for r in rho])
    nan = math.nan
    if profile.is_zero() or not np.any(energy > 0):
        return DecayCharacterEstimate(nan, 0.0, DEGENERATE, nan, nan, tuple(rho), tuple(energy))
    if np.any(energy <= 0):
        # vanishes identically near the origin: faster than any power
        return DecayCharacterEstimate(math.inf, 0.0, ZERO, nan, nan, tuple(rho), tuple(energy))
    x = np.log(rho)
    y = np.log(energy)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    r_hat = (slope - n) / 2
    # indicator at the fitted exponent along the ladder, from small to large rho
    log_ind = y - slope * x
    steps = np.diff(log_ind)  # log ratio P(2 rho) / P(rho)
    jump = math.log(4.0)
    if np.all(steps > 0) and steps[0] > jump:
        # P(rho) falls by more than 4x per halving towards 0
        return DecayCharacterEstimate(math.inf, 0.0, ZERO, float(slope), resid,
                                      tuple(rho), tuple(energy))
    if (np.all(steps < 0) and steps[0] < -jump) or not r_hat > -n / 2:
        return DecayCharacterEstimate(-n / 2, math.inf, INFINITE, float(slope), resid,
                                      tuple(rho), tuple(energy))
    if resid > residual_tol:
        return DecayCharacterEstimate(nan, nan, INDETERMINATE, float(slope), resid,
                                      tuple(rho), tuple(energy))
    P = decay_indicator(profile, r_hat, rho[0])
    return DecayCharacterEstimate(float(r_hat), P, OK, float(slope), resid,
                                  tuple(rho), tuple(energy))


def shift_character(profile, s):
    """Multiply the profile by ``rho**(-s)``, lowering the decay character by ``s``.

    Raises if the estimated character of the result would be ``<= -n/2``,
    i.e. the shifted profile is not square integrable near 0.
    """
    if s < 0:
        raise DecayCharacterError(f"shift must be nonnegative, got {s}")
    if s == 0:
        return profile
    est = estimate_decay_character(profile)
    if est.status == OK:
        r_star = est.r_star
    elif est.status == ZERO:
        r_star = math.inf
    else:
        raise DecayCharacterError(f"cannot shift a profile with status {est.status!r}")
    if not r_star - s > -profile.n / 2:
        raise DecayCharacterError(
            f"shift {s:g} leaves character {r_star - s:.3g} <= -n/2 = {-profile.n / 2:g}")
    return replace(profile, shift=profile.shift + s)


@dataclass(frozen=True)
class PNorm:
    """Data norm: homogeneous Sobolev part plus the square root of the indicator."""

    value: float
    sobolev: float
    indicator: float
    status: str

    def __float__(self):
        return float(self.value)


def p_norm(profile, eta=0.0, estimate=None):
    """``||u||_{H^eta} + P^(1/2)`` with ``P`` the estimated decay indicator at ``r*``.

    A zero profile gives 0 with status ``degenerate``. If the indicator is
    infinite or indeterminate the norm is not finite and an error is raised.
    """
    if eta < 0:
        raise DecayCharacterError("eta must be nonnegative")
    if profile.is_zero():
        return PNorm(0.0, 0.0, 0.0, DEGENERATE)
    sob = homogeneous_norm(profile, eta)
    est = estimate if estimate is not None else estimate_decay_character(profile)
    if est.status in (OK, ZERO):
        P = est.P_value
    elif est.status == DEGENERATE:
        return PNorm(sob, sob, 0.0, DEGENERATE)
    else:
        raise DecayCharacterError(f"decay indicator unavailable (status {est.status!r})")
    return PNorm(sob + math.sqrt(P), sob, P, est.status)


class DecayCharacterEstimator(BaseEstimator):
    """Scikit-learn style wrapper around :func:`estimate_decay_character`.

    ``fit`` takes a :class:`SpectralProfile` and sets ``r_star_``, ``P_``,
    ``status_`` and ``estimate_``.
    """

    def __init__(self, rho_max=None, k_min=4, k_max=16, residual_tol=0.05):
        self.rho_max = rho_max
        self.k_min = k_min
        self.k_max = k_max
        self.residual_tol = residual_tol

    def fit(self, profile, y=None):
        if not isinstance(profile, SpectralProfile):
            raise TypeError("fit expects a SpectralProfile")
        est = estimate_decay_character(profile, self.rho_max, self.k_min, self.k_max,
                                       self.residual_tol)
        self.estimate_ = est
        self.r_star_ = est.r_star
        self.P_ = est.P_value
        self.status_ = est.status
        return self

    def transform(self, profiles):
        """Characters of several profiles as an ``(m, 2)`` array ``[r*, P]``."""
        out = []
        for p in profiles:
            est = estimate_decay_character(p, self.rho_max, self.k_min, self.k_max,
                                           self.residual_tol)
            out.append((est.r_star, est.P_value))
        return np.array(out, dtype=float).reshape(-1, 2)
