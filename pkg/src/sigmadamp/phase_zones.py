"""Phase-space geometry of the Fourier mode equation.

For the mode equation ``v'' + |xi|^(2 sigma) v + b(t) |xi|^(2 delta) v' = 0``
the extended phase space ``(t, xi)`` splits into a hyperbolic part, where
``|xi|^(sigma - 2 delta) > b(t)/2``, and an elliptic part. Both are refined
into five zones by comparing the weight ``<xi>_b`` with ``h = |xi|^(2 delta) b / 2``:

* ``Hyp``:  ``<xi>_b >= N h`` in the hyperbolic part
* ``Pd``:   ``eps h <= <xi>_b <= N h`` in the hyperbolic part
* ``Red``:  ``<xi>_b <= eps h``
* ``Ell``:  ``<xi>_b >= eps h`` and ``|xi|^(2 delta) >= d0 / ((1 + t) b)`` in the elliptic part
* ``Diss``: ``|xi|^(2 delta) <= d0 / ((1 + t) b)`` in the elliptic part

The closed zones overlap on their boundaries; the first match in the order
Diss, Ell, Red, Pd, Hyp wins. For ``delta = 0`` the dissipative test does not
depend on ``xi`` and Diss is folded into Ell.

The module also evaluates the kernel bounds (envelopes) valid in the three
frequency regimes separated by :func:`omega_threshold` and
:func:`lambda_threshold`, with every implicit constant set to 1.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator, ClassifierMixin

from .damping import DampingSpec, PowerLaw


class ZoneError(ValueError):
    """Invalid zone parameters or a threshold undefined for the given exponents."""


class ZoneLabel(enum.Enum):
    Diss = "Diss"
    Ell = "Ell"
    Red = "Red"
    Pd = "Pd"
    Hyp = "Hyp"

    def __str__(self):
        return self.value


ZONE_ORDER = (ZoneLabel.Diss, ZoneLabel.Ell, ZoneLabel.Red, ZoneLabel.Pd, ZoneLabel.Hyp)


@dataclass(frozen=True)
class ZoneParams:
    """Zone constants.

    Parameters
    ----------
    N : float
        Hyperbolic zone constant (``N >= 1``).
    eps : float
        Reduced zone constant in ``(0, 1)``.
    d0 : float
        Dissipative zone constant.
    M : float
        Frequency splitting the two regimes when ``delta = sigma/2``.
    beta : float, optional
        Loss in the hyperbolic decay exponent ``1 - 2 beta``; defaults to ``eps``.
    c_prime : float
        Constant ``C'`` in the parabolic exponents ``exp(-C' |xi|^(2 sigma - 2 delta) B)``
        of the mid regimes, in ``(0, 1]``.
    """

    N: float = 2.0
    eps: float = 0.1
    d0: float = 2.0
    M: float = 1.0
    beta: float = None
    c_prime: float = 1.0

    def __post_init__(self):
        if not 0 < self.eps < 1 <= self.N:
            raise ZoneError("need 0 < eps < 1 <= N")
        if not self.d0 > 0 or not self.M > 0:
            raise ZoneError("d0 and M must be positive")
        if self.beta is not None and not 0 <= self.beta < 0.5:
            raise ZoneError("beta must lie in [0, 1/2)")
        if not 0 < self.c_prime <= 1:
            raise ZoneError("c_prime must lie in (0, 1]")

    @property
    def beta_value(self):
        return self.eps if self.beta is None else self.beta

    @classmethod
    def from_config(cls, block):
        block = dict(block or {})
        return cls(**{k: float(block[k]) for k in ("N", "eps", "d0", "M", "beta", "c_prime")
                     if k in block})


def _pow(x, e):
    # 0**0 = 1, which is what delta = 0 needs
    with np.errstate(divide="ignore"):
        return np.power(np.asarray(x, dtype=float), e)


def weight(spec, t, xi_mag):
    """``sqrt(| |xi|^(2 sigma) - |xi|^(4 delta) b(t)^2 / 4 |)``."""
    s, d = spec.sigma, spec.delta
    b = spec.b(t)
    return np.sqrt(np.abs(_pow(xi_mag, 2 * s) - _pow(xi_mag, 4 * d) * b**2 / 4))


def mass(spec, t, xi_mag):
    """``|xi|^(2 sigma) - |xi|^(4 delta) b^2 / 4 - |xi|^(2 delta) b' / 2``."""
    s, d = spec.sigma, spec.delta
    b = spec.b(t)
    return _pow(xi_mag, 2 * s) - _pow(xi_mag, 4 * d) * b**2 / 4 - _pow(xi_mag, 2 * d) * spec.db(t) / 2


def zone_codes(spec, params, t, xi_mag):
    """Vectorised classification; returns indices into :data:`ZONE_ORDER`."""
    t, xi = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(xi_mag, dtype=float))
    s, d = spec.sigma, spec.delta
    b = spec.b(t)
    w = weight(spec, t, xi)
    h = _pow(xi, 2 * d) * b / 2
    lhs = _pow(xi, s - 2 * d)
    hyp = lhs > b / 2
    ell = lhs < b / 2
    red = w <= params.eps * h
    wide = w >= params.eps * h
    if d == 0:
        diss = np.zeros(xi.shape, dtype=bool)
        ell_zone = ell & wide
    else:
        line = params.d0 / ((1 + t) * b)
        diss = ell & (_pow(xi, 2 * d) <= line)
        ell_zone = ell & wide & (_pow(xi, 2 * d) >= line)
    pd = hyp & (w >= params.eps * h) & (w <= params.N * h)
    hyp_zone = hyp & (w >= params.N * h)
    codes = np.full(xi.shape, -1, dtype=int)
    for code, mask in enumerate((diss, ell_zone, red, pd, hyp_zone)):
        codes = np.where((codes < 0) & mask, code, codes)
    return codes


def classify(spec, params, t, xi_mag):
    """Zone label of a single point ``(t, |xi|)``."""
    code = int(zone_codes(spec, params, t, xi_mag))
    if code < 0:
        raise ZoneError(f"point ({t}, {xi_mag}) matched no zone")
    return ZONE_ORDER[code]


# -- separating curves -------------------------------------------------------

def _invert_monotone(spec, f, target, horizon):
    """Smallest ``t`` in ``[0, horizon]`` with ``f(t) = target`` for monotone ``f``."""
    lo, hi = f(0.0) - target, f(horizon) - target
    if lo == 0:
        return 0.0
    if lo * hi > 0:
        return None
    return optimize.brentq(lambda x: f(x) - target, 0.0, horizon, xtol=1e-13, rtol=1e-13)


def _tabulated_monotone(spec):
    b = np.asarray(spec.family.b)
    dif = np.diff(b)
    return bool(np.all(dif >= 0) or np.all(dif <= 0))


def curve_t_ell(spec, params, xi_mag, horizon=None):
    """Time at which ``b(t) = 2 |xi|^(sigma - 2 delta) / sqrt(1 - eps^2)``, or ``None``.

    This is where the weight equals ``eps h`` inside the elliptic part.
    """
    if not xi_mag > 0:
        raise ZoneError("xi_mag must be positive")
    target = 2 * xi_mag ** (spec.sigma - 2 * spec.delta) / math.sqrt(1 - params.eps**2)
    fam = spec.family
    if isinstance(fam, PowerLaw):
        if fam.kappa == 0:
            return 0.0 if target == fam.mu else None
        t = (target / fam.mu) ** (1 / fam.kappa) - 1
        if t < 0 or not math.isfinite(t):
            return None
        return t
    if not _tabulated_monotone(spec):
        raise ZoneError("curve inversion needs a monotone damping coefficient")
    return _invert_monotone(spec, spec.b, target, horizon or fam.t_max)


def curve_t_diss(spec, params, xi_mag, horizon=None):
    """Time at which ``|xi|^(2 delta) (1 + t) b(t) = d0``, or ``None`` if above d0 at t=0."""
    if spec.delta == 0:
        raise ZoneError("the dissipative boundary is undefined for delta = 0")
    if not xi_mag > 0:
        raise ZoneError("xi_mag must be positive")
    c = xi_mag ** (2 * spec.delta)
    if c * spec.b(0.0) >= params.d0:
        return None
    fam = spec.family
    if isinstance(fam, PowerLaw):
        if fam.kappa <= -1:
            return None
        return (params.d0 / (fam.mu * c)) ** (1 / (1 + fam.kappa)) - 1
    return _invert_monotone(spec, lambda x: c * (1 + x) * spec.b(x), params.d0,
                            horizon or fam.t_max)


def omega_threshold(spec, params, s, t):
    """``(max(b(s), b(t)) sqrt(1 - eps^2) / 2)^(1 / (sigma - 2 delta))``."""
    if spec.delta >= spec.sigma / 2:
        raise ZoneError("Omega is undefined for delta = sigma/2; use the constant M")
    bmax = np.maximum(spec.b(s), spec.b(t))
    return (bmax * math.sqrt(1 - params.eps**2) / 2) ** (1 / (spec.sigma - 2 * spec.delta))


def lambda_threshold(spec, params, t):
    """``(d0 / ((1 + t) b(t)))^(1 / (2 delta))``."""
    if spec.delta == 0:
        raise ZoneError("Lambda is undefined for delta = 0")
    return (params.d0 / ((1 + np.asarray(t, dtype=float)) * spec.b(t))) ** (1 / (2 * spec.delta))


# -- kernel envelopes ----------------------------------------------------------

KINDS = ("K1", "dtK1", "K0", "dtK0")
HIGH, MID, LOW = "high", "mid", "low"


def envelope_regime(spec, params, t, s, xi_mag, kind="K1"):
    """Frequency regime(s) of ``xi_mag`` for the envelope of ``kind``.

    Returns an array of ``"high"``, ``"mid"`` or ``"low"``. With ``delta = 0``
    the low regime is empty; with ``delta = sigma/2`` the split is at ``M``
    and only ``"high"``/``"low"`` occur.
    """
    xi = np.asarray(xi_mag, dtype=float)
    if kind not in KINDS:
        raise ZoneError(f"unknown kernel kind {kind!r}")
    if kind in ("K0", "dtK0"):
        s = 0.0
    if spec.delta == spec.sigma / 2:
        return np.where(xi >= params.M, HIGH, LOW)
    om = omega_threshold(spec, params, s, t)
    lam = 0.0 if spec.delta == 0 else lambda_threshold(spec, params, t)
    return np.where(xi >= om, HIGH, np.where(xi >= lam, MID, LOW))


def bound_envelope(kind, spec, params, t, s, xi_mag, return_regime=False):
    """Kernel bound with unit constants, chosen by frequency regime.

    ``kind`` is one of ``K1`` (data ``(0, u1)`` given at time ``s``),
    ``dtK1``, ``K0`` and ``dtK0`` (data ``(u0, 0)`` at time 0; ``s`` is
    ignored). ``xi_mag`` may be an array.
    """
    if kind not in KINDS:
        raise ZoneError(f"unknown kernel kind {kind!r}")
    k0 = kind in ("K0", "dtK0")
    if k0:
        s = 0.0
    if s > t:
        raise ZoneError("need s <= t")
    xi = np.asarray(xi_mag, dtype=float)
    sig, d = spec.sigma, spec.delta
    beta = params.beta_value
    B = spec.B(s, t)
    Bh = spec.Bhat(s, t)
    bs, bt = spec.b(s), spec.b(t)
    regime = envelope_regime(spec, params, t, s, xi, kind)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        decay_hyp = np.exp(-(1 - 2 * beta) * _pow(xi, 2 * d) * Bh / 2)
        xs = _pow(xi, sig)
        if d == sig / 2:
            eB = np.exp(-params.c_prime * xs * B)
            et = np.exp(-xs * (t - s))
            low = {
                "K1": (et + eB) / (xs * bt),
                "dtK1": np.minimum(np.exp(-xs * Bh), et) + (1 / bs + 1 / bt) / bt * eB,
                "K0": et + eB,
                "dtK0": xs / bt * (et + eB),
            }[kind]
            mid = low
        else:
            q = _pow(xi, 2 * sig - 2 * d)
            eB = np.exp(-params.c_prime * q * B)
            et = np.exp(-q * (t - s))
            x2d = _pow(xi, 2 * d)
            mid = {
                "K1": eB / (bt * x2d),
                "dtK1": (1 / bs + 1 / bt) * _pow(xi, 2 * sig - 4 * d) / bt * eB,
                "K0": eB,
                "dtK0": q / bt * eB,
            }[kind]
            low = {
                "K1": et / (x2d * bt),
                "dtK1": np.minimum(np.exp(-x2d * Bh), np.exp(-xs * (t - s))),
                "K0": et,
                "dtK0": q / bt * et,
            }[kind]
        high = {
            "K1": decay_hyp / xs,
            "dtK1": decay_hyp,
            "K0": decay_hyp,
            "dtK0": xs * decay_hyp,
        }[kind]
    val = np.where(regime == HIGH, high, np.where(regime == MID, mid, low))
    if val.ndim == 0:
        val = float(val)
        regime = str(regime)
    return (val, regime) if return_regime else val


# -- estimator wrapper -------------------------------------------------------------

class ZoneClassifier(ClassifierMixin, BaseEstimator):
    """Predict zone labels for rows ``(t, |xi|)``.

    There is nothing to learn: ``fit`` only validates the configuration and
    records ``classes_``.
    """

    def __init__(self, damping=None, N=2.0, eps=0.1, d0=2.0, M=1.0):
        self.damping = damping
        self.N = N
        self.eps = eps
        self.d0 = d0
        self.M = M

    def _spec(self):
        return self.damping if self.damping is not None else DampingSpec.constant()

    def fit(self, X=None, y=None):
        self.params_ = ZoneParams(self.N, self.eps, self.d0, self.M)
        self.spec_ = self._spec()
        self.classes_ = np.array([z.value for z in ZONE_ORDER])
        return self

    def predict(self, X):
        if not hasattr(self, "params_"):
            self.fit()
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ZoneError("X must have two columns (t, |xi|)")
        codes = zone_codes(self.spec_, self.params_, X[:, 0], X[:, 1])
        return self.classes_[codes]
