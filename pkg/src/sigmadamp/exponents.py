"""Closed-form exponent calculators for the semilinear problem.

All functions use exact :class:`fractions.Fraction` arithmetic when every
input is an ``int`` or ``Fraction`` and double precision otherwise.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

NONDECREASING = "nondecreasing"
DECREASING = "decreasing"


class ExponentError(ValueError):
    """Inputs outside the range where a formula is defined."""


def _exact(*values):
    return all(isinstance(v, Rational) for v in values)


def _num(x, exact):
    return Fraction(x) if exact else float(x)


def as_json_number(x):
    """Float value of an exact or floating result (``None`` and ``inf`` kept)."""
    if x is None:
        return None
    return float(x)


def as_text(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else str(x.numerator)
    if x is None:
        return "none"
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


@dataclass(frozen=True)
class ExponentInputs:
    """Parameters entering the exponent formulas.

    ``r0`` and ``r1`` are the decay characters of the two data; ``branch``
    selects the sign of b' (``nondecreasing`` or ``decreasing``) and only
    matters when ``delta > 0``.
    """

    sigma: object = 1
    delta: object = 0
    gamma: object = 0
    n: int = 1
    r0: object = 0
    r1: object = 0
    branch: str = NONDECREASING

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ExponentError(f"n must be a positive integer, got {self.n}")
        if self.sigma < 1:
            raise ExponentError(f"sigma must be >= 1, got {self.sigma}")
        if not 0 <= self.delta <= Fraction(self.sigma) / 2:
            raise ExponentError(f"delta must lie in [0, sigma/2], got {self.delta}")
        if not 0 <= self.gamma < self.sigma:
            raise ExponentError(f"gamma must lie in [0, sigma), got {self.gamma}")
        if self.branch not in (NONDECREASING, DECREASING):
            raise ExponentError(f"unknown branch {self.branch!r}")

    @property
    def exact(self):
        return _exact(self.sigma, self.delta, self.gamma, self.n, self.r0, self.r1)

    def values(self):
        e = self.exact
        return tuple(_num(v, e) for v in
                     (self.sigma, self.delta, self.gamma, self.n, self.r0, self.r1))

    @property
    def m(self):
        """``min{r0, r1 - 2 delta}``, the effective character of the data pair."""
        s, d, g, n, r0, r1 = self.values()
        return min(r0, r1 - 2 * d)

    @classmethod
    def from_config(cls, block):
        def read(key, default):
            v = block.get(key, default)
            if isinstance(v, str):
                return Fraction(v)
            return v
        return cls(sigma=read("sigma", 1), delta=read("delta", 0), gamma=read("gamma", 0),
                   n=int(block.get("n", 1)), r0=read("r0", 0), r1=read("r1", 0),
                   branch=block.get("branch", NONDECREASING))


@dataclass(frozen=True)
class HypothesisCheck:
    ok: bool
    condition: str
    vacuous_link: bool = False
    note: str = ""


def check_hypotheses(inputs):
    """Sign conditions on the data characters required for global existence.

    Returns a :class:`HypothesisCheck`; for the decreasing branch the
    middle link of the chain always holds and is reported as vacuous.
    """
    s, d, g, n, r0, r1 = inputs.values()
    m = inputs.m
    half = -n / 2 if not inputs.exact else Fraction(-n, 2)
    if d == 0:
        lo = min(r0, r1)
        ok = half < lo <= 0
        return HypothesisCheck(ok, "-n/2 < min{r0, r1} <= 0")
    if inputs.branch == NONDECREASING:
        ok = half < m <= -2 * d
        return HypothesisCheck(ok, "-n/2 < min{r0, r1 - 2 delta} <= -2 delta")
    low = min(r0, r1 - 2 * s - 2 * d)
    ok = half < low <= m <= -2 * d
    return HypothesisCheck(
        ok, "-n/2 < min{r0, r1 - 2 sigma - 2 delta} <= min{r0, r1 - 2 delta} <= -2 delta",
        vacuous_link=True,
        note="the middle inequality holds for every input since r1 - 2 sigma < r1")


def _require(inputs):
    chk = check_hypotheses(inputs)
    if not chk.ok:
        raise ExponentError(f"hypothesis violated: {chk.condition}")
    return chk


def omega(inputs):
    """``n / (n + min{r0, r1 - 2 delta} + 2 delta)``, in ``[1, 2)`` under the hypotheses."""
    _require(inputs)
    s, d, g, n, r0, r1 = inputs.values()
    return n / (n + inputs.m + 2 * d)


def p_star(inputs):
    """Lower threshold ``(n + 2 w (sigma - delta)) / (w (n + m + gamma))`` on the power."""
    w = omega(inputs)
    s, d, g, n, r0, r1 = inputs.values()
    den = w * n + w * inputs.m + w * g
    if not den > 0:
        raise ExponentError("p* denominator is not positive")
    return (n + 2 * w * (s - d)) / den


@dataclass(frozen=True)
class Interval:
    lower: object
    lower_closed: bool
    upper: object
    upper_closed: bool

    def __contains__(self, p):
        lo = p >= self.lower if self.lower_closed else p > self.lower
        if self.upper is None or self.upper == math.inf:
            return lo
        hi = p <= self.upper if self.upper_closed else p < self.upper
        return lo and hi

    def __str__(self):
        left = "[" if self.lower_closed else "("
        if self.upper is None or self.upper == math.inf:
            return f"{left}{as_text(self.lower)}, inf)"
        right = "]" if self.upper_closed else ")"
        return f"{left}{as_text(self.lower)}, {as_text(self.upper)}{right}"


def admissible_p_range(inputs):
    """Powers allowed by the global existence result, or ``None``.

    The window ``[2/w, inf)`` (``n <= 2 sigma - 2 gamma``) or
    ``[2/w, n/(n - 2 sigma + 2 gamma)]`` (up to ``n <= 4(sigma - gamma)/(2 - w)``)
    intersected with ``(p*, inf)``.
    """
    w = omega(inputs)
    ps = p_star(inputs)
    s, d, g, n, r0, r1 = inputs.values()
    two_over_w = 2 / w
    if ps >= two_over_w:
        lower, lower_closed = ps, False
    else:
        lower, lower_closed = two_over_w, True
    if n <= 2 * s - 2 * g:
        return Interval(lower, lower_closed, math.inf, False)
    if n <= (4 * s - 4 * g) / (2 - w):
        upper = n / (n - 2 * s + 2 * g)
        if upper < lower or (upper == lower and not lower_closed):
            return None
        return Interval(lower, lower_closed, upper, True)
    return None


def gn_theta(kappa, r, q, q0, q1, n):
    """Interpolation exponent ``theta`` of the fractional Gagliardo-Nirenberg inequality.

    ``theta = (1/q0 - 1/q + kappa/n) / (1/q0 - 1/q1 + r/n)``, which must lie
    in ``[kappa/r, 1]``.
    """
    exact = _exact(kappa, r, q, q0, q1, n)
    kappa, r, q, q0, q1, n = (_num(v, exact) for v in (kappa, r, q, q0, q1, n))
    for name, v in (("q", q), ("q0", q0), ("q1", q1)):
        if not v > 1:
            raise ExponentError(f"{name} must exceed 1, got {v}")
    if not 0 <= kappa < r:
        raise ExponentError("need 0 <= kappa < r")
    den = 1 / q0 - 1 / q1 + r / n
    if den == 0:
        raise ExponentError("degenerate interpolation (zero denominator)")
    theta = (1 / q0 - 1 / q + kappa / n) / den
    if not kappa / r <= theta <= 1:
        raise ExponentError(f"theta = {as_text(theta)} outside [kappa/r, 1]")
    return theta


def theta_pair(inputs, p):
    """Exponents used for ``|| |D|^gamma u ||`` in ``L^{2p}`` and ``L^{w p}``."""
    s, d, g, n, r0, r1 = inputs.values()
    p = _num(p, inputs.exact and _exact(p))
    w = omega(inputs)
    th1 = (n * (p - 1) + 2 * g * p) / (2 * s * p)
    th2 = (n * (w * p - 2) + 2 * w * g * p) / (2 * w * s * p)
    return th1, th2


def critical_p(sigma, delta, n):
    """Fujita-type exponent ``1 + 2 sigma / (n - 2 delta)``."""
    exact = _exact(sigma, delta, n)
    sigma, delta, n = (_num(v, exact) for v in (sigma, delta, n))
    if not n - 2 * delta > 0:
        raise ExponentError("critical exponent needs n > 2 delta")
    return 1 + 2 * sigma / (n - 2 * delta)


def r_star_lower_bound_from_negative_sobolev(eta, n):
    """Lower bound ``eta - n/2`` on the character of data in a negative Sobolev space."""
    exact = _exact(eta, n)
    eta, n = _num(eta, exact), _num(n, exact)
    if not 0 < eta < n / 2:
        raise ExponentError(f"eta must lie in (0, n/2), got {eta}")
    return eta - n / 2


def exponent_table(inputs, p_values=()):
    """All exponents for ``inputs`` as a JSON-ready dict (exact values as text too)."""
    chk = check_hypotheses(inputs)
    s, d, g, n, r0, r1 = inputs.values()
    out = {"inputs": {"sigma": as_text(s), "delta": as_text(d), "gamma": as_text(g),
                      "n": int(n), "r0": as_text(r0), "r1": as_text(r1),
                      "branch": inputs.branch},
           "exact": inputs.exact,
           "hypotheses": {"ok": chk.ok, "condition": chk.condition,
                          "vacuous_link": chk.vacuous_link},
           "m": as_text(inputs.m)}
    try:
        out["critical_p"] = as_text(critical_p(inputs.sigma, inputs.delta, inputs.n))
    except ExponentError as exc:
        out["critical_p"] = None
        out["critical_p_error"] = str(exc)
    if chk.ok:
        w = omega(inputs)
        out["omega"] = as_text(w)
        out["p_star"] = as_text(p_star(inputs))
        rng = admissible_p_range(inputs)
        out["admissible_p"] = None if rng is None else str(rng)
        thetas = []
        for p in p_values:
            th1, th2 = theta_pair(inputs, p)
            thetas.append({"p": as_text(p), "theta_2p": as_text(th1),
                           "theta_wp": as_text(th2),
                           "admissible": rng is not None and p in rng})
        out["theta"] = thetas
    return out
