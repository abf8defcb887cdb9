"""Fourier-mode integration of the linear damped sigma-evolution equation.

Each radial frequency ``xi`` evolves independently by

    u'' + xi^(2 sigma) u + b(t) xi^(2 delta) u' = 0,

so the linear solution for radial data is assembled from a one-dimensional
family of mode trajectories. Norms are rebuilt by radial quadrature over
``[xi_min, xi_max]`` plus a low-frequency piece and a tail bound.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad, trapezoid
from sklearn.base import BaseEstimator, TransformerMixin

from ._rk import DormandPrince, StepSizeUnderflow
from .decay_character import RadialFunction, SpectralProfile, _radial_integral, sphere_area

# steps per oscillation period at the highest active frequency
STEPS_PER_PERIOD = 20
# a mode whose |u| + |u_t| falls below this fraction of its data is frozen at 0
FREEZE_RATIO = 1e-14
GL_ORDER = 8


class ModeIntegrationError(RuntimeError):
    """A mode could not be integrated (typically step-size underflow)."""

    def __init__(self, msg, xi=None):
        self.xi = xi
        super().__init__(msg)


@dataclass
class ModeTrajectory:
    """Samples of ``(u, u_t)`` for one or more frequencies.

    ``u`` and ``ut`` have shape ``(len(times),)`` for a single frequency and
    ``(len(times), len(xi))`` for a batch.
    """

    xi: object
    times: np.ndarray
    u: np.ndarray
    ut: np.ndarray
    rtol: float
    nsteps: int = 0
    nfev: int = 0

    def energy(self, sigma):
        xi = np.asarray(self.xi, dtype=float)
        return 0.5 * self.ut**2 + 0.5 * xi ** (2 * sigma) * self.u**2


def _check_grid(t_grid, start):
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("time grid must be a non-empty 1-D array")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing")
    if t[0] < start:
        raise ValueError(f"time grid must start at or after {start}")
    return t


def integrate_modes(spec, xi, u0, u1, t_grid, rtol=1e-9, s=0.0, sigma=None, delta=None,
                    atol_scale=1e-3):
    """Integrate many modes at once from time ``s`` and sample them on ``t_grid``.

    Parameters
    ----------
    spec : DampingSpec
    xi, u0, u1 : array_like
        Frequencies and initial data ``u(s) = u0``, ``u_t(s) = u1``.
    t_grid : array_like
        Increasing output times, all ``>= s``.
    rtol : float
        Local error tolerance per step (``1e-12 <= rtol <= 1e-4``).
    atol_scale : float
        The absolute tolerance of a mode is ``rtol * atol_scale * (|u0| + |u1|)``.

    Returns
    -------
    ModeTrajectory
        Batched trajectory with arrays of shape ``(len(t_grid), len(xi))``.
    """
    if not 1e-12 <= rtol <= 1e-4:
        raise ValueError("rtol must lie in [1e-12, 1e-4]")
    sigma = spec.sigma if sigma is None else sigma
    delta = spec.delta if delta is None else delta
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    u0 = np.broadcast_to(np.asarray(u0, dtype=float), xi.shape).copy()
    u1 = np.broadcast_to(np.asarray(u1, dtype=float), xi.shape).copy()
    times = _check_grid(t_grid, s)
    nt, nx = times.size, xi.size
    U = np.zeros((nt, nx))
    V = np.zeros((nt, nx))

    k_all = xi ** (2 * sigma)
    with np.errstate(divide="ignore"):
        c_all = np.power(xi, 2 * delta)
        cap_all = np.where(xi > 0, 2 * np.pi / np.power(xi, sigma) / STEPS_PER_PERIOD, np.inf)
    scale_all = np.abs(u0) + np.abs(u1)
    active = np.flatnonzero(scale_all > 0)

    # samples at t == s are the data themselves
    i0 = 0
    while i0 < nt and times[i0] == s:
        U[i0], V[i0] = u0, u1
        i0 += 1

    bfun = spec.scalar_b()
    state = {"nsteps": 0, "nfev": 0}
    t = float(s)
    y = np.vstack([u0[active], u1[active]])
    h = None
    f = None

    def make_solver(idx):
        k = k_all[idx]
        c = c_all[idx]
        cap = float(np.min(cap_all[idx])) if idx.size else np.inf

        def rhs(tt, yy):
            out = np.empty_like(yy)
            out[0] = yy[1]
            out[1] = -k * yy[0] - bfun(tt) * c * yy[1]
            return out

        atol = rtol * atol_scale * scale_all[idx]
        return DormandPrince(rhs, rtol=rtol, atol=atol, max_step=cap)

    solver = make_solver(active)
    for i in range(i0, nt):
        if active.size == 0:
            break
        try:
            y, f, h = solver.advance(t, y, times[i], h=h, f0=f)
        except StepSizeUnderflow as exc:
            xi_bad = float(np.max(xi[active]))
            raise ModeIntegrationError(
                f"mode integration failed near xi={xi_bad:.4g}: {exc}; "
                "lower the frequency ceiling", xi=xi_bad) from None
        t = float(times[i])
        U[i, active] = y[0]
        V[i, active] = y[1]
        state["nsteps"] += solver.nsteps
        state["nfev"] += solver.nfev
        solver.nsteps = solver.nfev = 0
        alive = (np.abs(y[0]) + np.abs(y[1])) >= FREEZE_RATIO * scale_all[active]
        if not alive.all():
            active = active[alive]
            y = y[:, alive]
            f = None
            solver = make_solver(active)
    return ModeTrajectory(xi, times, U, V, rtol, state["nsteps"], state["nfev"])


def _single(traj):
    return ModeTrajectory(float(traj.xi[0]), traj.times, traj.u[:, 0], traj.ut[:, 0],
                          traj.rtol, traj.nsteps, traj.nfev)


def integrate_mode(spec, xi_mag, init, t_grid, rtol=1e-9, sigma=None, delta=None, s=0.0):
    """Trajectory of a single mode with data ``init = (u0, u1)`` at time ``s``."""
    u0, u1 = init
    return _single(integrate_modes(spec, [xi_mag], [u0], [u1], t_grid, rtol, s, sigma, delta))


def kernel_K1(spec, xi_mag, s, t_grid, rtol=1e-9, sigma=None, delta=None):
    """Kernel for data ``(0, 1)`` prescribed at time ``s``: samples of K1 and dK1/dt."""
    return integrate_mode(spec, xi_mag, (0.0, 1.0), t_grid, rtol, sigma, delta, s=s)


def kernel_K0(spec, xi_mag, t_grid, rtol=1e-9, sigma=None, delta=None):
    """Kernel for data ``(1, 0)`` at time 0: samples of K0 and dK0/dt."""
    return integrate_mode(spec, xi_mag, (1.0, 0.0), t_grid, rtol, sigma, delta, s=0.0)


# -- radial quadrature --------------------------------------------------------

def radial_nodes(xi_min, xi_max, n_nodes=96, breakpoints=(), order=GL_ORDER):
    """Gauss-Legendre panels in ``log xi`` on ``[xi_min, xi_max]``.

    Panels never straddle a breakpoint (a profile cutoff), so piecewise smooth
    data are integrated at full order. Returns ``(nodes, weights)`` for
    integrals ``int f(xi) dxi``.
    """
    if not 0 < xi_min < xi_max:
        raise ValueError("need 0 < xi_min < xi_max")
    lo, hi = math.log(xi_min), math.log(xi_max)
    cuts = sorted({math.log(b) for b in breakpoints if xi_min < b < xi_max})
    edges = [lo] + cuts + [hi]
    spans = np.diff(edges)
    panels_total = max(len(spans), int(round(n_nodes / order)))
    counts = np.maximum(1, np.round(spans / spans.sum() * panels_total).astype(int))
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b, m in zip(edges[:-1], edges[1:], counts):
        sub = np.linspace(a, b, m + 1)
        for p, q in zip(sub[:-1], sub[1:]):
            v = 0.5 * (q - p) * x + 0.5 * (q + p)
            rho = np.exp(v)
            nodes.append(rho)
            weights.append(0.5 * (q - p) * w * rho)
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass
class LinearRunResult:
    """Norms of the linear solution sampled on ``times``.

    ``norms[alpha]`` is the homogeneous Sobolev norm of order ``alpha`` of
    ``u(t)``; ``ut_norm`` the L2 norm of ``u_t``; ``tail_bound`` bounds the
    part of the L2 norm above ``xi_max`` and ``quad_error`` estimates the
    quadrature error of the L2 norm (Gauss-Legendre against trapezoid on the
    same nodes, so it is pessimistic).
    """

    times: np.ndarray
    B: np.ndarray
    norms: dict
    ut_norm: np.ndarray
    tail_bound: np.ndarray
    n: int
    xi_min: float
    xi_max: float
    nodes: np.ndarray = field(repr=False, default=None)
    nsteps: int = 0
    quad_error: np.ndarray = None

    @property
    def error_bar(self):
        q = 0.0 if self.quad_error is None else self.quad_error
        return self.tail_bound + q

    def columns(self):
        cols = {"t": self.times, "B": self.B}
        for a in sorted(self.norms):
            cols[f"norm_alpha_{a:g}"] = self.norms[a]
        cols["norm_ut"] = self.ut_norm
        cols["tail_bound"] = self.tail_bound
        if self.quad_error is not None:
            cols["quad_error"] = self.quad_error
        return cols


def _product_profile(p, q):
    """Profile ``sqrt(|p| |q|)`` so that its square is the product of the two."""
    ep, eq = p.origin_exponent, q.origin_exponent
    e0 = None if ep is None or eq is None else 0.5 * (ep + eq)
    fn = RadialFunction(lambda r: np.sqrt(p(r) * q(r)), support=min(p.support, q.support),
                        knots=tuple(sorted(set(p.knots) | set(q.knots))), origin_exponent=e0)
    return SpectralProfile(p.n, fn)


def _moment(p, q, upper, w):
    if p.is_zero() or q.is_zero():
        return 0.0
    prof = p if p is q else _product_profile(p, q)
    return _radial_integral(prof, upper, weight_exponent=w)


def _tail_moment(p, xi_max, w):
    """``c_n int_{xi_max}^inf rho^(n-1+2w) |p|^2``."""
    if p.is_zero() or p.support <= xi_max:
        return 0.0
    expo = p.n - 1 + 2 * w
    edges = [xi_max] + sorted(k for k in p.knots if xi_max < k < p.support) + [p.support]
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            total += quad(lambda r: r**expo * float(p(r)) ** 2, a, b, limit=200)[0]
    return sphere_area(p.n) * total


def reconstruct_norms(spec, profiles, alphas=(0.0,), t_grid=None, n_nodes=96,
                      xi_min=1e-4, xi_max=32.0, rtol=1e-9, tail_tolerance=0.01,
                      sigma=None, delta=None):
    """Norms of the linear solution with radial data ``profiles = (u0, u1)``.

    The squared norm ``c_n int rho^(n-1+2 alpha) |u(t, rho)|^2 drho`` is split into

    * ``[xi_min, xi_max]``: Gauss-Legendre panels in ``log rho`` with one mode
      per node;
    * ``[0, xi_min]``: data moments times the kernels at ``xi_min`` (the
      kernels vary by less than ``xi_min^(2 sigma - 2 delta) t`` there);
    * ``[xi_max, inf)``: not integrated; bounded through mode energy
      monotonicity and reported as ``tail_bound`` (L2 part).

    Raises if the tail bound exceeds ``tail_tolerance`` times the L2 norm at
    any output time.
    """
    p0, p1 = profiles
    if p0.n != p1.n:
        raise ValueError("profiles must share the dimension")
    n = p0.n
    sigma = spec.sigma if sigma is None else sigma
    delta = spec.delta if delta is None else delta
    if n_nodes < 64:
        raise ValueError("at least 64 quadrature nodes are required")
    times = _check_grid(t_grid if t_grid is not None else np.geomspace(1, 1e4, 41), 0.0)
    alphas = tuple(float(a) for a in alphas)
    cn = sphere_area(n)
    breaks = set(p0.knots) | set(p1.knots)
    breaks |= {p0.support, p1.support}
    nodes, weights = radial_nodes(xi_min, xi_max, n_nodes, breakpoints=breaks)

    a0 = np.asarray(p0(nodes), dtype=float)
    a1 = np.asarray(p1(nodes), dtype=float)
    nz = np.flatnonzero((a0 != 0) | (a1 != 0))
    # two extra kernel modes at xi_min for the low-frequency piece
    xs = np.concatenate([nodes[nz], [xi_min, xi_min]])
    d0 = np.concatenate([a0[nz], [1.0, 0.0]])
    d1 = np.concatenate([a1[nz], [0.0, 1.0]])
    traj = integrate_modes(spec, xs, d0, d1, times, rtol, 0.0, sigma, delta)
    U = np.zeros((times.size, nodes.size))
    V = np.zeros((times.size, nodes.size))
    U[:, nz] = traj.u[:, :-2]
    V[:, nz] = traj.ut[:, :-2]
    K0, dK0 = traj.u[:, -2], traj.ut[:, -2]
    K1, dK1 = traj.u[:, -1], traj.ut[:, -1]

    def low_piece(w, f0, f1):
        m00 = _moment(p0, p0, xi_min, w)
        m11 = _moment(p1, p1, xi_min, w)
        m01 = _moment(p0, p1, xi_min, w)
        return f0**2 * m00 + 2 * f0 * f1 * m01 + f1**2 * m11

    norms = {}
    for a in alphas:
        q = cn * (U**2 * (weights * nodes ** (n - 1 + 2 * a))).sum(axis=1)
        q = q + low_piece(a, K0, K1)
        norms[a] = np.sqrt(np.maximum(q, 0.0))
    qt = cn * (V**2 * (weights * nodes ** (n - 1))).sum(axis=1) + low_piece(0.0, dK0, dK1)
    ut_norm = np.sqrt(np.maximum(qt, 0.0))

    # |u(t)|^2 <= |u0|^2 + xi^(-2 sigma) |u1|^2 by energy monotonicity
    tail = _tail_moment(p0, xi_max, 0.0) + _tail_moment(p1, xi_max, -sigma)
    tail_bound = np.full(times.size, math.sqrt(tail))
    dens = U**2 * nodes ** (n - 1)
    low0 = low_piece(0.0, K0, K1)
    l2 = np.sqrt(np.maximum(cn * (dens * weights).sum(axis=1) + low0, 0.0))
    # trapezoid in log rho over the same nodes as a second rule
    order = np.argsort(nodes)
    logs = np.log(nodes[order])
    trap = trapezoid(dens[:, order] * nodes[order], logs, axis=1)
    quad_error = np.abs(l2 - np.sqrt(np.maximum(cn * trap + low0, 0.0)))
    bad = tail_bound > tail_tolerance * l2
    if tail > 0 and np.any(bad):
        t_bad = times[np.argmax(bad)]
        raise ValueError(f"tail above xi_max={xi_max:g} exceeds {tail_tolerance:.0%} of the "
                         f"L2 norm at t={t_bad:g}; raise xi_max")
    Bvals = np.array([spec.B(0.0, t) for t in times])
    return LinearRunResult(times, Bvals, norms, ut_norm, tail_bound, n, xi_min, xi_max,
                           nodes, traj.nsteps, quad_error)


class LinearDampedEvolution(TransformerMixin, BaseEstimator):
    """Estimator-style front end to :func:`reconstruct_norms`.

    ``fit((u0, u1))`` integrates the modes on ``times`` and stores
    ``result_``; ``transform`` returns the norm columns as an array with one
    row per output time (``[norm_alpha..., norm_ut]``); ``X`` is ignored
    there, the rows come from the fitted data.
    """

    def __init__(self, damping=None, alphas=(0.0,), times=None, n_nodes=96, xi_min=1e-4,
                 xi_max=32.0, rtol=1e-9):
        self.damping = damping
        self.alphas = alphas
        self.times = times
        self.n_nodes = n_nodes
        self.xi_min = xi_min
        self.xi_max = xi_max
        self.rtol = rtol

    def fit(self, X, y=None):
        from .damping import DampingSpec

        spec = self.damping if self.damping is not None else DampingSpec.constant()
        self.result_ = reconstruct_norms(spec, X, self.alphas, self.times, self.n_nodes,
                                         self.xi_min, self.xi_max, self.rtol)
        return self

    def transform(self, X=None):
        r = self.result_
        cols = [r.norms[float(a)] for a in self.alphas] + [r.ut_norm]
        return np.column_stack(cols)
