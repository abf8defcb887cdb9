"""Pseudospectral solver for the semilinear damped sigma-evolution equation.

    u_tt + (-Delta)^sigma u + b(t) (-Delta)^delta u_t = | |D|^gamma u |^p

on a periodic box ``[-L, L)^n`` (``n <= 2``) as a stand-in for R^n. The
state ``(u, u_t)`` is kept in real space and advanced with the adaptive
Dormand-Prince pair; linear operators act on the real FFT and the power
nonlinearity is evaluated on a 3/2 zero-padded grid.
"""

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import fft as sfft

from ._rk import DormandPrince, StepSizeUnderflow
from .damping import FAIL, DampingSpec, g_b0, validate_effective
from .exponents import critical_p

DECAYED = "decayed"
BLOWN_UP = "blown_up"
INCONCLUSIVE = "inconclusive"

NONDECREASING = "b_nondecreasing"
DECREASING = "b_decreasing"

# fraction of the spectral energy allowed above 2/3 of the Nyquist frequency
DATA_TAIL_TOL = 1e-10
RUN_TAIL_TOL = 1e-6


class SemilinearError(ValueError):
    """Invalid grid, data or configuration."""


class ResolutionError(RuntimeError):
    """The solution is no longer resolved by the grid."""

    def __init__(self, msg, t=None, tail=None):
        self.t = t
        self.tail = tail
        super().__init__(msg)


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid on ``[-L, L)^n`` with ``M`` points per axis.

    Frequencies are ``k * pi / L`` for integer ``k``.
    """

    n: int = 1
    L: float = 40.0
    M: int = None

    def __post_init__(self):
        if self.n not in (1, 2):
            raise SemilinearError("the semilinear solver supports n = 1 or 2")
        if self.M is None:
            object.__setattr__(self, "M", 1024 if self.n == 1 else 256)
        M = int(self.M)
        if M < 64 or M & (M - 1):
            raise SemilinearError("M must be a power of two and at least 64")
        if not self.L > 0:
            raise SemilinearError("L must be positive")

    @property
    def dx(self):
        return 2 * self.L / self.M

    @property
    def cell(self):
        return self.dx**self.n

    @property
    def shape(self):
        return (self.M,) * self.n

    def coords(self):
        """Coordinate arrays (``x`` for n = 1, ``(x, y)`` with ``ij`` indexing for n = 2)."""
        x = -self.L + self.dx * np.arange(self.M)
        if self.n == 1:
            return (x,)
        return tuple(np.meshgrid(x, x, indexing="ij"))

    def radius(self):
        c = self.coords()
        return np.sqrt(sum(ci**2 for ci in c))

    def kmag(self, M=None):
        """``|k|`` on the real-FFT layout for ``M`` points per axis."""
        M = self.M if M is None else M
        d = 2 * self.L / M
        kr = 2 * np.pi * np.fft.rfftfreq(M, d)
        if self.n == 1:
            return kr
        kf = 2 * np.pi * np.fft.fftfreq(M, d)
        return np.sqrt(kf[:, None] ** 2 + kr[None, :] ** 2)

    @property
    def k_max(self):
        return math.pi / self.dx

    @classmethod
    def from_config(cls, block, n=None):
        block = dict(block or {})
        n = int(block.get("n", n if n is not None else 1))
        M = block.get("M")
        return cls(n, float(block.get("L", 40.0)), None if M is None else int(M))


# worker threads for the transforms (set from the command line)
FFT_WORKERS = 1


def _rfft(f, n):
    return sfft.rfftn(f, workers=FFT_WORKERS)


def _irfft(F, n, shape):
    return sfft.irfftn(F, shape, workers=FFT_WORKERS)


def apply_fractional(field, order, grid):
    """``|D|^order`` on the periodic grid (zero mode kept only for ``order = 0``)."""
    if order < 0:
        raise SemilinearError("order must be nonnegative")
    if order == 0:
        return np.array(field, dtype=float, copy=True)
    F = _rfft(np.asarray(field, dtype=float), grid.n)
    return _irfft(F * np.power(grid.kmag(), order), grid.n, grid.shape)


def integral(field, grid):
    """``int f dx`` over the box (the zero Fourier mode)."""
    return float(np.sum(field) * grid.cell)


def spectral_tail(field, grid):
    """Share of the spectral energy above two thirds of the Nyquist frequency."""
    F = np.abs(_rfft(np.asarray(field, dtype=float), grid.n)) ** 2
    total = F.sum()
    if total == 0:
        return 0.0
    return float(F[grid.kmag() > 2 * grid.k_max / 3].sum() / total)


class _Padder:
    """3/2 zero-padding for products on the real FFT layout.

    Nyquist modes are dropped on the way up and down; the resolution checks
    keep them negligible.
    """

    def __init__(self, grid):
        self.grid = grid
        self.n = grid.n
        M = grid.M
        self.h = M // 2
        self.Mp = 3 * M // 2
        self.shape_p = (self.Mp,) * self.n
        self.scale = (self.Mp / M) ** self.n

    def up(self, F):
        h, Mp = self.h, self.Mp
        if self.n == 1:
            G = np.zeros(Mp // 2 + 1, dtype=complex)
            G[:h] = F[:h]
            return _irfft(G * self.scale, 1, self.shape_p)
        G = np.zeros((Mp, Mp // 2 + 1), dtype=complex)
        G[:h, :h] = F[:h, :h]
        G[Mp - h + 1:, :h] = F[h + 1:, :h]
        return _irfft(G * self.scale, 2, self.shape_p)

    def down(self, f):
        h, Mp = self.h, self.Mp
        if self.n == 1:
            G = np.zeros(h + 1, dtype=complex)
            G[:h] = _rfft(f, 1)[:h]
            return G / self.scale
        Gp = _rfft(f, 2)
        G = np.zeros((2 * h, h + 1), dtype=complex)
        G[:h, :h] = Gp[:h, :h]
        G[h + 1:, :h] = Gp[Mp - h + 1:, :h]
        return G / self.scale


def abs_power(v, p):
    """``|v|^p`` as ``exp(p log|v|)``, 0 where ``v = 0``."""
    a = np.abs(v)
    out = np.zeros_like(a)
    nz = a > 0
    with np.errstate(over="ignore"):
        out[nz] = np.exp(p * np.log(a[nz]))
    return out


@dataclass
class FieldState:
    """Real fields ``u``, ``u_t`` on the grid at time ``t``."""

    u: np.ndarray
    ut: np.ndarray
    t: float = 0.0

    @property
    def finite(self):
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.ut)))


class _Operator:
    """Right-hand side on a stacked ``(2, ...)`` state."""

    def __init__(self, spec, gamma, p, grid, coefficient=1.0, dealias=True):
        if p <= 1:
            raise SemilinearError("p must exceed 1")
        if not 0 <= gamma < spec.sigma:
            raise SemilinearError("gamma must lie in [0, sigma)")
        self.grid = grid
        self.n = grid.n
        self.shape = grid.shape
        k = grid.kmag()
        self.k2s = np.power(k, 2 * spec.sigma)
        self.k2d = np.power(k, 2 * spec.delta)
        self.kg = None if gamma == 0 else np.power(k, gamma)
        self.p = float(p)
        self.coefficient = float(coefficient)
        self.bfun = spec.scalar_b()
        self.pad = _Padder(grid) if dealias else None

    def nonlinear_hat(self, U):
        if self.coefficient == 0:
            return 0.0
        V = U if self.kg is None else U * self.kg
        if self.pad is None:
            v = _irfft(V, self.n, self.shape)
            return self.coefficient * _rfft(abs_power(v, self.p), self.n)
        return self.coefficient * self.pad.down(abs_power(self.pad.up(V), self.p))

    def __call__(self, t, y):
        U = _rfft(y[0], self.n)
        W = _rfft(y[1], self.n)
        acc = -self.k2s * U - self.bfun(t) * self.k2d * W + self.nonlinear_hat(U)
        out = np.empty_like(y)
        out[0] = y[1]
        out[1] = _irfft(acc, self.n, self.shape)
        return out


def rhs(state, spec, gamma, p, grid, coefficient=1.0, dealias=True):
    """``(du, du_t)`` for the semilinear equation at ``state``."""
    op = _Operator(spec, gamma, p, grid, coefficient, dealias)
    out = op(state.t, np.stack([state.u, state.ut]))
    return out[0], out[1]


# -- data -------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldData:
    """Initial field ``amplitude * exp(-|x - center|^2 / (2 width^2))`` or zero."""

    kind: str = "gaussian"
    amplitude: float = 1.0
    width: float = 1.0
    center: tuple = ()

    def __post_init__(self):
        if self.kind not in ("gaussian", "zero"):
            raise SemilinearError(f"unknown data kind {self.kind!r}")
        if self.kind == "gaussian" and not self.width > 0:
            raise SemilinearError("gaussian width must be positive")

    def __call__(self, grid):
        if self.kind == "zero" or self.amplitude == 0:
            return np.zeros(grid.shape)
        c = tuple(self.center) + (0.0,) * (grid.n - len(self.center))
        r2 = sum((xi - ci) ** 2 for xi, ci in zip(grid.coords(), c))
        return self.amplitude * np.exp(-r2 / (2 * self.width**2))

    def scaled(self, factor):
        return FieldData(self.kind, self.amplitude * factor, self.width, self.center)

    @classmethod
    def from_config(cls, block):
        if block is None:
            return cls("zero")
        block = dict(block)
        return cls(block.get("kind", "gaussian"), float(block.get("amplitude", 1.0)),
                   float(block.get("width", 1.0)), tuple(block.get("center", ())))

    def to_config(self):
        return {"kind": self.kind, "amplitude": self.amplitude, "width": self.width,
                "center": list(self.center)}


def _check_resolved(u, grid, label):
    for f in (u,):
        peak = np.max(np.abs(f))
        if peak == 0:
            continue
        edge = np.abs(f).copy()
        if grid.n == 1:
            edge = max(edge[0], edge[-1])
        else:
            edge = max(edge[0].max(), edge[-1].max(), edge[:, 0].max(), edge[:, -1].max())
        if edge > 1e-12 * peak:
            raise SemilinearError(f"{label} does not decay to 1e-12 of its peak at the box edge; "
                                  "enlarge L")
        tail = spectral_tail(f, grid)
        if tail > DATA_TAIL_TOL:
            raise SemilinearError(f"{label} is under-resolved (spectral tail {tail:.2e}); "
                                  "increase M")


# -- solver ------------------------------------------------------------------------

@dataclass
class SemilinearConfig:
    """Everything that defines one semilinear run."""

    damping: DampingSpec
    gamma: float = 0.0
    p: float = 2.0
    grid: GridSpec = field(default_factory=GridSpec)
    u0: FieldData = field(default_factory=lambda: FieldData("zero"))
    u1: FieldData = field(default_factory=lambda: FieldData("zero"))
    horizon: float = 50.0
    escape_threshold: float = 1e6
    dt_safety: float = 1.0
    rtol: float = 1e-7
    n_out: int = 400
    coefficient: float = 1.0

    @property
    def sigma(self):
        return self.damping.sigma

    @property
    def delta(self):
        return self.damping.delta


@dataclass
class RunOutcome:
    """Result of :func:`solve_semilinear`.

    ``reference`` is ``||u0||_L2 + ||u1||_L2``; escape and decay are judged
    against it (``u0`` alone may vanish).
    """

    status: str
    blowup_time: float
    times: np.ndarray
    l2: np.ndarray
    hsigma: np.ndarray
    ut_l2: np.ndarray
    reference: float
    message: str = ""
    nsteps: int = 0
    warnings: tuple = ()

    def columns(self):
        return {"t": self.times, "norm_l2": self.l2, "norm_hsigma": self.hsigma,
                "norm_ut": self.ut_l2}

    def summary(self):
        d = {k: v for k, v in asdict(self).items() if k not in ("times", "l2", "hsigma", "ut_l2")}
        d["warnings"] = list(self.warnings)
        d["final_l2"] = float(self.l2[-1]) if self.l2.size else None
        return d


def _norms(y, grid, sigma):
    l2 = math.sqrt(np.sum(y[0] ** 2) * grid.cell)
    hs = math.sqrt(np.sum(apply_fractional(y[0], sigma, grid) ** 2) * grid.cell)
    ut = math.sqrt(np.sum(y[1] ** 2) * grid.cell)
    return l2, hs, ut


def _crossing_time(t0, v0, t1, v1, level):
    """Log-linear interpolation of the time where the norm reaches ``level``."""
    if not math.isfinite(v1) or v0 <= 0 or v1 <= v0:
        return t1
    frac = (math.log(level) - math.log(v0)) / (math.log(v1) - math.log(v0))
    return t0 + min(max(frac, 0.0), 1.0) * (t1 - t0)


def solve_semilinear(config):
    """Integrate one semilinear run and classify it.

    ``blown_up``: ``||u||_L2`` exceeds ``escape_threshold * reference`` or the
    state stops being finite (the step controller collapsing counts as
    well); the blow-up time is interpolated at the threshold crossing.
    ``decayed``: at the horizon ``||u||_L2 < 0.5 * reference`` and the norm
    is non-increasing over the last quarter of the outputs. Otherwise
    ``inconclusive``.
    """
    cfg = config
    grid = cfg.grid
    spec = cfg.damping
    op = _Operator(spec, cfg.gamma, cfg.p, grid, cfg.coefficient)
    u0, u1 = cfg.u0(grid), cfg.u1(grid)
    _check_resolved(u0, grid, "u0")
    _check_resolved(u1, grid, "u1")
    notes = []
    rep = validate_effective(spec, min(spec.horizon, max(cfg.horizon, 1.0)))
    if rep["B-L"].verdict == FAIL:
        msg = "condition B-L fails for this damping; blow-up is observed, not implied"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)

    times = np.linspace(0.0, cfg.horizon, cfg.n_out + 1)
    y = np.stack([u0, u1])
    l2_0 = math.sqrt(np.sum(u0**2) * grid.cell)
    l2_1 = math.sqrt(np.sum(u1**2) * grid.cell)
    reference = l2_0 + l2_1
    hist = [_norms(y, grid, cfg.sigma)]
    if reference == 0:
        z = np.zeros(times.size)
        return RunOutcome(DECAYED, math.nan, times, z, z.copy(), z.copy(), 0.0,
                          "zero data", 0, tuple(notes))

    kmax = grid.k_max
    k_s = kmax**cfg.sigma
    k_d = kmax ** (2 * cfg.delta)
    bfun = spec.scalar_b()

    def cap(t, yy):
        return cfg.dt_safety / (k_s + bfun(t) * k_d)

    scale = max(np.max(np.abs(u0)), np.max(np.abs(u1)))
    solver = DormandPrince(op, rtol=cfg.rtol, atol=cfg.rtol * 1e-3 * scale, max_step=cap,
                           context="semilinear")
    level = cfg.escape_threshold * reference
    status, t_blow, message = None, math.nan, ""
    h = f = None
    t = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, times.size):
            try:
                y, f, h = solver.advance(t, y, times[i], h=h, f0=f)
            except StepSizeUnderflow as exc:
                status, t_blow = BLOWN_UP, exc.t
                message = "step size collapsed"
                break
            t = float(times[i])
            nrm = _norms(y, grid, cfg.sigma)
            if not all(math.isfinite(v) for v in nrm) or nrm[0] > level:
                status = BLOWN_UP
                t_blow = _crossing_time(times[i - 1], hist[-1][0], t, nrm[0], level)
                message = "L2 norm escaped" if math.isfinite(nrm[0]) else "state not finite"
                break
            hist.append(nrm)
            tail = spectral_tail(y[0], grid)
            if tail > RUN_TAIL_TOL:
                raise ResolutionError(
                    f"spectral tail {tail:.2e} at t={t:.4g} exceeds {RUN_TAIL_TOL:g}; "
                    f"increase M (L2 norm {nrm[0]:.3e})", t=t, tail=tail)
    arr = np.array(hist)
    out_t = times[: arr.shape[0]]
    if status is None:
        l2 = arr[:, 0]
        quarter = l2[-max(2, l2.size // 4):]
        if l2[-1] < 0.5 * reference and np.all(np.diff(quarter) <= 0):
            status = DECAYED
        else:
            status = INCONCLUSIVE
            message = "neither escaped nor decayed by the horizon"
    return RunOutcome(status, t_blow, out_t, arr[:, 0], arr[:, 1], arr[:, 2], reference,
                      message, solver.nsteps, tuple(notes))


# -- blow-up data condition -----------------------------------------------------------

@dataclass(frozen=True)
class DataCondition:
    satisfied: bool
    value: float
    branch: str

    def to_dict(self):
        return asdict(self)


def check_blowup_data_condition(spec, u0, u1, grid):
    """Sign condition on the data under which blow-up is guaranteed.

    Nondecreasing ``b``: ``int(-A0 u0 + B0 u1 + (-Delta)^delta [A0 u0] + (-Delta)^delta u0)``
    with ``B0 = g(0)`` and ``A0 = b(0) B0 - 1`` from the auxiliary ``g``;
    decreasing ``b``: ``int(u1 + b(0) (-Delta)^delta u0)``. Integrals are
    zero Fourier modes, so for ``delta > 0`` the fractional terms drop out.
    ``u0``/``u1`` are arrays on ``grid`` or :class:`FieldData`.
    """
    f0 = u0(grid) if isinstance(u0, FieldData) else np.asarray(u0, dtype=float)
    f1 = u1(grid) if isinstance(u1, FieldData) else np.asarray(u1, dtype=float)
    d = spec.delta
    i0, i1 = integral(f0, grid), integral(f1, grid)
    # int (-Delta)^delta f = 0 for delta > 0 on the periodic grid
    frac = 1.0 if d == 0 else 0.0
    if spec.is_nondecreasing():
        B0 = g_b0(spec)
        A0 = spec.b(0.0) * B0 - 1.0
        value = -A0 * i0 + B0 * i1 + frac * (A0 * i0 + i0)
        branch = NONDECREASING
    else:
        value = i1 + spec.b(0.0) * frac * i0
        branch = DECREASING
    return DataCondition(bool(value > 0), float(value), branch)

