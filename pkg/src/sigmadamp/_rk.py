"""Embedded explicit Runge-Kutta stepping (Dormand-Prince 5(4)).

The integrator advances an array-valued state of any shape. Error control
uses the max-norm of the embedded error estimate scaled component-wise by
``atol + rtol * max(|y|, |y_new|)``, so every accepted step satisfies the
requested local tolerance on every component.
"""

import numpy as np


class StepSizeUnderflow(RuntimeError):
    """Raised when the controller needs a step below the resolvable minimum."""

    def __init__(self, t, h, context=None):
        self.t = t
        self.h = h
        self.context = context
        msg = f"step size underflow at t={t:.6g} (h={h:.3g})"
        if context:
            msg += f" [{context}]"
        super().__init__(msg)


# Dormand & Prince (1980) tableau, FSAL form.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


class DormandPrince:
    """Adaptive Dormand-Prince 5(4) pair.

    Parameters
    ----------
    fun : callable
        ``fun(t, y) -> dy/dt`` with ``dy`` of the same shape as ``y``.
    rtol : float
        Relative local error tolerance.
    atol : float or array
        Absolute tolerance, broadcast against the state (so a per-column
        array works for a ``(k, N)`` state).
    max_step : callable or float, optional
        Upper bound on the step, either a constant or ``max_step(t, y)``.
    context : str, optional
        Label attached to :class:`StepSizeUnderflow` errors.
    """

    def __init__(self, fun, rtol=1e-8, atol=1e-12, max_step=np.inf, context=None):
        self.fun = fun
        self.rtol = float(rtol)
        self.atol = np.asarray(atol, dtype=float)
        self.max_step = max_step
        self.context = context
        self.nfev = 0
        self.nsteps = 0
        self.nrejected = 0

    def _cap(self, t, y):
        cap = self.max_step
        if callable(cap):
            cap = cap(t, y)
        return float(cap)

    def _initial_step(self, t, y, f0, direction):
        scale = self.atol + self.rtol * np.abs(y)
        d0 = np.max(np.abs(y) / scale) if y.size else 0.0
        d1 = np.max(np.abs(f0) / scale) if y.size else 0.0
        if d0 < 1e-5 or d1 < 1e-5:
            h0 = 1e-6
        else:
            h0 = 0.01 * d0 / d1
        y1 = y + direction * h0 * f0
        f1 = self.fun(t + direction * h0, y1)
        self.nfev += 1
        d2 = np.max(np.abs(f1 - f0) / scale) / h0 if y.size else 0.0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1 / 5)
        return min(100 * h0, h1)

    def step(self, t, y, f0, h):
        """Attempt one step of size ``h`` (signed). Returns ``(y_new, f_new, err)``."""
        fun = self.fun
        a = _A
        k1 = f0
        k2 = fun(t + _C[1] * h, y + h * (a[1][0] * k1))
        k3 = fun(t + _C[2] * h, y + h * (a[2][0] * k1 + a[2][1] * k2))
        k4 = fun(t + _C[3] * h, y + h * (a[3][0] * k1 + a[3][1] * k2 + a[3][2] * k3))
        k5 = fun(t + _C[4] * h, y + h * (a[4][0] * k1 + a[4][1] * k2 + a[4][2] * k3
                                         + a[4][3] * k4))
        k6 = fun(t + h, y + h * (a[5][0] * k1 + a[5][1] * k2 + a[5][2] * k3 + a[5][3] * k4
                                 + a[5][4] * k5))
        y_new = y + h * (a[6][0] * k1 + a[6][2] * k3 + a[6][3] * k4 + a[6][4] * k5
                         + a[6][5] * k6)
        k7 = fun(t + h, y_new)
        self.nfev += 6
        err_vec = h * (_E[0] * k1 + _E[2] * k3 + _E[3] * k4 + _E[4] * k5 + _E[5] * k6
                       + _E[6] * k7)
        scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
        with np.errstate(invalid="ignore", over="ignore"):
            err = np.max(np.abs(err_vec) / scale) if y.size else 0.0
        return y_new, k7, err

    def advance(self, t0, y0, t_end, h=None, f0=None):
        """Integrate from ``t0`` to exactly ``t_end``.

        Returns ``(y_end, f_end, h_next)``; pass ``h_next`` and ``f_end`` back
        into the next call to continue seamlessly.
        """
        t = float(t0)
        t_end = float(t_end)
        y = np.asarray(y0, dtype=float)
        if t_end == t:
            if f0 is None:
                f0 = self.fun(t, y)
                self.nfev += 1
            return y, f0, h
        direction = 1.0 if t_end > t else -1.0
        if f0 is None:
            f0 = self.fun(t, y)
            self.nfev += 1
        if h is None or h <= 0:
            h = self._initial_step(t, y, f0, direction)
        while direction * (t_end - t) > 0:
            cap = self._cap(t, y)
            h_free = min(h, cap)
            h = min(h_free, abs(t_end - t))
            h_min = 1e-14 * max(1.0, abs(t))
            if h < h_min:
                raise StepSizeUnderflow(t, h, self.context)
            y_new, f_new, err = self.step(t, y, f0, direction * h)
            if not np.isfinite(err):
                self.nrejected += 1
                h *= _MIN_FACTOR
                continue
            if err <= 1.0:
                t_new = t + direction * h
                if abs(t_end - t_new) <= 1e-13 * max(1.0, abs(t_end)):
                    t_new = t_end
                t, y, f0 = t_new, y_new, f_new
                self.nsteps += 1
                factor = _MAX_FACTOR if err == 0 else min(
                    _MAX_FACTOR, _SAFETY * err ** (-1 / 5))
                # a step shortened to land on t_end keeps the free proposal
                h = max(h * max(_MIN_FACTOR, factor), h_free if h < h_free else 0.0)
            else:
                self.nrejected += 1
                h = h * max(_MIN_FACTOR, _SAFETY * err ** (-1 / 5))
        return y, f0, h
