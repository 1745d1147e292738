"""Explicit Runge-Kutta integration with dense output and section events.

The adaptive path is the Dormand-Prince 5(4) pair with its fourth-order
continuous extension; the optional fixed-step path is classical RK4 with
cubic Hermite interpolation, intended for bit-reproducible runs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "Section",
    "IntegrationError",
    "NoCrossingError",
    "integrate",
    "integrate_to_section",
    "propagate",
]

VectorField = Callable[[float, np.ndarray], np.ndarray]


class IntegrationError(RuntimeError):
    """Step-size underflow, step budget exhausted or a failing right-hand side."""


class NoCrossingError(IntegrationError):
    """The requested section was not crossed within the time window."""


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = math.inf
    max_steps: int = 2_000_000
    event_tol: float = 1e-12
    first_step: float | None = None
    fixed_step: float | None = None

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0 and self.event_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.fixed_step is not None and not self.fixed_step > 0:
            raise ValueError("fixed_step must be positive")

    def scaled(self, factor: float) -> "IntegratorConfig":
        """Copy with rtol/atol multiplied by ``factor``."""
        return replace(self, rtol=self.rtol * factor, atol=self.atol * factor)


@dataclass(frozen=True)
class Section:
    """Hyperplane ``y[index] = level`` crossed in ``direction`` (+1, -1 or 0 for either)."""

    index: int
    level: float
    direction: int = 1

    def value(self, y) -> float:
        return float(y[self.index]) - self.level


# Dormand-Prince 5(4) tableau
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
_B = np.array(_A[6] + [0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension (Hairer & Wanner, dopri5 contd5)
_D = np.array([
    -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799, -10690763975 / 1880347072,
    701980252875 / 199316789632, -1453857185 / 822651844, 69997945 / 29380423,
])


class Trajectory:
    """Ordered samples with a per-step interpolant.

    ``coeffs[k]`` holds five vectors ``(r1..r5)`` for step ``k`` such that
    ``y(t_k + θh) = r1 + θ(r2 + (1-θ)(r3 + θ(r4 + (1-θ) r5)))``.
    """

    def __init__(self, t: np.ndarray, y: np.ndarray, coeffs: np.ndarray, event: bool = False):
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.coeffs = coeffs
        self.terminated_by_event = event

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dim(self) -> int:
        return self.y.shape[1]

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    @property
    def y_final(self) -> np.ndarray:
        return self.y[-1].copy()

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        if len(self.t) < 2:
            if np.any(tt != self.t[0]):
                raise ValueError("trajectory has a single sample")
            out = np.repeat(self.y[:1], len(tt), axis=0)
            return out[0] if scalar else out
        lo, hi = self.t[0], self.t[-1]
        span = hi - lo
        if np.any(tt < lo - 1e-12 * max(1.0, abs(span))) or np.any(tt > hi + 1e-12 * max(1.0, abs(span))):
            raise ValueError("interpolation time outside trajectory")
        k = np.clip(np.searchsorted(self.t, tt, side="right") - 1, 0, len(self.t) - 2)
        h = self.t[k + 1] - self.t[k]
        th = ((tt - self.t[k]) / h)[:, None]
        th1 = 1.0 - th
        r = self.coeffs[k]
        out = r[:, 0] + th * (r[:, 1] + th1 * (r[:, 2] + th * (r[:, 3] + th1 * r[:, 4])))
        return out[0] if scalar else out

    def resample(self, n: int, t0: float | None = None, t1: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """``n + 1`` equispaced samples on ``[t0, t1]`` (both ends included)."""
        t0 = self.t[0] if t0 is None else t0
        t1 = self.t[-1] if t1 is None else t1
        ts = np.linspace(t0, t1, n + 1)
        return ts, self(ts)

    def to_csv(self, path, names: Sequence[str] | None = None) -> None:
        names = list(names) if names else [f"y{i + 1}" for i in range(self.dim)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *names])
            for t, y in zip(self.t, self.y):
                w.writerow([repr(float(t)), *(repr(float(v)) for v in y)])


# -- steppers ------------------------------------------------------------------


def _wrap(rhs: VectorField):
    def f(t, y):
        try:
            out = np.asarray(rhs(t, y), dtype=float)
        except (ArithmeticError, ValueError) as exc:
            raise IntegrationError(f"right-hand side failed at t={t!r}: {exc}") from exc
        if not np.all(np.isfinite(out)):
            raise IntegrationError(f"right-hand side not finite at t={t!r}")
        return out
    return f


def _dp_step(f, t, y, k1, h):
    k = [k1]
    for i in range(1, 7):
        a = _A[i]
        dy = a[0] * k[0]
        for j in range(1, i):
            if a[j] != 0.0:
                dy = dy + a[j] * k[j]
        yi = y + h * dy
        k.append(f(t + _C[i] * h, yi))
    y_new = yi  # stage 7 is evaluated at the 5th-order solution (FSAL)
    err = h * (_E[0] * k[0] + _E[2] * k[2] + _E[3] * k[3] + _E[4] * k[4] + _E[5] * k[5] + _E[6] * k[6])
    return y_new, k, err


def _dp_dense(y, y_new, k, h):
    dy = y_new - y
    bspl = h * k[0] - dy
    r5 = h * (_D[0] * k[0] + _D[2] * k[2] + _D[3] * k[3] + _D[4] * k[4] + _D[5] * k[5] + _D[6] * k[6])
    return np.stack([y, dy, bspl, dy - h * k[6] - bspl, r5])


def _hermite(y, y_new, f0, f1, h):
    # cubic Hermite in the same nested form (r5 = 0)
    dy = y_new - y
    bspl = h * f0 - dy
    return np.stack([y, dy, bspl, dy - h * f1 - bspl, np.zeros_like(y)])


def _rk4_step(f, t, y, k1, h):
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _initial_step(f, t0, y0, f0, direction, cfg):
    scale = cfg.atol + np.abs(y0) * cfg.rtol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + direction * h0 * f0
    f1 = f(t0 + direction * h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, cfg.max_step)


class _Stepper:
    """Generator of accepted steps ``(t, y, t_new, y_new, f_new, coeffs)``."""

    def __init__(self, rhs: VectorField, t0: float, y0, cfg: IntegratorConfig, direction: float = 1.0):
        self.f = _wrap(rhs)
        self.cfg = cfg
        self.t = float(t0)
        self.y = np.array(y0, dtype=float)
        self.direction = 1.0 if direction >= 0 else -1.0
        self.k1 = self.f(self.t, self.y)
        self.steps = 0
        if cfg.fixed_step is not None:
            self.h = cfg.fixed_step
        elif cfg.first_step is not None:
            self.h = cfg.first_step
        else:
            self.h = _initial_step(self.f, self.t, self.y, self.k1, self.direction, cfg)

    def step(self, t_limit: float):
        """Advance one accepted step without passing ``t_limit``."""
        cfg = self.cfg
        d = self.direction
        t, y, k1 = self.t, self.y, self.k1
        remaining = (t_limit - t) * d
        if self.steps >= cfg.max_steps:
            raise IntegrationError(f"maximum number of steps ({cfg.max_steps}) exceeded at t={t!r}")
        if cfg.fixed_step is not None:
            h = min(cfg.fixed_step, remaining)
            y_new = _rk4_step(self.f, t, y, k1, d * h)
            t_new = t + d * h if h < remaining else t_limit
            f_new = self.f(t_new, y_new)
            coeffs = _hermite(y, y_new, k1, f_new, d * h)
        else:
            h = min(self.h, cfg.max_step)
            while True:
                last = h >= remaining * (1 - 1e-12)
                if last:
                    h = remaining
                min_h = 16 * np.finfo(float).eps * max(abs(t), 1.0)
                if h < min_h and not last:
                    raise IntegrationError(f"step size underflow at t={t!r}")
                y_new, k, err = _dp_step(self.f, t, y, k1, d * h)
                scale = cfg.atol + np.maximum(np.abs(y), np.abs(y_new)) * cfg.rtol
                en = float(np.sqrt(np.mean((err / scale) ** 2)))
                if en <= 1.0:
                    fac = 10.0 if en == 0.0 else min(10.0, max(0.2, 0.9 * en ** -0.2))
                    self.h = min(h * fac, cfg.max_step) if not last else max(self.h, h)
                    break
                h = h * max(0.2, 0.9 * en ** -0.2)
                self.steps += 1
                if self.steps >= cfg.max_steps:
                    raise IntegrationError(f"maximum number of steps ({cfg.max_steps}) exceeded at t={t!r}")
            t_new = t_limit if last else t + d * h
            f_new = k[6]
            coeffs = _dp_dense(y, y_new, k, d * h)
        self.steps += 1
        self.t, self.y, self.k1 = t_new, y_new, f_new
        return t, y, t_new, y_new, coeffs

    def exact_to(self, t, y, k1, h):
        """One step of the underlying method from ``(t, y)`` with step ``h`` (no control)."""
        if self.cfg.fixed_step is not None:
            return _rk4_step(self.f, t, y, k1, h)
        return _dp_step(self.f, t, y, k1, h)[0]


def integrate(rhs: VectorField, y0, t_span, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` over ``t_span`` and return a dense :class:`Trajectory`."""
    cfg = cfg or IntegratorConfig()
    t0, t1 = map(float, t_span)
    if t1 == t0:
        y0 = np.array(y0, dtype=float)
        return Trajectory(np.array([t0]), y0[None, :], np.zeros((0, 5, y0.size)))
    st = _Stepper(rhs, t0, y0, cfg, direction=np.sign(t1 - t0))
    ts, ys, cs = [st.t], [st.y.copy()], []
    while st.t != t1:
        _, _, t_new, y_new, coeffs = st.step(t1)
        ts.append(t_new)
        ys.append(y_new)
        cs.append(coeffs)
    return Trajectory(np.array(ts), np.array(ys), np.array(cs))


def propagate(rhs: VectorField, y0, t0: float, t1: float, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Final state only; no samples are stored."""
    cfg = cfg or IntegratorConfig()
    y0 = np.array(y0, dtype=float)
    if t1 == t0:
        return y0
    st = _Stepper(rhs, t0, y0, cfg, direction=np.sign(t1 - t0))
    while st.t != t1:
        st.step(t1)
    return st.y


def integrate_to_section(
    rhs: VectorField,
    y0,
    section: Section,
    cfg: IntegratorConfig | None = None,
    t_max: float = 1e4,
    t_min: float = 0.0,
    t0: float = 0.0,
) -> tuple[Trajectory, float, np.ndarray]:
    """Integrate until the first crossing of ``section`` after ``t0 + t_min``.

    The crossing time is bracketed on the dense interpolant and bisected to
    ``cfg.event_tol``; the returned state comes from one exact step of the
    integrator to that time (no interpolation error).

    Returns ``(trajectory, t_hit, y_hit)``; the trajectory ends at ``t_hit``.
    """
    cfg = cfg or IntegratorConfig()
    st = _Stepper(rhs, t0, y0, cfg)
    t_end = t0 + t_max
    ts, ys, cs = [st.t], [st.y.copy()], []
    g_prev = section.value(st.y)
    while st.t < t_end:
        k1 = st.k1
        t, y, t_new, y_new, coeffs = st.step(t_end)
        g_new = section.value(y_new)
        crossed = (g_prev < 0.0 <= g_new and section.direction >= 0) or (
            g_prev > 0.0 >= g_new and section.direction <= 0
        )
        if crossed and t_new > t0 + t_min:
            t_hit = _bisect(coeffs, t, t_new, section, cfg.event_tol, lo_bound=t0 + t_min)
            if t_hit is not None:
                y_hit = st.exact_to(t, y, k1, t_hit - t) if t_hit > t else y.copy()
                f_hit = st.f(t_hit, y_hit)
                if t_hit > t:
                    ts.append(t_hit)
                    ys.append(y_hit)
                    # truncated final step: cubic Hermite on [t, t_hit]
                    cs.append(_hermite(y, y_hit, k1, f_hit, t_hit - t))
                return Trajectory(np.array(ts), np.array(ys), np.array(cs), event=True), t_hit, y_hit
        ts.append(t_new)
        ys.append(y_new)
        cs.append(coeffs)
        g_prev = g_new
    raise NoCrossingError(f"section {section} not crossed within t_max={t_max}")


def _interp(coeffs, th):
    th1 = 1.0 - th
    r = coeffs
    return r[0] + th * (r[1] + th1 * (r[2] + th * (r[3] + th1 * r[4])))


def _bisect(coeffs, t, t_new, section, tol, lo_bound):
    h = t_new - t
    lo, hi = 0.0, 1.0
    glo = section.value(_interp(coeffs, lo))
    ghi = section.value(_interp(coeffs, hi))
    if glo == 0.0 and t > lo_bound:
        return t
    if glo * ghi > 0:
        # interpolant disagrees with the step endpoints; fall back to the endpoint
        return t_new
    while (hi - lo) * abs(h) > tol:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        gm = section.value(_interp(coeffs, mid))
        if (gm < 0) == (glo < 0) and gm != 0.0:
            lo, glo = mid, gm
        else:
            hi = mid
    t_hit = t + hi * h
    if t_hit <= lo_bound:
        return None
    return t_hit
