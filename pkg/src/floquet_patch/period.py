"""Derivative of the period function of ``(I + εD) U' = F(U)`` at ``ε = 0``.

Two independent routes are provided: a quadrature formula along the
unperturbed planar cycle (:func:`urabe_p1`) and finite differences of
re-located perturbed cycles (:func:`fd_p1`).  For ``D = d0·I`` the answer
is ``d0·p`` in closed form (time is simply rescaled by ``1 + ε d0``).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .cycle import CycleError, LimitCycle, locate_orbit, section_through
from .kinetics import PerturbedSystem, as_diffusion_matrix

__all__ = [
    "PeriodDerivativeReport",
    "urabe_p1",
    "fd_p1",
    "identical_diffusion_p1",
    "period_derivative",
    "perturbed_period",
    "max_workers",
]

URABE_GAMMA_MARGIN = 1e-6
MIN_SPEED_SQ = 1e-12


def max_workers(default: int = 4) -> int:
    """Thread cap from ``FLOQUET_PATCH_THREADS`` (at least 1)."""
    raw = os.environ.get("FLOQUET_PATCH_THREADS")
    try:
        return max(1, int(raw)) if raw else default
    except ValueError:
        return default


@dataclass(frozen=True)
class PeriodDerivativeReport:
    """``P₁ = P′(0)`` with provenance.

    ``error`` is the method's own error estimate: the halve-and-compare
    difference for quadrature, the Richardson correction for finite
    differences, zero for the closed form.
    """

    p1: float
    method: str
    period: float
    gamma_tilde: float | None
    samples: int | None
    error: float = 0.0
    details: dict = field(default_factory=dict, compare=False)

    def summary(self) -> dict:
        return {
            "P1": self.p1,
            "method": self.method,
            "period": self.period,
            "gamma_tilde": self.gamma_tilde,
            "samples": self.samples,
            "error_estimate": self.error,
        }


def _urabe_integral(ks, ts, ys, D, kernel):
    F = np.empty_like(ys)
    J = np.empty((len(ys), 2, 2))
    for i, y in enumerate(ys):
        F[i], J[i] = ks.rhs_and_jacobian(y)
    f, g = F[:, 0], F[:, 1]
    fu, fv, gu, gv = J[:, 0, 0], J[:, 0, 1], J[:, 1, 0], J[:, 1, 1]
    q = f * f + g * g
    if q.min() < MIN_SPEED_SQ:
        raise ValueError(f"cycle passes near an equilibrium (min f²+g² = {q.min():.3g})")
    f1 = -(D[0, 0] * f + D[0, 1] * g)
    g1 = -(D[1, 0] * f + D[1, 1] * g)
    h = cumulative_trapezoid(fu + gv, ts, initial=0.0)
    gamma = math.exp(h[-1])
    if gamma >= 1 - URABE_GAMMA_MARGIN:
        raise ValueError(f"nontrivial multiplier {gamma:.8g} is not below 1; formula is singular")
    eh = np.exp(h)
    I = eh * cumulative_trapezoid((f * g1 - g * f1) / eh, ts, initial=0.0)
    if kernel == "curvature":
        mix = fv + gu
    elif kernel == "trace":
        mix = fu + gv
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    K = (2 * f * g * (fu - gv) + (g * g - f * f) * mix) / q ** 1.5
    integrand = K / np.sqrt(q) * (I + I[-1] * eh / (1 - gamma)) - (f * f1 + g * g1) / q
    return float(np.trapezoid(integrand, ts)), gamma


def urabe_p1(ks, cycle: LimitCycle, D, n: int = 4096, kernel: str = "curvature") -> PeriodDerivativeReport:
    """Period derivative from one quadrature along a stable planar cycle.

    With ``q = f² + g²``, ``h(t) = ∫₀^t (f_u + g_v)``,
    ``I(t) = e^{h(t)} ∫₀^t e^{-h}(f g₁ - g f₁)`` and ``γ̃ = e^{h(p)}``::

        P₁ = ∫₀^p [ K/√q · (I(t) + I(p) e^{h(t)}/(1 - γ̃)) - (f f₁ + g g₁)/q ] dt
        K  = (2fg(f_u - g_v) + (g² - f²)(f_v + g_u)) / q^{3/2}

    where ``(f₁, g₁) = -D(f, g)``.  ``kernel="trace"`` swaps ``f_v + g_u``
    for ``f_u + g_v`` in ``K``; that variant is wrong in general and kept
    only so the discrepancy can be demonstrated.

    Integrals use the composite trapezoid rule on ``n`` equispaced samples;
    the error estimate is the change from ``n/2`` samples.
    """
    if ks.dim != 2:
        raise ValueError(f"urabe_p1 requires a planar system, got m = {ks.dim}")
    if n < 8 or n % 2:
        raise ValueError("sample count must be an even integer >= 8")
    D = as_diffusion_matrix(D, 2)
    ts, ys = cycle.samples(n)
    val, gamma = _urabe_integral(ks, ts, ys, D, kernel)
    coarse, _ = _urabe_integral(ks, ts[::2], ys[::2], D, kernel)
    return PeriodDerivativeReport(val, "urabe", cycle.period, gamma, n, abs(val - coarse),
                                  {"kernel": kernel})


def identical_diffusion_p1(cycle: LimitCycle, d0: float) -> PeriodDerivativeReport:
    """Closed form ``P₁ = d0·p`` for ``D = d0·I``."""
    return PeriodDerivativeReport(float(d0) * cycle.period, "identical-diffusion", cycle.period, None, None)


def perturbed_period(ks, cycle: LimitCycle, D, eps: float, **kw) -> float:
    """Period of the cycle of the ε-perturbed system, shot from the unperturbed anchor."""
    ps = PerturbedSystem(ks, D, eps)
    sec = section_through(ks, cycle.anchor)
    try:
        _, p, _ = locate_orbit(ps, cycle.anchor, cycle.cfg, section=sec, burn_in=0.0, **kw)
    except CycleError as exc:
        raise CycleError(f"cycle lost under perturbation ε={eps}: {exc}") from exc
    return p


def fd_p1(ks, cycle: LimitCycle, D, eps: float = 1e-3, workers: int | None = None) -> PeriodDerivativeReport:
    """Finite-difference oracle for ``P′(0)``.

    Central differences ``S(e) = (P(e) - P(-e)) / 2e`` at ``e = eps`` and
    ``eps/2`` are combined by one Richardson step ``(4 S(eps/2) - S(eps)) / 3``.
    The four perturbed cycles are located concurrently.
    """
    D = as_diffusion_matrix(D, ks.dim)
    grid = [eps, -eps, eps / 2, -eps / 2]
    with ThreadPoolExecutor(max_workers=workers or max_workers()) as pool:
        P = list(pool.map(lambda e: perturbed_period(ks, cycle, D, e), grid))
    s1 = (P[0] - P[1]) / (2 * eps)
    s2 = (P[2] - P[3]) / eps
    rich = (4 * s2 - s1) / 3
    return PeriodDerivativeReport(rich, "finite-difference", cycle.period, None, None, abs(rich - s2),
                                  {"eps": grid, "periods": P, "slopes": [s1, s2]})


def period_derivative(ks, cycle: LimitCycle, D, method: str = "auto", **kw) -> PeriodDerivativeReport:
    """Dispatch: quadrature for planar systems, finite differences otherwise."""
    if method == "auto":
        method = "urabe" if ks.dim == 2 else "finite-difference"
    if method == "urabe":
        return urabe_p1(ks, cycle, D, **kw)
    if method == "finite-difference":
        return fd_p1(ks, cycle, D, **kw)
    raise ValueError(f"unknown method {method!r}")
