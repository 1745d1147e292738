"""Planar Hopf analysis: equilibria, perturbed trace/determinant, first
Lyapunov coefficient and the sign conditions for coupling-induced period
changes of small cycles.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kinetics import KineticSystem, as_diffusion_matrix
from .ode import IntegratorConfig, Section, integrate_to_section

__all__ = [
    "HopfError",
    "HopfReport",
    "HopfCondition",
    "holling_tanner_positive_equilibrium",
    "weak_focus_order2_residuals",
    "solve_weak_focus_point",
    "find_equilibrium",
    "jacobian_at_equilibrium",
    "perturbed_trace_det",
    "diffusion_bracket",
    "transversality_rate",
    "tune_to_criticality",
    "normal_form_basis",
    "first_lyapunov_coefficient",
    "hopf_period_eps_slope",
    "hopf_report",
    "displacement",
    "cycle_parameter_offset",
]

INCONCLUSIVE_TOL = 1e-8


class HopfError(ArithmeticError):
    """Preconditions of the planar Hopf computations are not met."""


# -- Holling-Tanner specifics (K = m = r = 1) ------------------------------------


def holling_tanner_positive_equilibrium(a: float, h: float, s: float) -> tuple[float, float]:
    """Unique positive root of ``βu² + (aβ - β + s)u - aβ = 0`` with ``β = hs``; ``v* = u*/h``.

    The root is taken from whichever quadratic formula avoids cancellation.
    """
    if not (a > 0 and h > 0 and s > 0):
        raise ValueError("a, h and s must be positive")
    beta = h * s
    A, B, C = beta, a * beta - beta + s, -a * beta
    disc = math.sqrt(B * B - 4 * A * C)
    u = (2 * -C) / (B + disc) if B >= 0 else (-B + disc) / (2 * A)
    return u, u / h


def weak_focus_order2_residuals(a: float, u: float, s: float) -> tuple[float, float]:
    """Residuals of the two extra conditions for a weak focus of order two."""
    r2 = 2 * u * u + (a + s - 1) * u + a * s
    r3 = -(3 + a) * u ** 3 - 6 * a * u * (a + u) + a * a * (1 - a)
    return r2, r3


def _weak_focus_system(x, s):
    a, h, u = x
    beta = h * s
    r1 = beta * u * u + (a * beta - beta + s) * u - a * beta
    r2, r3 = weak_focus_order2_residuals(a, u, s)
    return np.array([r1, r2, r3])


def _weak_focus_jacobian(x, s):
    a, h, u = x
    beta = h * s
    return np.array([
        [beta * u - beta, s * (u * u + (a - 1) * u - a), 2 * beta * u + a * beta - beta + s],
        [u + s, 0.0, 4 * u + a + s - 1],
        [-u ** 3 - 6 * u * (a + u) - 6 * a * u + 2 * a * (1 - a) - a * a, 0.0,
         -3 * (3 + a) * u * u - 6 * a * a - 12 * a * u],
    ])


def solve_weak_focus_point(s: float = 0.1, guess: Sequence[float] = (0.3, 0.1, 0.2),
                           tol: float = 1e-14, max_iter: int = 100) -> tuple[float, float, float]:
    """Damped Newton for ``(a, h, u*)`` making the equilibrium a weak focus of order two."""
    x = np.array(guess, dtype=float)
    r = _weak_focus_system(x, s)
    for _ in range(max_iter):
        if np.linalg.norm(r) < tol:
            return tuple(float(v) for v in x)
        dx = np.linalg.solve(_weak_focus_jacobian(x, s), -r)
        lam = 1.0
        while lam > 1e-6:
            xn = x + lam * dx
            rn = _weak_focus_system(xn, s)
            if np.linalg.norm(rn) < (1 - 1e-4 * lam) * np.linalg.norm(r):
                break
            lam *= 0.5
        x, r = xn, rn
    if np.linalg.norm(r) < 1e3 * tol:
        return tuple(float(v) for v in x)
    raise HopfError("weak-focus system: damped Newton did not converge")


# -- generic planar machinery ----------------------------------------------------


def find_equilibrium(ks: KineticSystem, guess, tol: float = 1e-13, max_iter: int = 50) -> np.ndarray:
    """Newton iteration on ``F(x) = 0`` with the symbolic Jacobian."""
    x = np.array(guess, dtype=float)
    for _ in range(max_iter):
        F, J = ks.rhs_and_jacobian(x)
        if np.linalg.norm(F) < tol:
            return x
        dx = np.linalg.solve(J, -F)
        lam = 1.0
        while True:
            try:
                xn = x + lam * dx
                if np.linalg.norm(ks.rhs(xn)) < np.linalg.norm(F) or lam < 1e-6:
                    break
            except ArithmeticError:
                pass
            lam *= 0.5
        x = xn
    F = ks.rhs(x)
    if np.linalg.norm(F) < 1e3 * tol:
        return x
    raise HopfError(f"equilibrium continuation failed (|F| = {np.linalg.norm(F):.3g})")


def jacobian_at_equilibrium(ks: KineticSystem, eq, tol: float = 1e-8) -> np.ndarray:
    F = ks.rhs(eq)
    if np.linalg.norm(F) >= tol:
        raise HopfError(f"point is not an equilibrium (|F| = {np.linalg.norm(F):.3g})")
    return ks.jacobian(eq)


def diffusion_bracket(J, D) -> float:
    """``d22 J11 + d11 J22 - d12 J21 - d21 J12``: ``∂(trace)/∂ε`` at ``ε = 0`` when ``tr J = 0``."""
    J = np.asarray(J, dtype=float)
    D = as_diffusion_matrix(D, 2)
    return float(D[1, 1] * J[0, 0] + D[0, 0] * J[1, 1] - D[0, 1] * J[1, 0] - D[1, 0] * J[0, 1])


def perturbed_trace_det(J, D, eps: float) -> tuple[float, float]:
    """Trace and determinant of ``(I + εD)⁻¹ J`` for 2×2 ``J``."""
    J = np.asarray(J, dtype=float)
    D = as_diffusion_matrix(D, 2)
    M = (D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]) * eps * eps + (D[0, 0] + D[1, 1]) * eps + 1.0
    if M == 0.0:
        raise HopfError("det(I + εD) = 0")
    trJ = J[0, 0] + J[1, 1]
    detJ = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    return (trJ + eps * diffusion_bracket(J, D)) / M, detJ / M


def _trace_half(ks, name, alpha, guess):
    k = ks.with_params(**{name: alpha})
    x = find_equilibrium(k, guess)
    J = k.jacobian(x)
    tr, det = np.trace(J), np.linalg.det(J)
    if tr * tr - 4 * det >= 0:
        raise HopfError(f"eigenvalues are real at {name} = {alpha}")
    return tr / 2, x


def transversality_rate(ks: KineticSystem, name: str, alpha0: float | None = None, guess=None,
                        step: float = 1e-5) -> float:
    """``A′(α₀)`` where ``A = tr J / 2`` at the re-solved equilibrium.

    Central differences at steps ``step`` and ``step/2``, one Richardson level.
    """
    if alpha0 is None:
        alpha0 = ks.params[name]
    if guess is None:
        raise ValueError("an equilibrium guess is required")
    _, x0 = _trace_half(ks, name, alpha0, guess)

    def cd(hh):
        return (_trace_half(ks, name, alpha0 + hh, x0)[0] - _trace_half(ks, name, alpha0 - hh, x0)[0]) / (2 * hh)

    s1, s2 = cd(step), cd(step / 2)
    return float((4 * s2 - s1) / 3)


def tune_to_criticality(ks: KineticSystem, name: str, guess, tol: float = 1e-10,
                        max_iter: int = 30) -> tuple[KineticSystem, np.ndarray]:
    """Secant-adjust parameter ``name`` until ``|tr J| < tol`` at the equilibrium."""
    a0 = ks.params[name]
    x = find_equilibrium(ks, guess)
    t0 = np.trace(ks.jacobian(x))
    a1 = a0 * (1 + 1e-6) if a0 != 0 else 1e-6
    for _ in range(max_iter):
        k1 = ks.with_params(**{name: a1})
        x = find_equilibrium(k1, x)
        t1 = np.trace(k1.jacobian(x))
        if abs(t1) < tol:
            return k1, x
        if t1 == t0:
            break
        a0, a1, t0 = a1, a1 - t1 * (a1 - a0) / (t1 - t0), t1
    raise HopfError(f"could not tune {name} to criticality")


def normal_form_basis(J) -> tuple[np.ndarray, float]:
    """Real basis ``P`` with ``P⁻¹ J P = [[0, -μ0], [μ0, 0]]`` and ``P[0] = (1, 0)``.

    The normalisation keeps the first state coordinate unscaled; the
    Lyapunov coefficients returned by :func:`first_lyapunov_coefficient`
    refer to this scaling.
    """
    J = np.asarray(J, dtype=float)
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if det <= 0:
        raise HopfError("eigenvalues are not complex (det J <= 0)")
    mu0 = math.sqrt(det)
    if abs(J[0, 1]) < 1e-12 * max(1.0, np.abs(J).max()):
        raise HopfError("eigenbasis ill-conditioned (J12 ~ 0)")
    P = np.array([[1.0, 0.0], [-J[0, 0] / J[0, 1], -mu0 / J[0, 1]]])
    if np.linalg.cond(P) > 1e8:
        raise HopfError("eigenbasis ill-conditioned")
    return P, mu0


def _derivative_tensors(ks, x):
    names = ks.variables
    m = ks.dim
    H = np.empty((m, m, m))
    T = np.empty((m, m, m, m))
    for i in range(m):
        for j in range(m):
            for k in range(j, m):
                H[i, j, k] = H[i, k, j] = ks.eval_derivative(i, (names[j], names[k]), x)
                for l in range(k, m):
                    v = ks.eval_derivative(i, (names[j], names[k], names[l]), x)
                    for a, b, c in {(j, k, l), (j, l, k), (k, j, l), (k, l, j), (l, j, k), (l, k, j)}:
                        T[i, a, b, c] = v
    return H, T


def first_lyapunov_coefficient(ks: KineticSystem, eq, *, trace_tol: float = 1e-6) -> complex:
    """``C₁`` of the normal form ``ż = iμ0 z + C₁ z²z̄ + …``.

    The vector field is moved to the basis of :func:`normal_form_basis`; the
    second and third partials of the transformed field enter the classical
    combination ``C₁ = i/(2μ0)(g20 g11 - 2|g11|² - |g02|²/3) + g21/2``.
    """
    if ks.dim != 2:
        raise HopfError(f"planar systems only, got m = {ks.dim}")
    eq = np.asarray(eq, dtype=float)
    J = jacobian_at_equilibrium(ks, eq)
    if abs(np.trace(J)) >= trace_tol:
        raise HopfError(f"not at criticality: tr J = {np.trace(J):.3g}")
    P, mu0 = normal_form_basis(J)
    Pi = np.linalg.inv(P)
    H, T = _derivative_tensors(ks, eq)
    G2 = np.einsum("ij,jkl,ka,lb->iab", Pi, H, P, P)
    G3 = np.einsum("ij,jklm,ka,lb,mc->iabc", Pi, T, P, P, P)
    fxx, fxy, fyy = G2[0, 0, 0], G2[0, 0, 1], G2[0, 1, 1]
    gxx, gxy, gyy = G2[1, 0, 0], G2[1, 0, 1], G2[1, 1, 1]
    fxxx, fxxy, fxyy, fyyy = G3[0, 0, 0, 0], G3[0, 0, 0, 1], G3[0, 0, 1, 1], G3[0, 1, 1, 1]
    gxxx, gxxy, gxyy, gyyy = G3[1, 0, 0, 0], G3[1, 0, 0, 1], G3[1, 0, 1, 1], G3[1, 1, 1, 1]
    g20 = complex(fxx - fyy + 2 * gxy, gxx - gyy - 2 * fxy) / 4
    g11 = complex(fxx + fyy, gxx + gyy) / 4
    g02 = complex(fxx - fyy - 2 * gxy, gxx - gyy + 2 * fxy) / 4
    g21 = complex(fxxx + fxyy + gxxy + gyyy, gxxx + gxyy - fxxy - fyyy) / 8
    return 1j / (2 * mu0) * (g20 * g11 - 2 * abs(g11) ** 2 - abs(g02) ** 2 / 3) + g21 / 2


# -- conditions on the coupling matrix -------------------------------------------


@dataclass(frozen=True)
class HopfCondition:
    """Sign tests deciding whether coupling shortens the small cycles' period.

    ``c1_quantity = Im(C_{k₁})·bracket`` (destabilizing when > 0) and
    ``c2_quantity = μ0(d11 + d22) + Im(C_k)/Re(C_k)·bracket`` (destabilizing
    when < 0).  ``bracket_rule`` records the plain test ``bracket < 0``.
    Quantities that cannot be formed from the supplied coefficients are None.
    """

    bracket: float
    k: int
    k1: int
    c1_quantity: float | None
    c2_quantity: float | None
    governing: str
    verdict: str
    dT_deps: float | None
    bracket_rule: str

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _verdict(value, destabilizing_sign):
    if value is None:
        return "inconclusive"
    if abs(value) <= INCONCLUSIVE_TOL:
        return "inconclusive"
    return "destabilized" if (value > 0) == (destabilizing_sign > 0) else "stable"


def hopf_period_eps_slope(J, mu0: float, D, k: int, k1: int,
                          coeffs: Sequence[complex | None]) -> HopfCondition:
    """Evaluate the destabilization conditions for small cycles near a weak focus.

    ``coeffs[j-1]`` is ``C_j``; entries may be None when unknown.  ``k`` is the
    weak-focus order (first ``j`` with ``Re C_j ≠ 0``) and ``k₁ ≤ k`` the
    first index with ``Im C_j ≠ 0``.  When ``k₁ = k`` the period slope is
    ``∂T/∂ε = T² S / 4π`` with ``T = 2π/μ0`` and ``S`` the (C2) quantity.
    """
    if k1 > k:
        raise ValueError("k1 must not exceed k")
    if len(coeffs) < k1:
        raise ValueError("coefficients up to C_k1 are required")
    D = as_diffusion_matrix(D, 2)
    ck = coeffs[k - 1] if len(coeffs) >= k else None
    if ck is not None and ck.real >= 0:
        raise ValueError("Re(C_k) must be negative (stable bifurcating cycles)")
    br = diffusion_bracket(J, D)
    ck1 = coeffs[k1 - 1]
    c1q = None if ck1 is None else ck1.imag * br
    c2q = None
    if ck is not None and not (isinstance(ck, complex) and math.isnan(ck.imag)):
        c2q = mu0 * (D[0, 0] + D[1, 1]) + (ck.imag / ck.real) * br
    if k1 == k:
        governing, value, sign = "C2", c2q, -1
    else:
        governing, value, sign = "C1", c1q, +1
    slope = None
    if k1 == k and c2q is not None:
        T = 2 * math.pi / mu0
        slope = T * T * c2q / (4 * math.pi)
    return HopfCondition(br, k, k1, c1q, c2q, governing, _verdict(value, sign), slope,
                         _verdict(br, -1))


@dataclass(frozen=True)
class HopfReport:
    equilibrium: tuple[float, float]
    jacobian: np.ndarray
    mu0: float
    a_prime: float | None
    c1: complex
    parameter: str | None = None
    parameter_value: float | None = None
    weak_focus_order: int | None = None
    conditions: dict = field(default_factory=dict)

    def summary(self) -> dict:
        J = self.jacobian
        out = {
            "equilibrium": list(self.equilibrium),
            "J11": J[0, 0], "J12": J[0, 1], "J21": J[1, 0], "J22": J[1, 1],
            "mu0": self.mu0,
            "A_prime": self.a_prime,
            "Re_C1": self.c1.real,
            "Im_C1": self.c1.imag,
            "parameter": self.parameter,
            "parameter_value": self.parameter_value,
            "weak_focus_order": self.weak_focus_order,
        }
        for name, cond in self.conditions.items():
            out[f"condition[{name}]"] = cond.summary()
        return out


def hopf_report(ks: KineticSystem, guess, parameter: str | None = None, tune: bool = True,
                weak_focus_order: int | None = None) -> HopfReport:
    """Equilibrium, Jacobian, ``μ0``, ``A′`` and ``C₁`` at a (tuned) Hopf point."""
    if parameter is not None and tune:
        ks, eq = tune_to_criticality(ks, parameter, guess)
    else:
        eq = find_equilibrium(ks, guess)
    J = jacobian_at_equilibrium(ks, eq)
    _, mu0 = normal_form_basis(J)
    ap = transversality_rate(ks, parameter, guess=eq) if parameter else None
    c1 = first_lyapunov_coefficient(ks, eq)
    return HopfReport((float(eq[0]), float(eq[1])), J, mu0, ap, c1, parameter,
                      ks.params[parameter] if parameter else None, weak_focus_order)


# -- numerical oracles for the normal form ---------------------------------------


def displacement(ks: KineticSystem, eq, P, r0: float, cfg: IntegratorConfig | None = None) -> float:
    """Relative radial displacement ``(ξ₁(return) - r0)/r0`` of the return map.

    The flow is written in coordinates ``ξ = P⁻¹(x - eq)`` and followed from
    ``ξ = (r0, 0)`` to the next upward crossing of ``ξ₂ = 0``.
    """
    cfg = cfg or IntegratorConfig(rtol=1e-12, atol=1e-15)
    eq = np.asarray(eq, dtype=float)
    P = np.asarray(P, dtype=float)
    Pi = np.linalg.inv(P)
    f = lambda t, xi: Pi @ ks.rhs(eq + P @ xi)
    mu = math.sqrt(abs(np.linalg.det(Pi @ ks.jacobian(eq) @ P)))
    _, _, xr = integrate_to_section(f, [r0, 0.0], Section(1, 0.0, 1), cfg, t_max=100 * 2 * math.pi / mu,
                                    t_min=math.pi / mu)
    return (xr[0] - r0) / r0


def cycle_parameter_offset(ks: KineticSystem, name: str, eq_c, P, r0: float, bracket: tuple[float, float],
                           cfg: IntegratorConfig | None = None) -> float:
    """Parameter value at which the cycle passes through radius ``r0``.

    Root of the displacement in ``name`` over ``bracket``; the radius is
    measured in the critical basis ``P`` about the re-solved equilibrium.
    """
    from scipy.optimize import brentq

    def disp(alpha):
        k = ks.with_params(**{name: alpha})
        x = find_equilibrium(k, eq_c)
        return displacement(k, x, P, r0, cfg)

    return brentq(disp, *bracket, xtol=1e-15, rtol=1e-13)
