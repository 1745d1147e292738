"""Kinetic vector fields, their exact Jacobians and the ε-perturbed systems."""

from __future__ import annotations

import math
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from .expr import (
    EvaluationError,
    Expr,
    SymbolTable,
    compile_functions,
    differentiate,
    evaluate,
    parse,
)

__all__ = [
    "KineticSystem",
    "PerturbedSystem",
    "DomainError",
    "make_holling_tanner",
    "perturbed_rhs",
    "perturbation_first_order",
    "as_diffusion_matrix",
    "small_inverse",
    "BUILTIN_MODELS",
]


class DomainError(EvaluationError):
    """State left the admissible domain of a built-in model."""

    def __init__(self, message: str):
        ArithmeticError.__init__(self, message)
        self.node = None
        self.reason = message


class KineticSystem:
    """An m-dimensional autonomous vector field ``U' = F(U)``.

    Components are :class:`~floquet_patch.expr.Expr` trees; the Jacobian is
    obtained by symbolic differentiation.  Instances are immutable: use
    :meth:`with_params` to change parameter values.

    Parameters
    ----------
    variables : sequence of str
        State variable names, in order.
    rhs : sequence of str or Expr
        One expression per variable.
    params : mapping
        Parameter values referenced by the expressions.
    domain : callable, optional
        ``domain(y) -> str | None``; a non-None return is raised as
        :class:`DomainError` before evaluation.
    """

    def __init__(
        self,
        variables: Sequence[str],
        rhs: Sequence[str | Expr],
        params: Mapping[str, float] | None = None,
        *,
        name: str | None = None,
        domain: Callable[[Sequence[float]], str | None] | None = None,
    ):
        self.symbols = SymbolTable(tuple(variables), dict(params or {}))
        if len(rhs) != len(self.symbols.variables):
            raise ValueError("need one right-hand side per state variable")
        self.exprs: tuple[Expr, ...] = tuple(
            parse(e, self.symbols) if isinstance(e, str) else e for e in rhs
        )
        self.name = name or "custom"
        self.domain = domain
        m = self.dim
        self.jac_exprs: tuple[tuple[Expr, ...], ...] = tuple(
            tuple(differentiate(e, v) for v in self.variables) for e in self.exprs
        )
        flat_jac = [self.jac_exprs[i][j] for i in range(m) for j in range(m)]
        self._f = compile_functions(self.exprs, m, self.params)
        self._j = compile_functions(flat_jac, m, self.params)
        self._fj = compile_functions(list(self.exprs) + flat_jac, m, self.params)
        self._derivs: dict[tuple[int, tuple[str, ...]], Expr] = {}

    @property
    def variables(self) -> tuple[str, ...]:
        return self.symbols.variables

    @property
    def params(self) -> dict[str, float]:
        return dict(self.symbols.params)

    @property
    def dim(self) -> int:
        return len(self.symbols.variables)

    def __repr__(self) -> str:
        return f"KineticSystem(name={self.name!r}, variables={self.variables}, params={self.params})"

    def with_params(self, **updates: float) -> "KineticSystem":
        unknown = set(updates) - set(self.symbols.params)
        if unknown:
            raise KeyError(f"unknown parameters: {sorted(unknown)}")
        params = self.params
        params.update({k: float(v) for k, v in updates.items()})
        return KineticSystem(self.variables, self.exprs, params, name=self.name, domain=self.domain)

    # -- evaluation ----------------------------------------------------

    def _call(self, fn, exprs, y):
        yl = [float(v) for v in y]
        if self.domain is not None:
            msg = self.domain(yl)
            if msg:
                raise DomainError(msg)
        try:
            out = fn(*yl)
        except (ArithmeticError, ValueError):
            self._explain(exprs, yl)
            raise
        for v in out:
            if not math.isfinite(v):
                self._explain(exprs, yl)
        return out

    def _explain(self, exprs, yl):
        for e in exprs:
            evaluate(e, yl, self.symbols.params)  # raises EvaluationError naming the node
        raise EvaluationError(exprs[0], "non-finite value")

    def rhs(self, y) -> np.ndarray:
        return np.array(self._call(self._f, self.exprs, y))

    def jacobian(self, y) -> np.ndarray:
        flat = [e for row in self.jac_exprs for e in row]
        return np.array(self._call(self._j, flat, y)).reshape(self.dim, self.dim)

    def rhs_and_jacobian(self, y) -> tuple[np.ndarray, np.ndarray]:
        m = self.dim
        flat = list(self.exprs) + [e for row in self.jac_exprs for e in row]
        out = self._call(self._fj, flat, y)
        return np.array(out[:m]), np.array(out[m:]).reshape(m, m)

    def trace_jacobian(self, y) -> float:
        return float(np.trace(self.jacobian(y)))

    def derivative(self, component: int, *variables: str) -> Expr:
        """Symbolic higher partial derivative of one component (cached)."""
        key = (component, tuple(variables))
        if key not in self._derivs:
            e = self.exprs[component]
            for v in variables:
                e = differentiate(e, v)
            self._derivs[key] = e
        return self._derivs[key]

    def eval_derivative(self, component: int, variables: Sequence[str], y) -> float:
        return evaluate(self.derivative(component, *variables), y, self.symbols.params)

    def vector_field(self) -> Callable[[float, np.ndarray], np.ndarray]:
        return lambda t, y: self.rhs(y)


# -- diffusion matrices and the perturbed system ------------------------------


def as_diffusion_matrix(D, m: int | None = None) -> np.ndarray:
    """Validate an m×m diffusion (cross-diffusion) matrix; any sign allowed."""
    D = np.array(D, dtype=float)
    if D.ndim == 0 and m is not None:
        D = float(D) * np.eye(m)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("diffusion matrix must be square")
    if m is not None and D.shape[0] != m:
        raise ValueError(f"diffusion matrix must be {m}x{m}")
    if not np.all(np.isfinite(D)):
        raise ValueError("diffusion matrix entries must be finite")
    return D


def _det_adj(A: np.ndarray) -> tuple[float, np.ndarray]:
    m = A.shape[0]
    if m == 1:
        return float(A[0, 0]), np.ones((1, 1))
    if m == 2:
        a, b, c, d = A.ravel()
        return a * d - b * c, np.array([[d, -b], [-c, a]])
    if m == 3:
        adj = np.empty((3, 3))
        for i in range(3):
            for j in range(3):
                minor = np.delete(np.delete(A, j, 0), i, 1)
                adj[i, j] = (-1) ** (i + j) * (minor[0, 0] * minor[1, 1] - minor[0, 1] * minor[1, 0])
        return float(A[0] @ adj[:, 0]), adj
    # m == 4: cofactors from 3x3 minors
    adj = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            minor = np.delete(np.delete(A, j, 0), i, 1)
            adj[i, j] = (-1) ** (i + j) * _det_adj(minor)[0]
    return float(A[0] @ adj[:, 0]), adj


def small_inverse(A: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Inverse by closed-form adjugate for m <= 4, LU otherwise."""
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    if m <= 4:
        det, adj = _det_adj(A)
        if abs(det) <= tol:
            raise np.linalg.LinAlgError(f"singular matrix (|det| = {abs(det):.3g})")
        return adj / det
    det = np.linalg.det(A)
    if abs(det) <= tol:
        raise np.linalg.LinAlgError(f"singular matrix (|det| = {abs(det):.3g})")
    return np.linalg.inv(A)


class PerturbedSystem:
    """The system ``(I + εD) U' = F(U)`` solved for ``U'``.

    Exposes the same ``dim`` / ``rhs`` / ``jacobian`` surface as
    :class:`KineticSystem` so cycle search works on it unchanged.
    """

    def __init__(self, base: KineticSystem, D, eps: float):
        self.base = base
        self.D = as_diffusion_matrix(D, base.dim)
        self.eps = float(eps)
        self._inv = small_inverse(np.eye(base.dim) + self.eps * self.D)

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def inverse(self) -> np.ndarray:
        return self._inv.copy()

    def rhs(self, y) -> np.ndarray:
        F = self.base.rhs(y)
        if self.eps == 0.0:
            return F
        return self._inv @ F

    def jacobian(self, y) -> np.ndarray:
        J = self.base.jacobian(y)
        if self.eps == 0.0:
            return J
        return self._inv @ J

    def rhs_and_jacobian(self, y):
        F, J = self.base.rhs_and_jacobian(y)
        if self.eps == 0.0:
            return F, J
        return self._inv @ F, self._inv @ J

    def vector_field(self):
        return lambda t, y: self.rhs(y)

    @cached_property
    def det(self) -> float:
        """``det(I + εD)``; for m = 2 this is (d11 d22 - d12 d21)ε² + (d11 + d22)ε + 1."""
        return _det_adj(np.eye(self.dim) + self.eps * self.D)[0]


def perturbed_rhs(ps: PerturbedSystem, state) -> np.ndarray:
    return ps.rhs(state)


def perturbation_first_order(ks: KineticSystem, D, state) -> np.ndarray:
    """First-order term ``-D F(U)`` of the ε-expansion; for m = 2 returns (f1, g1)."""
    D = as_diffusion_matrix(D, ks.dim)
    return -(D @ ks.rhs(state))


# -- built-in models ----------------------------------------------------------


def _holling_tanner_domain(y):
    if y[0] <= 0.0:
        return f"prey density u = {y[0]!r} <= 0 outside the Holling-Tanner domain"
    return None


def make_holling_tanner(a: float, h: float, K: float, m: float, r: float, s: float) -> KineticSystem:
    """Holling-Tanner predator-prey kinetics with a type II functional response.

    ``u' = r u (1 - u/K) - m u v/(u + a)``, ``v' = s v (1 - h v/u)`` on ``u > 0``.
    """
    params = dict(a=a, h=h, K=K, m=m, r=r, s=s)
    for key, val in params.items():
        if not (val > 0 and math.isfinite(val)):
            raise ValueError(f"Holling-Tanner parameter {key} must be positive, got {val!r}")
    return KineticSystem(
        ("u", "v"),
        ("r*u*(1 - u/K) - m*u*v/(u + a)", "s*v*(1 - h*v/u)"),
        params,
        name="holling_tanner",
        domain=_holling_tanner_domain,
    )


BUILTIN_MODELS: dict[str, Callable[..., KineticSystem]] = {
    "holling_tanner": make_holling_tanner,
}
