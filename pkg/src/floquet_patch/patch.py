"""n-patch systems with all-to-all diffusive coupling, their Floquet spectra
about the synchronous cycle, Lyapunov exponents and the destabilization verdict.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cycle import (
    LimitCycle,
    classify_multipliers,
    sort_multipliers,
    trivial_multiplier_index,
    variational_field,
)
from .kinetics import KineticSystem, as_diffusion_matrix
from .ode import IntegratorConfig, integrate, propagate
from .period import PeriodDerivativeReport, max_workers, period_derivative

__all__ = [
    "PatchSystem",
    "SynchronousCycle",
    "PeriodicLinearSystem",
    "PatchFloquet",
    "BranchFit",
    "LyapunovResult",
    "ConvergenceError",
    "BranchTrackingError",
    "DestabilizationVerdict",
    "all_to_all_laplacian",
    "build_patch_system",
    "linearize_about_sync",
    "patch_floquet",
    "transverse_multipliers",
    "fit_branch_slopes",
    "track_eigenvalue_paths",
    "multiplier_slopes",
    "slopes_from_floquet",
    "largest_lyapunov_exponent",
    "predict_and_verify",
]

TRIVIAL_TOL = 1e-5
PREDICTION_TOL = 1e-8
GROWTH_TOL = 1e-6
LLE_TOL = 1e-4
COLLISION_TOL = 1e-9


class ConvergenceError(ArithmeticError):
    """Running Lyapunov estimate still oscillating at the end of the horizon."""


class BranchTrackingError(ArithmeticError):
    """Multiplier branches cannot be told apart."""


def all_to_all_laplacian(n: int) -> np.ndarray:
    """``n I - 1 1ᵀ``: diagonal ``n - 1``, off-diagonal ``-1``."""
    return n * np.eye(n) - np.ones((n, n))


class PatchSystem:
    """``n`` identical copies of ``ks`` coupled by ``δ Σ_i E (U^i - U^j)``.

    The state is the concatenation ``(U^1, …, U^n)``.  Coupling is computed
    from pairwise differences so that equal patch states give an exactly
    zero coupling term.
    """

    def __init__(self, ks: KineticSystem, n: int, E, delta: float):
        if int(n) != n or n < 2:
            raise ValueError("need at least two patches")
        if not delta >= 0:
            raise ValueError("coupling strength must be non-negative")
        self.kinetics = ks
        self.n = int(n)
        self.E = as_diffusion_matrix(E, ks.dim)
        self.delta = float(delta)
        self.m = ks.dim

    @property
    def dim(self) -> int:
        return self.m * self.n

    @property
    def coupling_matrix(self) -> np.ndarray:
        """The block matrix ``kron(L, E)``; the linear part of the RHS is ``-δ`` times it."""
        return np.kron(all_to_all_laplacian(self.n), self.E)

    def _split(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim,):
            raise ValueError(f"state must have length {self.dim}")
        return y.reshape(self.n, self.m)

    def coupling(self, y) -> np.ndarray:
        U = self._split(y)
        diff = (U[None, :, :] - U[:, None, :]).sum(axis=1)  # row j: Σ_i (U^i - U^j)
        return (self.delta * diff @ self.E.T).ravel()

    def rhs(self, y) -> np.ndarray:
        U = self._split(y)
        F = np.concatenate([self.kinetics.rhs(u) for u in U])
        if self.delta == 0.0:
            return F
        return F + self.coupling(y)

    def jacobian(self, y) -> np.ndarray:
        U = self._split(y)
        J = np.zeros((self.dim, self.dim))
        m = self.m
        for j, u in enumerate(U):
            J[j * m:(j + 1) * m, j * m:(j + 1) * m] = self.kinetics.jacobian(u)
        return J - self.delta * self.coupling_matrix

    def rhs_and_jacobian(self, y):
        return self.rhs(y), self.jacobian(y)

    def vector_field(self):
        return lambda t, y: self.rhs(y)

    def with_delta(self, delta: float) -> "PatchSystem":
        return PatchSystem(self.kinetics, self.n, self.E, delta)


def build_patch_system(ks: KineticSystem, n: int, E, delta: float) -> PatchSystem:
    return PatchSystem(ks, n, E, delta)


@dataclass(frozen=True, eq=False)
class SynchronousCycle:
    """The replicated orbit ``(φ, …, φ)`` of a kinetic cycle."""

    cycle: LimitCycle
    n: int

    @property
    def m(self) -> int:
        return self.cycle.dim

    @property
    def period(self) -> float:
        return self.cycle.period

    def state(self, t) -> np.ndarray:
        return np.tile(self.cycle(t), self.n)

    def residual(self, ps: PatchSystem, n_samples: int = 200) -> float:
        """Max ``|U₀′ - RHS(U₀)|`` along the orbit using the kinetic velocity."""
        worst = 0.0
        for t in np.linspace(0.0, self.period, n_samples, endpoint=False):
            U = self.state(t)
            velocity = np.tile(ps.kinetics.rhs(self.cycle(t)), self.n)
            worst = max(worst, float(np.abs(ps.rhs(U) - velocity).max()))
        return worst


@dataclass(frozen=True, eq=False)
class PeriodicLinearSystem:
    """``Y′ = (-δ kron(L, E) + kron(I_n, J(φ(t)))) Y`` along a kinetic cycle."""

    kinetics: KineticSystem
    cycle: LimitCycle
    n: int
    E: np.ndarray
    delta: float

    @property
    def period(self) -> float:
        return self.cycle.period

    @property
    def dim(self) -> int:
        return self.n * self.kinetics.dim

    def constant_part(self) -> np.ndarray:
        return -self.delta * np.kron(all_to_all_laplacian(self.n), self.E)

    def coefficient(self, y, J) -> np.ndarray:
        return np.kron(np.eye(self.n), J) + self.constant_part()

    def operator(self, t) -> np.ndarray:
        return self.coefficient(None, self.kinetics.jacobian(self.cycle(t)))

    def _coefficient_fn(self):
        C = self.constant_part()
        eye = np.eye(self.n)
        return lambda y, J: np.kron(eye, J) + C

    def propagators(self, segments: int, cfg: IntegratorConfig | None = None) -> list[np.ndarray]:
        """Fundamental matrices over ``segments`` equal sub-intervals of one period.

        The kinetic orbit is integrated together with each block so the
        coefficients are evaluated on the true orbit rather than an interpolant.
        """
        cfg = cfg or self.cycle.cfg
        m, k = self.kinetics.dim, self.dim
        f = variational_field(self.kinetics, self._coefficient_fn())
        y = self.cycle.anchor.copy()
        dt = self.period / segments
        out = []
        for s in range(segments):
            z = propagate(f, np.concatenate([y, np.eye(k).ravel(), [0.0]]), s * dt, (s + 1) * dt, cfg)
            y = z[:m]
            out.append(z[m:m + k * k].reshape(k, k))
        return out


def linearize_about_sync(ps: PatchSystem, sc: SynchronousCycle | LimitCycle) -> PeriodicLinearSystem:
    cycle = sc.cycle if isinstance(sc, SynchronousCycle) else sc
    return PeriodicLinearSystem(ps.kinetics, cycle, ps.n, ps.E, ps.delta)


@dataclass(frozen=True, eq=False)
class PatchFloquet:
    delta: float
    monodromy: np.ndarray
    multipliers: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    trivial_index: int
    trace_integral: float

    @property
    def trivial_multiplier(self) -> complex:
        return complex(self.multipliers[self.trivial_index])

    @property
    def liouville_ratio(self) -> float:
        return float(np.linalg.det(self.monodromy) / math.exp(self.trace_integral))

    @property
    def classification(self) -> str:
        return classify_multipliers(self.multipliers, self.trivial_index)

    def trivial_alignment(self, flow) -> float:
        """Angle (rad) between the trivial eigenvector and ``flow``."""
        w = self.eigenvectors[:, self.trivial_index]
        v = np.asarray(flow, dtype=float)
        c = abs(np.vdot(w, v)) / (np.linalg.norm(w) * np.linalg.norm(v))
        return float(math.acos(min(1.0, c)))


def _eig_sorted(M):
    w, V = np.linalg.eig(M)
    srt = sort_multipliers(w)
    used, idx = set(), []
    for val in srt:
        j = next(j for j in range(len(w)) if j not in used and w[j] == val)
        used.add(j)
        idx.append(j)
    return w[idx], V[:, idx]


def patch_floquet(ps: PatchSystem, sc: SynchronousCycle | LimitCycle,
                  cfg: IntegratorConfig | None = None) -> PatchFloquet:
    """Multipliers of the ``mn``-dimensional linearization about the synchronous cycle."""
    lin = linearize_about_sync(ps, sc)
    cfg = cfg or lin.cycle.cfg
    m, k = ps.m, ps.dim
    f = variational_field(ps.kinetics, lin._coefficient_fn())
    z = propagate(f, np.concatenate([lin.cycle.anchor, np.eye(k).ravel(), [0.0]]), 0.0, lin.period, cfg)
    M = z[m:m + k * k].reshape(k, k)
    w, V = _eig_sorted(M)
    flow = np.tile(ps.kinetics.rhs(lin.cycle.anchor), ps.n)
    triv = trivial_multiplier_index(w, V, flow)
    return PatchFloquet(ps.delta, M, w, V, triv, float(z[-1]))


def transverse_multipliers(ks: KineticSystem, cycle: LimitCycle, E, n: int, delta: float,
                           cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Multipliers of ``y′ = (J(φ(t)) - nδE) y``.

    The all-to-all Laplacian has eigenvalues ``0`` (once) and ``n`` (``n - 1``
    times), so the patch spectrum is the kinetic spectrum together with
    ``n - 1`` copies of these; used as an independent check.
    """
    E = as_diffusion_matrix(E, ks.dim)
    C = -n * delta * E
    m = ks.dim
    f = variational_field(ks, lambda y, J: J + C)
    z = propagate(f, np.concatenate([cycle.anchor, np.eye(m).ravel(), [0.0]]), 0.0, cycle.period,
                  cfg or cycle.cfg)
    return sort_multipliers(np.linalg.eigvals(z[m:m + m * m].reshape(m, m)))


# -- slopes of eigenvalue branches ---------------------------------------------


@dataclass(frozen=True)
class BranchFit:
    """Per-branch slope at ``δ = 0`` from values on a probe grid.

    ``values[i, j]`` is branch ``j`` at ``deltas[i]``.  Slopes are the
    intercepts of the least-squares line through ``(λ(δ) - λ(0))/δ`` against
    ``δ``, which removes the ``O(δ²)`` term.
    """

    deltas: np.ndarray
    values: np.ndarray
    base: np.ndarray
    slopes: np.ndarray
    curvatures: np.ndarray
    residuals: np.ndarray
    degenerate: bool = False
    trivial: np.ndarray | None = None

    def summary(self) -> dict:
        return {
            "deltas": [float(d) for d in self.deltas],
            "slopes": [complex(s) for s in self.slopes],
            "residuals": [float(r) for r in self.residuals],
            "degenerate": self.degenerate,
        }


def fit_branch_slopes(deltas, values, base) -> BranchFit:
    d = np.asarray(deltas, dtype=float)
    vals = np.asarray(values, dtype=complex)
    base = np.asarray(base, dtype=complex)
    if vals.ndim == 1:
        vals = vals[:, None]
    if np.any(d <= 0):
        raise ValueError("probe values must be positive")
    q = (vals - base[None, :]) / d[:, None]
    if len(d) == 1:
        return BranchFit(d, vals, base, q[0], np.zeros_like(q[0]), np.zeros(q.shape[1]))
    A = np.c_[np.ones_like(d), d]
    coef, *_ = np.linalg.lstsq(A, q, rcond=None)
    res = np.abs(A @ coef - q).max(axis=0) if len(d) > 2 else np.zeros(q.shape[1])
    return BranchFit(d, vals, base, coef[0], coef[1], res)


def _track(prev, cur):
    """Order ``cur`` to follow ``prev`` by greedy nearest pairing."""
    cur = list(cur)
    out = []
    for p in prev:
        j = int(np.argmin([abs(c - p) for c in cur]))
        out.append(cur.pop(j))
    return np.array(out)


def track_eigenvalue_paths(matrix_fn: Callable[[float], np.ndarray], deltas: Sequence[float]) -> BranchFit:
    """Eigenvalue branches of ``A(δ)`` continued from ``δ = 0`` by nearest-neighbour pairing."""
    base = np.linalg.eigvals(matrix_fn(0.0))
    base = base[np.lexsort((base.imag, base.real))]
    rows, prev = [], base
    for d in sorted(deltas):
        prev = _track(prev, np.linalg.eigvals(matrix_fn(d)))
        rows.append(prev)
    return fit_branch_slopes(sorted(deltas), np.array(rows), base)


def multiplier_slopes(ks: KineticSystem, cycle: LimitCycle, E, n: int,
                      deltas: Sequence[float] = (1e-3, 2e-3, 4e-3),
                      cfg: IntegratorConfig | None = None,
                      workers: int | None = None) -> BranchFit:
    """Slopes ``γ_j′(0)`` of the ``n - 1`` nontrivial multipliers that leave 1.

    At every probe the ``n`` multipliers nearest 1 are taken (assumption:
    the other multipliers are bounded away from 1), the trivial one is
    removed and the rest are continued across probes by nearest pairing.
    Symmetry makes the ``n - 1`` branches coincide; that is reported as
    ``degenerate`` rather than treated as an ambiguity.  A nontrivial branch
    within ``1e-9`` of the trivial multiplier raises.
    """
    deltas = sorted(float(d) for d in deltas)
    sc = SynchronousCycle(cycle, n)
    with ThreadPoolExecutor(max_workers=workers or max_workers()) as pool:
        results = list(pool.map(lambda d: patch_floquet(build_patch_system(ks, n, E, d), sc, cfg), deltas))
    return slopes_from_floquet(results, n)


def slopes_from_floquet(results: Sequence[PatchFloquet], n: int) -> BranchFit:
    """Branch extraction and slope fit on already computed patch spectra."""
    results = sorted(results, key=lambda r: r.delta)
    deltas = [r.delta for r in results]
    rows, trivial, prev, degenerate = [], [], None, False
    for res in results:
        w = res.multipliers
        near = np.argsort(np.abs(w - 1.0))[:n]
        triv = res.trivial_index if res.trivial_index in near else near[0]
        branch = [w[i] for i in near if i != triv]
        for b in branch:
            if abs(b - w[triv]) < COLLISION_TOL:
                raise BranchTrackingError(f"multiplier collision with the trivial branch at δ = {res.delta}")
        if any(abs(a - b) < COLLISION_TOL for i, a in enumerate(branch) for b in branch[i + 1:]):
            degenerate = True
        if prev is None:
            branch = sorted(branch, key=lambda z: (z.real, z.imag))
        else:
            branch = _track(prev, branch)
        prev = branch
        rows.append(branch)
        trivial.append(w[triv])
    fit = fit_branch_slopes(deltas, np.array(rows), np.ones(n - 1))
    return BranchFit(fit.deltas, fit.values, fit.base, fit.slopes, fit.curvatures, fit.residuals,
                     degenerate, np.array(trivial))


# -- Lyapunov exponents ----------------------------------------------------------


@dataclass(frozen=True)
class LyapunovResult:
    """Largest Lyapunov exponent of a periodic linear system by two routes.

    ``value`` is the QR (Benettin) average; ``floquet_value`` is
    ``ln max|γ| / P``.  ``trace`` holds ``(t, running estimate)`` pairs at
    multiples of the period after burn-in.
    """

    value: float
    floquet_value: float
    trace: np.ndarray
    dt: float
    horizon: float
    burn_in: float
    spread: float
    method: str

    @property
    def agreement(self) -> float:
        return abs(self.value - self.floquet_value)

    def summary(self) -> dict:
        return {
            "lle_qr": self.value,
            "lle_floquet": self.floquet_value,
            "agreement": self.agreement,
            "dt": self.dt,
            "horizon": self.horizon,
            "burn_in": self.burn_in,
            "tail_spread": self.spread,
            "method": self.method,
        }


def largest_lyapunov_exponent(lin: PeriodicLinearSystem, horizon: float = 20000.0, burn_in: float = 500.0,
                              dt: float = 1.0, method: str = "periodic", spread_tol: float = 1e-4,
                              cfg: IntegratorConfig | None = None) -> LyapunovResult:
    """Benettin QR estimate of the largest Lyapunov exponent.

    The re-orthonormalization interval is ``P/⌈P/dt⌉`` so that QR times fall
    on period multiples.  With ``method="periodic"`` the fundamental
    matrices of the sub-intervals of one period are computed once and
    reused, since the coefficients are exactly periodic; ``method="direct"``
    integrates the orbit and frame over the whole horizon instead.

    Raises :class:`ConvergenceError` when the running estimate over the last
    20% of the horizon varies by more than ``spread_tol``, or when that
    window holds fewer than two period samples.
    """
    P = lin.period
    segs = max(1, math.ceil(P / dt))
    h = P / segs
    cfg = cfg or lin.cycle.cfg
    k = lin.dim
    total_steps = math.ceil((burn_in + horizon) / h)
    burn_steps = math.ceil(burn_in / h)

    if method == "periodic":
        props = lin.propagators(segs, cfg)
        step = lambda i, Q: props[i % segs] @ Q
    elif method == "direct":
        m = lin.kinetics.dim
        f = variational_field(lin.kinetics, lin._coefficient_fn())
        state = {"y": lin.cycle.anchor.copy()}

        def step(i, Q):
            z = propagate(f, np.concatenate([state["y"], Q.ravel(), [0.0]]), i * h, (i + 1) * h, cfg)
            state["y"] = z[:m]
            return z[m:m + k * k].reshape(k, k)
    else:
        raise ValueError(f"unknown method {method!r}")

    Q = np.eye(k)
    mono = np.eye(k)
    acc = 0.0
    trace = []
    for i in range(total_steps):
        Z = step(i, Q)
        if method == "periodic" and i < segs:
            mono = props[i] @ mono
        Q, R = np.linalg.qr(Z)
        sgn = np.sign(np.diag(R))
        sgn[sgn == 0] = 1.0
        Q, R = Q * sgn, (R.T * sgn).T
        if i >= burn_steps:
            acc += math.log(abs(R[0, 0]))
            if (i + 1) % segs == 0:
                elapsed = (i + 1 - burn_steps) * h
                trace.append((elapsed, acc / elapsed))
    trace = np.array(trace) if trace else np.empty((0, 2))
    elapsed = (total_steps - burn_steps) * h
    value = acc / elapsed
    if method == "direct":
        mono = _product(lin.propagators(segs, cfg))
    floq = math.log(np.abs(np.linalg.eigvals(mono)).max()) / P
    tail = trace[trace[:, 0] >= 0.8 * horizon, 1] if len(trace) else np.empty(0)
    if len(tail) < 2:
        raise ConvergenceError("horizon too short: fewer than two period samples in its last 20%")
    spread = float(tail.max() - tail.min())
    if spread > spread_tol:
        raise ConvergenceError(f"running estimate varies by {spread:.3g} over the last 20% of the horizon")
    return LyapunovResult(float(value), float(floq), trace, h, float(horizon), float(burn_in), spread, method)


def _product(mats):
    out = np.eye(mats[0].shape[0])
    for M in mats:
        out = M @ out
    return out


# -- verdict ---------------------------------------------------------------------


@dataclass(frozen=True)
class DestabilizationVerdict:
    """Prediction from ``P′(0)`` and its numerical verification.

    ``verdict`` is ``"destabilized"`` only when the prediction says so and a
    measurement confirms it (a multiplier of modulus ``> 1 + 1e-6`` or an
    exponent ``> 1e-4``); ``"stable"`` needs the mirror agreement; anything
    else is ``"inconclusive"``.
    """

    p_prime: PeriodDerivativeReport
    n: int
    predicted_slope: float
    prediction: str
    slopes: BranchFit
    floquet: list
    lyapunov: LyapunovResult | None
    lyapunov_delta: float | None
    trivial_ok: bool
    measured: str
    verdict: str
    notes: list = field(default_factory=list)

    def summary(self) -> dict:
        out = {
            "verdict": self.verdict,
            "prediction": self.prediction,
            "measured": self.measured,
            "P_prime_0": self.p_prime.p1,
            "P_prime_method": self.p_prime.method,
            "period": self.p_prime.period,
            "n": self.n,
            "predicted_slope": self.predicted_slope,
            "fitted_slopes": [float(s.real) for s in self.slopes.slopes],
            "probes": [float(d) for d in self.slopes.deltas],
            "max_multiplier_modulus": [float(np.abs(r.multipliers).max()) for r in self.floquet],
            "trivial_multiplier_ok": self.trivial_ok,
            "notes": list(self.notes),
        }
        if self.lyapunov is not None:
            out["lle_delta"] = self.lyapunov_delta
            out.update(self.lyapunov.summary())
        return out


def predict_and_verify(ks: KineticSystem, cycle: LimitCycle, E, n: int,
                       deltas: Sequence[float] = (1e-3, 2e-3, 4e-3), *,
                       lyapunov_delta: float | None = None, horizon: float = 20000.0,
                       burn_in: float = 500.0, run_lyapunov: bool = True,
                       cfg: IntegratorConfig | None = None) -> DestabilizationVerdict:
    """Predict destabilization from the sign of ``P′(0)`` and check it numerically."""
    E = as_diffusion_matrix(E, ks.dim)
    pp = period_derivative(ks, cycle, E)
    slope = -n * pp.p1
    if pp.p1 < -PREDICTION_TOL:
        prediction = "destabilized"
    elif pp.p1 > PREDICTION_TOL:
        prediction = "stable"
    else:
        prediction = "inconclusive"
    deltas = sorted(float(d) for d in deltas)
    sc = SynchronousCycle(cycle, n)
    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        floq = list(pool.map(lambda d: patch_floquet(build_patch_system(ks, n, E, d), sc, cfg), deltas))
    notes = []
    try:
        fit = slopes_from_floquet(floq, n)
    except BranchTrackingError as exc:
        notes.append(str(exc))
        fit = fit_branch_slopes(deltas, np.ones((len(deltas), 1)), np.ones(1))
    trivial_ok = all(abs(r.trivial_multiplier - 1) <= TRIVIAL_TOL for r in floq)
    if not trivial_ok:
        notes.append("trivial multiplier drifted from 1 beyond 1e-5")
    lle, d_lle = None, None
    if run_lyapunov:
        d_lle = lyapunov_delta if lyapunov_delta is not None else deltas[-1]
        lin = linearize_about_sync(build_patch_system(ks, n, E, d_lle), sc)
        lle = largest_lyapunov_exponent(lin, horizon=horizon, burn_in=burn_in, cfg=cfg)
    grows = any(r.classification == "unstable" for r in floq) or (lle is not None and lle.value > LLE_TOL)
    decays = all(np.delete(np.abs(r.multipliers), r.trivial_index).max() < 1 + GROWTH_TOL for r in floq) and (
        lle is None or lle.value <= LLE_TOL)
    measured = "destabilized" if grows else ("stable" if decays else "inconclusive")
    if prediction != "inconclusive" and prediction == measured:
        verdict = prediction
    else:
        verdict = "inconclusive"
        if prediction != measured:
            notes.append(f"prediction ({prediction}) and measurement ({measured}) disagree")
    return DestabilizationVerdict(pp, n, slope, prediction, fit, floq, lle, d_lle, trivial_ok, measured,
                                  verdict, notes)
