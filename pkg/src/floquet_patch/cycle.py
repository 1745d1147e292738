"""Limit cycles: Poincaré-section shooting, monodromy matrices, Floquet multipliers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .ode import (
    IntegrationError,
    IntegratorConfig,
    Section,
    Trajectory,
    integrate,
    integrate_to_section,
    propagate,
)

__all__ = [
    "CycleError",
    "LimitCycle",
    "find_cycle",
    "locate_orbit",
    "section_through",
    "cycle_from_anchor",
    "monodromy",
    "nontrivial_multiplier_2d",
    "sort_multipliers",
    "trivial_multiplier_index",
    "classify_multipliers",
    "variational_field",
]

CLOSURE_TOL = 1e-7
MINIMAL_PERIOD_TOL = 1e-5
HYPERBOLIC_TOL = 1e-6


class CycleError(RuntimeError):
    """No periodic orbit could be located or validated."""


class VectorFieldSystem(Protocol):
    """What cycle search needs from a system (kinetic, perturbed or patch)."""

    dim: int

    def rhs(self, y) -> np.ndarray: ...

    def jacobian(self, y) -> np.ndarray: ...

    def rhs_and_jacobian(self, y) -> tuple[np.ndarray, np.ndarray]: ...


def _field(system):
    return lambda t, y: system.rhs(y)


def variational_field(system, coefficient=None):
    """Augmented field for ``(y, Y, h)`` with ``Y' = A(y) Y`` and ``h' = tr A(y)``.

    ``coefficient(y, J)`` maps the kinetic Jacobian to the linear operator
    (identity map by default); the patch module uses it to assemble the
    block operator along the synchronous orbit.
    """
    m = system.dim

    def f(t, z):
        y = z[:m]
        F, J = system.rhs_and_jacobian(y)
        A = J if coefficient is None else coefficient(y, J)
        k = A.shape[0]
        Y = z[m:m + k * k].reshape(k, k)
        return np.concatenate([F, (A @ Y).ravel(), [np.trace(A)]])

    return f


def sort_multipliers(values) -> np.ndarray:
    """Descending modulus; ties broken by descending real part, then imaginary part."""
    values = np.asarray(values, dtype=complex)
    order = sorted(range(len(values)), key=lambda i: (-round(abs(values[i]), 12), -values[i].real, -values[i].imag))
    return values[order]


def trivial_multiplier_index(multipliers, eigvecs, flow_direction, tie_tol: float = 1e-6) -> int:
    """Index of the multiplier carried by the flow direction.

    The candidate closest to 1 wins; candidates whose distance to 1 is within
    ``tie_tol`` of the best are separated by eigenvector alignment with the
    flow direction.
    """
    dist = np.abs(np.asarray(multipliers) - 1.0)
    best = dist.min()
    cands = np.flatnonzero(dist <= best + tie_tol)
    if len(cands) == 1 or flow_direction is None:
        return int(cands[0])
    v = np.asarray(flow_direction, dtype=float)
    v = v / (np.linalg.norm(v) or 1.0)
    align = []
    for i in cands:
        w = eigvecs[:, i]
        align.append(abs(np.vdot(w, v)) / (np.linalg.norm(w) or 1.0))
    return int(cands[int(np.argmax(align))])


def classify_multipliers(multipliers, trivial: int, tol: float = HYPERBOLIC_TOL) -> str:
    rest = np.delete(np.abs(multipliers), trivial)
    if rest.size == 0:
        return "stable"
    top = rest.max()
    if top < 1 - tol:
        return "stable"
    if top > 1 + tol:
        return "unstable"
    return "non-hyperbolic"


def _eig_sorted(M):
    w, V = np.linalg.eig(M)
    srt = sort_multipliers(w)
    # map back to columns (stable w.r.t. duplicates)
    used, idx = set(), []
    for val in srt:
        j = next(j for j in range(len(w)) if j not in used and w[j] == val)
        used.add(j)
        idx.append(j)
    return w[idx], V[:, idx]


@dataclass(frozen=True, eq=False)
class LimitCycle:
    """A periodic orbit together with its linear stability data.

    Attributes
    ----------
    anchor : ndarray
        Point on the orbit at ``t = 0``.
    period : float
        Return time.
    trajectory : Trajectory
        Dense orbit over ``[0, period]``.
    monodromy : ndarray
        ``Y(period)`` for ``Y' = J(φ(t)) Y``, ``Y(0) = I``.
    multipliers : ndarray
        Eigenvalues of ``monodromy`` by descending modulus.
    trivial_index : int
        Position of the multiplier carried by the flow.
    trace_integral : float
        ``∫₀^p tr J dt`` integrated alongside the orbit.
    """

    system: object = field(repr=False)
    anchor: np.ndarray
    period: float
    trajectory: Trajectory = field(repr=False)
    monodromy: np.ndarray
    multipliers: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    trivial_index: int
    trace_integral: float
    section: Section | None = None
    cfg: IntegratorConfig = field(default_factory=IntegratorConfig, repr=False)

    @property
    def dim(self) -> int:
        return self.anchor.size

    @property
    def trivial_multiplier(self) -> complex:
        return complex(self.multipliers[self.trivial_index])

    @property
    def nontrivial_multipliers(self) -> np.ndarray:
        return np.delete(self.multipliers, self.trivial_index)

    @property
    def classification(self) -> str:
        return classify_multipliers(self.multipliers, self.trivial_index)

    @property
    def liouville_ratio(self) -> float:
        """``det M / exp(∫ tr J)``; 1 up to integration error."""
        return float(np.linalg.det(self.monodromy) / math.exp(self.trace_integral))

    def __call__(self, t):
        """Orbit state at time ``t`` (taken modulo the period)."""
        t = np.mod(t, self.period)
        return self.trajectory(t)

    def velocity(self, t=0.0) -> np.ndarray:
        return self.system.rhs(self(t))

    def samples(self, n: int = 4096) -> tuple[np.ndarray, np.ndarray]:
        """``n + 1`` equispaced samples over one period, endpoints included."""
        return self.trajectory.resample(n, 0.0, self.period)

    def shifted(self, tau: float) -> "LimitCycle":
        """The same orbit re-anchored at ``φ(tau)`` (monodromy recomputed)."""
        return cycle_from_anchor(self.system, self(tau), self.period, self.cfg)

    def closure_error(self) -> float:
        return float(np.linalg.norm(self.trajectory.y_final - self.anchor))

    def to_csv(self, path, n: int = 1000, names: Sequence[str] | None = None) -> None:
        ts, ys = self.samples(n)
        Trajectory(ts, ys, np.zeros((0, 5, self.dim))).to_csv(path, names)

    def summary(self) -> dict:
        return {
            "period": self.period,
            "anchor": [float(v) for v in self.anchor],
            "multipliers": [[float(g.real), float(g.imag)] for g in self.multipliers],
            "trivial_multiplier": [self.trivial_multiplier.real, self.trivial_multiplier.imag],
            "trace_integral": self.trace_integral,
            "classification": self.classification,
        }

    def summary_text(self) -> str:
        return json.dumps(self.summary(), indent=2)


def cycle_from_anchor(system, anchor, period: float, cfg: IntegratorConfig | None = None,
                      section: Section | None = None, check_closure: bool = True) -> LimitCycle:
    """Integrate orbit and variational equation over one known period."""
    cfg = cfg or IntegratorConfig()
    m = system.dim
    anchor = np.array(anchor, dtype=float)
    z0 = np.concatenate([anchor, np.eye(m).ravel(), [0.0]])
    aug = integrate(variational_field(system), z0, (0.0, period), cfg)
    zf = aug.y_final
    orbit = Trajectory(aug.t, aug.y[:, :m], aug.coeffs[:, :, :m])
    M = zf[m:m + m * m].reshape(m, m)
    if check_closure:
        err = np.linalg.norm(zf[:m] - anchor)
        if err >= CLOSURE_TOL * (1 + np.linalg.norm(anchor)):
            raise CycleError(f"orbit does not close: |φ(p) - φ(0)| = {err:.3g}")
    w, V = _eig_sorted(M)
    triv = trivial_multiplier_index(w, V, system.rhs(anchor))
    return LimitCycle(system, anchor, float(period), orbit, M, w, V, triv, float(zf[-1]), section, cfg)


def monodromy(system, cycle: LimitCycle) -> np.ndarray:
    """Monodromy matrix of ``Y' = J(φ(t)) Y`` over one period."""
    if system is cycle.system:
        return cycle.monodromy.copy()
    return cycle_from_anchor(system, cycle.anchor, cycle.period, cycle.cfg, check_closure=False).monodromy


def nontrivial_multiplier_2d(system, cycle: LimitCycle, n: int = 4096) -> float:
    """``γ̃ = exp(∫₀^p tr J dt)`` by the trapezoid rule on ``n`` equispaced samples."""
    if system.dim != 2:
        raise ValueError(f"nontrivial_multiplier_2d requires a planar system, got m = {system.dim}")
    ts, ys = cycle.samples(n)
    tr = np.array([np.trace(system.jacobian(y)) for y in ys])
    return float(math.exp(np.trapezoid(tr, ts)))


def _default_section(f, y, cfg, horizon):
    window = 50.0
    while True:
        tr = integrate(f, y, (0.0, window), cfg)
        u = tr.y[:, 0]
        lo, hi = u.min(), u.max()
        level = 0.5 * (lo + hi)
        g = u - level
        ups = np.count_nonzero((g[:-1] < 0) & (g[1:] >= 0))
        if ups >= 2 and hi - lo > 1e-9 * (1 + abs(level)):
            return Section(0, float(level), 1), tr.y_final
        if window >= horizon:
            raise CycleError(f"no recurrence detected within {horizon} time units")
        window = min(2 * window, horizon)
        y = tr.y_final


def find_cycle(
    system,
    seed,
    cfg: IntegratorConfig | None = None,
    *,
    section: Section | None = None,
    burn_in: float = 200.0,
    horizon: float = 1e4,
    tol: float = 1e-10,
    max_iter: int = 50,
    fd_step: float = 1e-7,
) -> LimitCycle:
    """Locate a periodic orbit near ``seed`` and compute its monodromy.

    After ``burn_in`` time units of transient, the orbit's first return to
    ``section`` (default: first component at the midpoint of its range,
    crossed upward) defines a map on the ``m - 1`` free coordinates whose
    fixed point is found by Newton iteration with a forward-difference
    Jacobian.

    Raises
    ------
    CycleError
        No recurrence within ``horizon``, Newton failure, a non-closing orbit
        or a return time that is not the minimal period.
    """
    cfg = cfg or IntegratorConfig()
    anchor, p, section = locate_orbit(system, seed, cfg, section=section, burn_in=burn_in,
                                      horizon=horizon, tol=tol, max_iter=max_iter, fd_step=fd_step)
    cyc = cycle_from_anchor(system, anchor, p, cfg, section=section)
    _check_minimal(cyc)
    return cyc


def section_through(system, point) -> Section:
    """Transversal section through ``point``: the component with the fastest flow."""
    v = system.rhs(point)
    i = int(np.argmax(np.abs(v)))
    if v[i] == 0.0:
        raise CycleError("point is an equilibrium; no transversal section")
    return Section(i, float(point[i]), 1 if v[i] > 0 else -1)


def locate_orbit(
    system,
    seed,
    cfg: IntegratorConfig | None = None,
    *,
    section: Section | None = None,
    burn_in: float = 200.0,
    horizon: float = 1e4,
    tol: float = 1e-10,
    max_iter: int = 50,
    fd_step: float = 1e-7,
) -> tuple[np.ndarray, float, Section]:
    """Anchor, return time and section of the periodic orbit (no monodromy)."""
    cfg = cfg or IntegratorConfig()
    f = _field(system)
    m = system.dim
    y = np.array(seed, dtype=float)
    try:
        if burn_in > 0:
            y = propagate(f, y, 0.0, burn_in, cfg)
        if section is None:
            section, y = _default_section(f, y, cfg, horizon)
        _, _, x = integrate_to_section(f, y, section, cfg, t_max=horizon, t_min=1e-9)
    except IntegrationError as exc:
        raise CycleError(f"no recurrence detected: {exc}") from exc

    free = [i for i in range(m) if i != section.index]
    t_min = 1e-9

    def embed(z):
        x = np.empty(m)
        x[free] = z
        x[section.index] = section.level
        return x

    def ret(z):
        _, t_hit, xr = integrate_to_section(f, embed(z), section, cfg, t_max=horizon, t_min=t_min)
        return xr[free] - z, t_hit

    z = x[free]
    try:
        r, p = ret(z)
        t_min = 0.5 * p
        for _ in range(max_iter + 1):
            rn = np.linalg.norm(r)
            if rn < tol * (1 + np.linalg.norm(z)):
                break
            if len(free) == 0:
                break
            Jr = np.empty((len(free), len(free)))
            for j in range(len(free)):
                hj = fd_step * max(1.0, abs(z[j]))
                zp = z.copy()
                zp[j] += hj
                Jr[:, j] = (ret(zp)[0] - r) / hj
            try:
                if np.linalg.cond(Jr) > 1e12:
                    raise np.linalg.LinAlgError
                dz = np.linalg.solve(Jr, -r)
            except np.linalg.LinAlgError:
                # neutral return map (e.g. a centre): accept a closed orbit
                if rn < math.sqrt(tol) * (1 + np.linalg.norm(z)):
                    break
                raise CycleError("return-map Jacobian is singular away from a fixed point")
            lam = 1.0
            while True:
                zn = z + lam * dz
                try:
                    rn_new, pn = ret(zn)
                except IntegrationError:
                    rn_new, pn = None, None
                if rn_new is not None and np.linalg.norm(rn_new) < rn:
                    break
                lam *= 0.5
                if lam < 1e-4:
                    raise CycleError("Newton line search failed on the return map")
            z, r, p = zn, rn_new, pn
        else:
            raise CycleError(f"Newton on the return map did not converge in {max_iter} iterations")
    except IntegrationError as exc:
        raise CycleError(f"return map evaluation failed: {exc}") from exc

    return embed(z), float(p), section


def _check_minimal(cyc: LimitCycle) -> None:
    scale = 1 + np.linalg.norm(cyc.anchor)
    for k in (2, 3):
        d = np.linalg.norm(cyc(cyc.period / k) - cyc.anchor)
        if d < MINIMAL_PERIOD_TOL * scale:
            raise CycleError(f"return time {cyc.period} is not minimal: orbit closes at p/{k}")
