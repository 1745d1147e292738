import math

import numpy as np
import pytest

from floquet_patch import presets
from floquet_patch.cycle import (
    CycleError, _check_minimal, cycle_from_anchor, find_cycle, monodromy, nontrivial_multiplier_2d,
    sort_multipliers, trivial_multiplier_index,
)
from floquet_patch.hopf import holling_tanner_positive_equilibrium
from floquet_patch.kinetics import KineticSystem
from floquet_patch.ode import Section


def test_example1_cycle_surrounds_the_focus(ex1, ex1_cycle):
    ue, ve = presets.EXAMPLE1_EQUILIBRIUM
    ts, ys = ex1_cycle.samples(2000)
    assert ys[:, 0].min() < ue < ys[:, 0].max()
    assert ys[:, 1].min() < ve < ys[:, 1].max()
    # winding number one around the equilibrium
    ang = np.unwrap(np.arctan2(ys[:, 1] - ve, ys[:, 0] - ue))
    assert abs(abs(ang[-1] - ang[0]) - 2 * math.pi) < 1e-6
    # the equilibrium is an unstable focus
    eig = np.linalg.eigvals(ex1.jacobian(presets.EXAMPLE1_EQUILIBRIUM))
    assert np.all(eig.real > 0) and np.all(eig.imag != 0)


def test_cycle_invariants(ex1, ex1_cycle):
    c = ex1_cycle
    assert abs(c.trivial_multiplier - 1) < 1e-5
    assert c.liouville_ratio == pytest.approx(1.0, rel=1e-5)
    assert c.closure_error() < 1e-7 * (1 + np.linalg.norm(c.anchor))
    assert c.classification == "stable"
    assert 0 < c.nontrivial_multipliers[0].real < 1
    # sorted by descending modulus
    assert np.all(np.diff(np.abs(c.multipliers)) <= 0)


def test_anchor_is_return_map_fixed_point(ex1, ex1_cycle):
    from floquet_patch.ode import integrate_to_section

    c = ex1_cycle
    _, t, y = integrate_to_section(ex1.vector_field(), c.anchor, c.section, t_min=0.5 * c.period)
    assert np.linalg.norm(y - c.anchor) < 1e-8
    assert t == pytest.approx(c.period, abs=1e-8)


def test_trivial_eigenvector_is_the_flow(ex1, ex1_cycle):
    M = monodromy(ex1, ex1_cycle)
    v = ex1.rhs(ex1_cycle.anchor)
    np.testing.assert_allclose(M @ v, v, rtol=0, atol=1e-6 * np.linalg.norm(v))


def test_nontrivial_multiplier_two_routes(ex1, ex1_cycle):
    quad = nontrivial_multiplier_2d(ex1, ex1_cycle)
    eig = ex1_cycle.nontrivial_multipliers[0].real
    assert quad == pytest.approx(eig, rel=1e-5)
    assert quad < 1
    assert np.linalg.det(ex1_cycle.monodromy) == pytest.approx(eig, rel=1e-5)


def test_section_level_invariance(ex1, ex1_cycle):
    ts, ys = ex1_cycle.samples(200)
    lo, hi = ys[:, 0].min(), ys[:, 0].max()
    periods = []
    for frac in (0.3, 0.7):
        sec = Section(0, lo + frac * (hi - lo), 1)
        periods.append(find_cycle(ex1, ex1_cycle.anchor, section=sec, burn_in=0.0).period)
    for p in periods:
        assert p == pytest.approx(ex1_cycle.period, rel=1e-8)


def test_multipliers_invariant_under_time_shift(ex1_cycle):
    for tau in (0.2, 0.5):
        sh = ex1_cycle.shifted(tau * ex1_cycle.period)
        np.testing.assert_allclose(sh.multipliers, ex1_cycle.multipliers, atol=1e-6)


def test_harmonic_oscillator_is_non_hyperbolic(oscillator):
    c = find_cycle(oscillator, [1.0, 0.0], section=Section(1, 0.0, -1), burn_in=0.0)
    assert c.period == pytest.approx(2 * math.pi, abs=1e-8)
    np.testing.assert_allclose(c.multipliers, [1, 1], atol=1e-7)
    assert c.classification == "non-hyperbolic"
    assert nontrivial_multiplier_2d(oscillator, c) == pytest.approx(1.0, abs=1e-12)


def test_example2_small_cycle(ex2_cycle):
    u, v = holling_tanner_positive_equilibrium(presets.EXAMPLE2["a"], presets.EXAMPLE2["h"],
                                               presets.EXAMPLE2_S_CYCLE)
    ts, ys = ex2_cycle.samples(500)
    radius = np.hypot(ys[:, 0] - u, ys[:, 1] - v).max()
    assert radius < 0.1
    assert ex2_cycle.classification == "stable"
    assert abs(ex2_cycle.trivial_multiplier - 1) < 1e-5
    assert ex2_cycle.liouville_ratio == pytest.approx(1.0, rel=1e-5)


def test_no_recurrence_for_stable_node():
    node = KineticSystem(("x", "y"), ("-x", "-2*y"))
    with pytest.raises(CycleError):
        find_cycle(node, [1.0, 1.0], burn_in=10.0, horizon=100.0)


def test_doubled_period_is_rejected(ex1, ex1_cycle):
    twice = cycle_from_anchor(ex1, ex1_cycle.anchor, 2 * ex1_cycle.period)
    with pytest.raises(CycleError, match="not minimal"):
        _check_minimal(twice)
    _check_minimal(ex1_cycle)


def test_non_closing_orbit_rejected(ex1, ex1_cycle):
    with pytest.raises(CycleError, match="does not close"):
        cycle_from_anchor(ex1, ex1_cycle.anchor, 0.9 * ex1_cycle.period)


def test_trivial_multiplier_tie_break():
    w = np.array([1.0, 1.0])
    V = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert trivial_multiplier_index(w, V, [0.1, 2.0]) == 1
    assert trivial_multiplier_index(w, V, [3.0, 0.1]) == 0


def test_sort_multipliers():
    s = sort_multipliers([0.5, 1.0, -2.0, 0.3 + 0.4j])
    np.testing.assert_allclose(np.abs(s), [2.0, 1.0, 0.5, 0.5])


def test_summary_and_csv(ex1_cycle, tmp_path):
    d = ex1_cycle.summary()
    assert d["period"] == ex1_cycle.period and d["classification"] == "stable"
    ex1_cycle.to_csv(tmp_path / "c.csv", n=10, names=["u", "v"])
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "t,u,v" and len(lines) == 12
