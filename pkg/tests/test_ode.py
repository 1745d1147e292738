import math

import numpy as np
import pytest

from floquet_patch import presets
from floquet_patch.cycle import variational_field
from floquet_patch.ode import (
    IntegrationError, IntegratorConfig, NoCrossingError, Section, integrate, integrate_to_section,
    propagate,
)


def oscillator(t, y):
    return np.array([y[1], -y[0]])


def test_exponential_decay():
    tr = integrate(lambda t, y: -y, [1.0], (0.0, 1.0))
    assert abs(tr.y_final[0] - math.exp(-1)) < 1e-9
    assert np.all(np.diff(tr.t) > 0)


def test_harmonic_oscillator_full_turn():
    y = propagate(oscillator, [1.0, 0.0], 0.0, 2 * math.pi)
    np.testing.assert_allclose(y, [1.0, 0.0], atol=1e-8)


def test_backward_integration():
    y = propagate(lambda t, y: -y, [math.exp(-1)], 1.0, 0.0)
    assert y[0] == pytest.approx(1.0, abs=1e-9)


def test_interpolant_reproduces_samples():
    tr = integrate(oscillator, [1.0, 0.0], (0.0, 10.0))
    np.testing.assert_allclose(tr(tr.t), tr.y, atol=1e-12, rtol=0)


def test_dense_output_accuracy():
    tr = integrate(oscillator, [1.0, 0.0], (0.0, 10.0))
    ts = np.linspace(0, 10, 997)
    np.testing.assert_allclose(tr(ts), np.c_[np.cos(ts), -np.sin(ts)], atol=1e-8)
    with pytest.raises(ValueError):
        tr(10.5)


@pytest.mark.parametrize("h", [0.2, 0.1])
def test_dense_output_order_at_least_four(h):
    # steps forced to length h: accept every step, cap the step size
    def mid_error(h):
        cfg = IntegratorConfig(rtol=1.0, atol=1.0, first_step=h, max_step=h)
        tr = integrate(lambda t, y: y, [1.0], (0.0, h), cfg)
        return abs(tr(0.37 * h)[0] - math.exp(0.37 * h))

    assert mid_error(h) / mid_error(h / 2) > 14


def test_fixed_step_mode_is_deterministic_rk4():
    cfg = IntegratorConfig(fixed_step=0.01)
    a = integrate(oscillator, [1.0, 0.0], (0.0, 1.0), cfg)
    b = integrate(oscillator, [1.0, 0.0], (0.0, 1.0), cfg)
    assert np.array_equal(a.y, b.y)
    assert len(a) == 101
    np.testing.assert_allclose(a.y_final, [math.cos(1), -math.sin(1)], atol=1e-9)


def test_max_steps_exceeded():
    with pytest.raises(IntegrationError, match="maximum"):
        integrate(oscillator, [1.0, 0.0], (0.0, 100.0), IntegratorConfig(max_steps=5))


def test_rhs_failure_is_reported():
    with pytest.raises(IntegrationError):
        integrate(lambda t, y: np.array([1.0 / (1.0 - t)]), [0.0], (0.0, 2.0))


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(rtol=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(max_steps=0)


def test_section_hit_oscillator():
    # from (1, 0) the orbit leaves v = 0 downward, so the full-turn return is the downward crossing
    tr, t_hit, y_hit = integrate_to_section(oscillator, [1.0, 0.0], Section(1, 0.0, -1), t_min=0.1)
    assert t_hit == pytest.approx(2 * math.pi, abs=1e-8)
    assert abs(y_hit[1]) < 1e-10
    assert tr.terminated_by_event and tr.t_final == t_hit


def test_section_direction_is_respected():
    _, t_up, _ = integrate_to_section(oscillator, [1.0, 0.0], Section(1, 0.0, 1), t_min=0.1)
    assert t_up == pytest.approx(math.pi, abs=1e-8)


def test_no_crossing():
    with pytest.raises(NoCrossingError):
        integrate_to_section(lambda t, y: np.ones(1), [2.0], Section(0, 0.0, -1), t_max=50.0)


def test_halving_event_tolerance_moves_hit_little():
    tol = 1e-9
    hits = []
    for et in (tol, tol / 2):
        cfg = IntegratorConfig(event_tol=et)
        hits.append(integrate_to_section(oscillator, [1.0, 0.2], Section(0, 0.3, 1), cfg, t_min=0.1)[1])
    assert abs(hits[0] - hits[1]) < 10 * tol


def test_example1_converges_to_the_same_attractor(ex1):
    f = ex1.vector_field()
    sec = Section(0, 1.0, 1)
    returns = []
    for y0 in ([1.0, 1.0], [3.0, 0.5]):
        y = propagate(f, y0, 0.0, 500.0)
        _, t1, y1 = integrate_to_section(f, y, sec)
        _, t2, y2 = integrate_to_section(f, y1, sec, t_min=1.0)
        returns.append((y2, t2))
        # return map contracts: successive section hits agree
        assert abs(y2[1] - y1[1]) < 1e-7
    assert abs(returns[0][0][1] - returns[1][0][1]) < 1e-6


def test_example1_successive_returns_consistent(ex1, ex1_cycle):
    f = ex1.vector_field()
    sec = Section(0, float(ex1_cycle.anchor[0]), 1)
    y, t = ex1_cycle.anchor, 0.0
    times = []
    for _ in range(3):
        _, t, y = integrate_to_section(f, y, sec, t_min=1.0, t0=t)
        times.append(t)
    gaps = np.diff([0.0] + times)
    np.testing.assert_allclose(gaps, ex1_cycle.period, atol=1e-7)


def test_liouville_identity(ex1, ex1_cycle):
    m = 2
    z0 = np.concatenate([ex1_cycle.anchor, np.eye(m).ravel(), [0.0]])
    z = propagate(variational_field(ex1), z0, 0.0, ex1_cycle.period)
    det = np.linalg.det(z[m:m + m * m].reshape(m, m))
    assert det / math.exp(z[-1]) == pytest.approx(1.0, rel=1e-6)


def test_csv_header(tmp_path):
    tr = integrate(oscillator, [1.0, 0.0], (0.0, 1.0))
    tr.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,y1,y2"
    assert len(lines) == len(tr) + 1
    assert float(lines[1].split(",")[1]) == 1.0
