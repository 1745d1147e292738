import numpy as np
import pytest

from floquet_patch import presets
from floquet_patch.kinetics import KineticSystem
from floquet_patch.period import (
    fd_p1, identical_diffusion_p1, max_workers, period_derivative, perturbed_period, urabe_p1,
)

CROSS = presets.EXAMPLE1_CROSS
RANDOM_D = np.random.default_rng(20240611).uniform(-2, 2, size=(5, 2, 2))


@pytest.mark.parametrize("d0", [1.0, 0.37, -2.0])
def test_identical_diffusion_closed_form(ex1, ex1_cycle, d0):
    rep = urabe_p1(ex1, ex1_cycle, d0 * np.eye(2))
    exact = identical_diffusion_p1(ex1_cycle, d0)
    assert exact.p1 == d0 * ex1_cycle.period
    assert rep.p1 == pytest.approx(exact.p1, rel=1e-6)
    assert rep.method == "urabe" and rep.samples == 4096
    assert rep.gamma_tilde == pytest.approx(ex1_cycle.nontrivial_multipliers[0].real, rel=1e-5)


def test_zero_diffusion(ex1, ex1_cycle):
    assert urabe_p1(ex1, ex1_cycle, np.zeros((2, 2))).p1 == 0.0
    fd = fd_p1(ex1, ex1_cycle, np.zeros((2, 2)))
    assert abs(fd.p1) < 1e-6 * ex1_cycle.period


def test_fd_identical_diffusion(ex1, ex1_cycle):
    fd = fd_p1(ex1, ex1_cycle, np.eye(2))
    assert fd.p1 == pytest.approx(ex1_cycle.period, rel=1e-3)


def test_cross_diffusion_against_oracle(ex1, ex1_cycle):
    u = urabe_p1(ex1, ex1_cycle, CROSS)
    fd = fd_p1(ex1, ex1_cycle, CROSS)
    assert u.p1 < 0
    assert abs(u.p1 - fd.p1) / abs(fd.p1) < 0.01


@pytest.mark.parametrize("D", list(RANDOM_D), ids=[f"D{i}" for i in range(5)])
def test_random_diffusion_against_oracle(ex1, ex1_cycle, D):
    u = urabe_p1(ex1, ex1_cycle, D)
    fd = fd_p1(ex1, ex1_cycle, D)
    assert abs(u.p1 - fd.p1) / max(abs(fd.p1), 1e-8) < 0.02


def test_printed_kernel_disagrees_with_oracle(ex1, ex1_cycle):
    # swapping the off-diagonal Jacobian sum for the trace is not a harmless rewrite
    good = urabe_p1(ex1, ex1_cycle, CROSS)
    bad = urabe_p1(ex1, ex1_cycle, CROSS, kernel="trace")
    assert abs(bad.p1 - good.p1) > 0.5 * abs(good.p1)


def test_linearity_in_D(ex1, ex1_cycle):
    D1, D2 = RANDOM_D[0], RANDOM_D[1]
    a = urabe_p1(ex1, ex1_cycle, D1).p1
    b = urabe_p1(ex1, ex1_cycle, D2).p1
    ab = urabe_p1(ex1, ex1_cycle, D1 + D2).p1
    assert ab == pytest.approx(a + b, rel=1e-6, abs=1e-6 * (abs(a) + abs(b)))


def test_time_origin_invariance(ex1, ex1_cycle):
    ref = urabe_p1(ex1, ex1_cycle, CROSS).p1
    for tau in (0.25, 0.6):
        got = urabe_p1(ex1, ex1_cycle.shifted(tau * ex1_cycle.period), CROSS).p1
        assert got == pytest.approx(ref, rel=1e-6)


def test_quadrature_converged(ex1, ex1_cycle):
    # cumulative integrals are second order: doubling n cuts the change about fourfold
    rep = urabe_p1(ex1, ex1_cycle, CROSS)
    fine = urabe_p1(ex1, ex1_cycle, CROSS, n=8192)
    assert rep.error < 1e-5 * abs(rep.p1)
    assert abs(fine.p1 - rep.p1) < 0.4 * rep.error


def test_central_difference_stable_under_halving(ex1, ex1_cycle):
    fd = fd_p1(ex1, ex1_cycle, CROSS)
    s1, s2 = fd.details["slopes"]
    assert abs(s1 - s2) / abs(s2) < 0.01


def test_perturbed_period_at_zero(ex1, ex1_cycle):
    assert perturbed_period(ex1, ex1_cycle, CROSS, 0.0) == pytest.approx(ex1_cycle.period, rel=1e-10)


def test_requires_planar_system():
    ks = KineticSystem(("x", "y", "z"), ("y", "-x", "-z"))

    class Fake:
        system = ks

    with pytest.raises(ValueError, match="planar"):
        urabe_p1(ks, Fake(), np.eye(3))


def test_singular_for_neutral_cycle(oscillator):
    from floquet_patch.cycle import find_cycle
    from floquet_patch.ode import Section

    c = find_cycle(oscillator, [1.0, 0.0], section=Section(1, 0.0, -1), burn_in=0.0)
    with pytest.raises(ValueError, match="not below 1"):
        urabe_p1(oscillator, c, np.eye(2))


def test_dispatch(ex1, ex1_cycle):
    assert period_derivative(ex1, ex1_cycle, np.eye(2)).method == "urabe"
    with pytest.raises(ValueError):
        period_derivative(ex1, ex1_cycle, np.eye(2), method="magic")


def test_thread_cap_from_environment(monkeypatch):
    monkeypatch.setenv("FLOQUET_PATCH_THREADS", "3")
    assert max_workers() == 3
    monkeypatch.setenv("FLOQUET_PATCH_THREADS", "zero")
    assert max_workers(5) == 5
    monkeypatch.setenv("FLOQUET_PATCH_THREADS", "0")
    assert max_workers() == 1
