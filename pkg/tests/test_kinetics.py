import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floquet_patch import presets
from floquet_patch.kinetics import (
    DomainError, KineticSystem, PerturbedSystem, make_holling_tanner, perturbation_first_order,
    perturbed_rhs, small_inverse,
)


def test_example_parameter_sets_accepted():
    for pars in (presets.EXAMPLE1, presets.EXAMPLE2):
        ks = make_holling_tanner(**pars)
        assert ks.dim == 2
        assert ks.variables == ("u", "v")


@pytest.mark.parametrize("key", ["a", "h", "K", "m", "r", "s"])
def test_non_positive_parameter_rejected(key):
    pars = dict(presets.EXAMPLE1)
    pars[key] = 0.0
    with pytest.raises(ValueError, match=key):
        make_holling_tanner(**pars)


def test_holling_tanner_formulas(ex1):
    u, v = 0.8, 1.9
    f = u * (1 - u / 5) - u * v / (u + 1)
    g = 0.1 * v * (1 - 0.5 * v / u)
    np.testing.assert_allclose(ex1.rhs([u, v]), [f, g], rtol=1e-15)


def test_predator_vanishes_on_v_zero(ex1):
    assert ex1.rhs([2.0, 0.0])[1] == 0.0


def test_prey_outside_domain_raises(ex1):
    with pytest.raises(DomainError):
        ex1.rhs([0.0, 1.0])
    with pytest.raises(DomainError):
        ex1.jacobian([-0.1, 1.0])


def test_with_params_is_a_copy(ex1):
    k2 = ex1.with_params(s=0.2)
    assert k2.params["s"] == 0.2
    assert ex1.params["s"] == 0.1


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 6.0), st.floats(0.0, 6.0))
def test_jacobian_matches_finite_differences(u, v):
    ks = presets.example1()
    y = np.array([u, v])
    J = ks.jacobian(y)
    for j in range(2):
        h = 1e-6 * max(1.0, abs(y[j]))
        e = np.zeros(2)
        e[j] = h
        fd = (ks.rhs(y + e) - ks.rhs(y - e)) / (2 * h)
        scale = max(1.0, np.abs(J).max())
        np.testing.assert_allclose(J[:, j], fd, atol=1e-5 * scale)


def test_jacobian_of_dsl_model():
    ks = KineticSystem(("x", "y", "z"), ("x*y - z", "sin(x) + y^2", "exp(z)*x"))
    y = np.array([0.3, -1.2, 0.4])
    x_, y_, z_ = y
    want = np.array([[y_, x_, -1.0], [np.cos(x_), 2 * y_, 0.0], [np.exp(z_), 0.0, np.exp(z_) * x_]])
    np.testing.assert_allclose(ks.jacobian(y), want, rtol=1e-15)


STATE = np.array([1.3, 2.1])


def test_perturbed_rhs_at_zero_eps(ex1):
    np.testing.assert_allclose(perturbed_rhs(PerturbedSystem(ex1, [[1, 10], [1, 1]], 0.0), STATE),
                               ex1.rhs(STATE), rtol=1e-14)


@pytest.mark.parametrize("eps", [0.05, -0.3, 1.7])
def test_perturbed_rhs_identical_diffusion(ex1, eps):
    d0 = 0.8
    got = perturbed_rhs(PerturbedSystem(ex1, d0 * np.eye(2), eps), STATE)
    np.testing.assert_allclose(got, ex1.rhs(STATE) / (1 + eps * d0), rtol=1e-14)


def test_perturbed_rhs_nilpotent_coupling(ex1):
    ps = PerturbedSystem(ex1, [[0, 1], [0, 0]], 0.1)
    assert ps.det == 1.0
    np.testing.assert_allclose(perturbed_rhs(ps, STATE), np.array([[1, -0.1], [0, 1]]) @ ex1.rhs(STATE),
                               rtol=1e-14)


def test_perturbed_rhs_adjugate_form(ex1):
    D = np.array([[0.3, -1.2], [1.7, -0.4]])
    eps = 0.07
    (d11, d12), (d21, d22) = D
    M = (d11 * d22 - d12 * d21) * eps ** 2 + (d11 + d22) * eps + 1
    f, g = ex1.rhs(STATE)
    want = np.array([(1 + eps * d22) * f - eps * d12 * g, -eps * d21 * f + (1 + eps * d11) * g]) / M
    ps = PerturbedSystem(ex1, D, eps)
    assert ps.det == pytest.approx(M, rel=1e-15)
    np.testing.assert_allclose(perturbed_rhs(ps, STATE), want, rtol=1e-13)


def test_singular_perturbation_rejected(ex1):
    with pytest.raises(np.linalg.LinAlgError):
        PerturbedSystem(ex1, np.eye(2), -1.0)


def test_first_order_term_examples(ex1):
    f, g = ex1.rhs(STATE)
    np.testing.assert_allclose(perturbation_first_order(ex1, 2.5 * np.eye(2), STATE), [-2.5 * f, -2.5 * g])
    np.testing.assert_array_equal(perturbation_first_order(ex1, np.zeros((2, 2)), STATE), [0.0, 0.0])
    f1, g1 = perturbation_first_order(ex1, 2.5 * np.eye(2), STATE)
    assert f * g1 - g * f1 == pytest.approx(0.0, abs=1e-15)


def test_first_order_term_is_eps_derivative(ex1):
    D = np.array([[1.0, 10.0], [1.0, 1.0]])
    base = ex1.rhs(STATE)

    def q(e):
        return (perturbed_rhs(PerturbedSystem(ex1, D, e), STATE) - base) / e

    # one-sided quotient: error O(h), removed by 2q(h/2) - q(h)
    h = 1e-4
    rich = 2 * q(h / 2) - q(h)
    np.testing.assert_allclose(rich, perturbation_first_order(ex1, D, STATE), rtol=1e-6)


@pytest.mark.parametrize("m", [1, 2, 3, 4, 6])
def test_small_inverse(m):
    rng = np.random.default_rng(m)
    A = rng.normal(size=(m, m)) + m * np.eye(m)
    np.testing.assert_allclose(small_inverse(A) @ A, np.eye(m), atol=1e-12)


def test_small_inverse_singular():
    with pytest.raises(np.linalg.LinAlgError):
        small_inverse(np.array([[1.0, 2.0], [2.0, 4.0]]))
