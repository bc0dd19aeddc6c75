import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiabp.fields import Hamiltonian, psi_family
from quasiabp.grid import Grid, GridFunction
from quasiabp.operators import (OperatorConfig, diffusion_operator, inf_laplacian_h, inf_laplacian_normalized,
                                laplacian, p_laplacian_normalized, residual)
from quasiabp.solver import ProblemSpec

BOX = Grid.box((-1.0, -1.0), (1.0, 1.0), 21)
NODE = (13, 8)


def quadratic(a, b, c, d=0.0, e=0.0):
    return GridFunction.from_callable(
        BOX, lambda x: a * x[..., 0] ** 2 + b * x[..., 0] * x[..., 1] + c * x[..., 1] ** 2 + d * x[..., 0] + e * x[..., 1])


def exact_parts(a, b, c, d, e, x):
    hess = np.array([[2 * a, b], [b, 2 * c]])
    grad = hess @ x + np.array([d, e])
    unit = grad / np.linalg.norm(grad)
    return hess, grad, float(unit @ hess @ unit)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 2), st.floats(-2, 2))
def test_quadratic_operators_exact(a, b, c, d, e):
    u = quadratic(a, b, c, d, e)
    x = BOX.point(NODE)
    hess, grad, along = exact_parts(a, b, c, d, e, x)
    if np.linalg.norm(grad) < 1e-3:
        return
    assert laplacian(u, NODE) == pytest.approx(np.trace(hess), abs=1e-9)
    assert inf_laplacian_normalized(u, NODE) == pytest.approx(along, abs=1e-8)
    p = 3.0
    sum_cfg = OperatorConfig(diffusion="p-finite", p=p, convention="sum")
    mean_cfg = OperatorConfig(diffusion="p-finite", p=p, convention="mean")
    expected = np.trace(hess) + (p - 2) * along
    assert p_laplacian_normalized(u, NODE, sum_cfg) == pytest.approx(expected, abs=1e-8)
    assert p_laplacian_normalized(u, NODE, mean_cfg) == pytest.approx(expected / p, abs=1e-8)


@pytest.mark.parametrize("h", [0.0, 1.0, 2.0])
def test_h_homogeneous_weight(h):
    u = quadratic(1.0, 0.0, 0.5, 1.0, 0.0)
    cfg = OperatorConfig(diffusion="h-homogeneous", homogeneity=h, magnitude="central")
    x = BOX.point(NODE)
    _, grad, along = exact_parts(1.0, 0.0, 0.5, 1.0, 0.0, x)
    assert inf_laplacian_h(u, NODE, cfg) == pytest.approx(np.linalg.norm(grad) ** (2 - h) * along, rel=1e-8)


def test_p_two_is_laplacian():
    u = quadratic(1.0, -0.3, 0.2, 0.4, 0.1)
    cfg = OperatorConfig(diffusion="p-finite", p=2.0, convention="sum")
    assert p_laplacian_normalized(u, NODE, cfg) == pytest.approx(laplacian(u, NODE), abs=1e-10)


def test_minmax_scheme_on_axis_aligned_gradient():
    # the extremal directions are stencil directions, so the samples are nodal values
    g = Grid.box((-1.0, -1.0), (1.0, 1.0), 41)
    u = GridFunction.from_callable(g, lambda x: -0.5 * x[..., 0] ** 2)
    cfg = OperatorConfig(scheme="minmax")
    far = g.interior & (np.abs(g.points[..., 0]) >= g.spacing * 1.5)
    vals = diffusion_operator(u, None, cfg)[far]
    assert np.allclose(vals, -1.0, atol=1e-8)


def test_flat_gradient_fallback():
    u = quadratic(1.0, 0.0, 1.0)
    center = (10, 10)
    assert inf_laplacian_normalized(u, center) == pytest.approx(2.0)


def test_invalid_configs():
    with pytest.raises(ValueError):
        OperatorConfig(diffusion="p-finite", p=1.0)
    with pytest.raises(ValueError):
        OperatorConfig(diffusion="h-homogeneous", homogeneity=3.0)
    with pytest.raises(ValueError):
        OperatorConfig(diffusion="variable-p")
    with pytest.raises(ValueError):
        OperatorConfig(convention="median")


def test_variable_p_matches_constant():
    u = quadratic(1.0, 0.2, 0.3, 0.5, 0.0)
    const = OperatorConfig(diffusion="p-finite", p=4.0)
    var = OperatorConfig(diffusion="variable-p", p_field=lambda x: 4.0 + 0.0 * x[..., 0])
    assert diffusion_operator(u, NODE, var) == pytest.approx(diffusion_operator(u, NODE, const), rel=1e-12)


def test_residual_sign_on_exact_solution(disc21, unit_psi):
    ps = ProblemSpec(disc21, unit_psi, Hamiltonian(), OperatorConfig(diffusion="p-finite", p=3.0), f=1.0)
    u = GridFunction.from_callable(disc21, lambda x: 0.5 * (1 - np.sum(x ** 2, axis=-1)))
    assert np.allclose(residual(ps, u)[disc21.interior], 0.0, atol=1e-10)
    # lifting f makes the same function a subsolution
    assert np.all(residual(ps, u, f_values=np.full(disc21.shape, 2.0))[disc21.interior] < 0)


def test_psi_and_hamiltonian_enter_residual(disc21):
    psi = psi_family("constant-power", p_hat=1.0)
    ham = Hamiltonian(kind="drift-power", drift=(1.0, 0.0), rho=0.0, drift_exponent=0.0, sigma=1.0)
    ps = ProblemSpec(disc21, psi, ham, OperatorConfig(magnitude="central"), f=0.0)
    u = GridFunction.from_callable(disc21, lambda x: x[..., 0])
    # linear u: diffusion 0, H = <(1,0), (1,0)> = 1
    assert np.allclose(residual(ps, u)[disc21.interior], 1.0)
