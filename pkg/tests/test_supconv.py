import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiabp.fields import Hamiltonian, psi_family
from quasiabp.grid import Grid, GridFunction
from quasiabp.operators import OperatorConfig
from quasiabp.solver import ProblemSpec, SolveParams, solve_dirichlet
from quasiabp.supconv import inflated_datum, semiconvexity_check, subsolution_transfer_check, sup_convolution


def direct_sup_convolution(grid, values, eps):
    """Plain double loop over closure nodes."""
    pts = grid.points[grid.closure]
    vals = values[grid.closure]
    out = np.empty(grid.shape)
    for node in np.ndindex(grid.shape):
        d2 = np.sum((pts - grid.points[node]) ** 2, axis=-1)
        out[node] = np.max(vals - d2 / (2 * eps))
    return out


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(5, 14), st.floats(1e-3, 1.0), st.booleans())
def test_methods_agree_bitwise(seed, n, eps, disc):
    grid = Grid.ball((0.0, 0.0), 1.0, n) if disc else Grid.box((0.0, 0.0), (1.0, 1.0), n)
    u = GridFunction(grid, np.random.default_rng(seed).normal(size=grid.shape))
    a = sup_convolution(u, eps, "brute")
    b = sup_convolution(u, eps, "separable")
    assert np.array_equal(a.u_eps.values, b.u_eps.values)


def test_matches_direct_definition(rng):
    grid = Grid.ball((0.0, 0.0), 1.0, 11)
    u = GridFunction(grid, rng.normal(size=grid.shape))
    res = sup_convolution(u, 0.05)
    assert np.allclose(res.u_eps.values, direct_sup_convolution(grid, u.values, 0.05), rtol=0, atol=1e-12)


def test_argmax_attains_value(rng):
    grid = Grid.box((0.0, 0.0), (1.0, 1.0), 12)
    u = GridFunction(grid, rng.normal(size=grid.shape))
    res = sup_convolution(u, 0.02)
    for node in [(0, 0), (5, 7), (11, 3)]:
        y = tuple(res.argmax[node])
        d2 = np.sum((grid.points[y] - grid.points[node]) ** 2)
        assert res.u_eps.values[node] == pytest.approx(u.values[y] - d2 / 0.04, abs=1e-12)


def test_one_dimensional_closed_form():
    # sup_y -y**2/2 - (x-y)**2/(2 eps) = -x**2 / (2 (1 + eps))
    grid = Grid.box((-2.0,), (2.0,), 401)
    u = GridFunction.from_callable(grid, lambda x: -0.5 * x[..., 0] ** 2)
    res = sup_convolution(u, 1.0)
    x = grid.points[..., 0]
    assert np.max(np.abs(res.u_eps.values + x ** 2 / 4)[100:300]) < 1e-4


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-3, 0.5))
def test_dominates_and_semiconvex(seed, eps):
    grid = Grid.box((0.0, 0.0), (1.0, 1.0), 16)
    u = GridFunction(grid, np.random.default_rng(seed).normal(size=grid.shape))
    res = sup_convolution(u, eps)
    assert np.all(res.u_eps.values >= u.values)
    assert semiconvexity_check(res.u_eps, 1.0 / eps).ok


def test_semiconvexity_detects_kink():
    grid = Grid.box((-1.0,), (1.0,), 21)
    w = GridFunction.from_callable(grid, lambda x: -np.abs(x[..., 0]))
    rep = semiconvexity_check(w, 1.0)
    assert not rep.ok
    assert rep.witness == (10,)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-3, 0.1), st.floats(1.01, 10.0))
def test_monotone_in_eps(seed, eps, factor):
    grid = Grid.box((0.0, 0.0), (1.0, 1.0), 12)
    u = GridFunction(grid, np.random.default_rng(seed).normal(size=grid.shape))
    small = sup_convolution(u, eps).u_eps.values
    large = sup_convolution(u, eps * factor).u_eps.values
    assert np.all(small <= large)


def test_inflated_datum():
    grid = Grid.box((0.0, 0.0), (1.0, 1.0), 11)
    f = grid.points[..., 0]
    out = inflated_datum(f, grid, 0.1)
    assert out[5, 5] == pytest.approx(0.6)
    assert out[10, 5] == pytest.approx(1.0)


def test_bad_eps():
    grid = Grid.box((0.0, 0.0), (1.0, 1.0), 5)
    with pytest.raises(ValueError):
        sup_convolution(GridFunction(grid, 0.0), 0.0)


@pytest.mark.parametrize("eps", [1e-3, 1e-2])
def test_transfer_on_solved_disc(eps):
    grid = Grid.ball((0.0, 0.0), 1.0, 31)
    ps = ProblemSpec(grid, psi_family("constant-power", p_hat=0.0), Hamiltonian(), OperatorConfig(), f=1.0, g=0.0)
    sol = solve_dirichlet(ps, SolveParams(tol=1e-8))
    rep = subsolution_transfer_check(ps, sol.u, eps)
    assert rep.input_is_subsolution
    assert rep.pass_fraction >= 0.99
