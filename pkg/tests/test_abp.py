import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiabp.abp import (abp_constant, abp_exponents, abp_lhs, abp_rhs, abp_verdict, check_window,
                          classical_sup_bound, sigma_ceiling)
from quasiabp.envelope import concave_envelope
from quasiabp.fields import Hamiltonian, PsiField, psi_family
from quasiabp.grid import Grid, GridFunction, positive_part_extend
from quasiabp.operators import OperatorConfig
from quasiabp.solver import ProblemSpec, SolveParams, solve_dirichlet

UNIT = psi_family("constant-power", p_hat=0.0)


def test_lhs_values():
    assert abp_lhs(1.0, 1.0, 2.0, 1.5, 3.0) == 0.0
    assert abp_lhs(0.5, 0.0, 1.0, 1.5, 3.0) == pytest.approx(0.125)
    assert abp_lhs(2.0, 0.0, 1.0, 1.5, 3.0) == pytest.approx(2 ** 1.5)
    with pytest.raises(ValueError):
        abp_lhs(1.0, 0.0, 0.0, 1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0, 3), st.floats(-5, 5))
def test_lhs_shift_invariant(m, gap, shift):
    base = abp_lhs(m + gap, m, 2.0, 1.2, 2.5)
    assert abp_lhs(m + gap + shift, m + shift, 2.0, 1.2, 2.5) == pytest.approx(base, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("variant,kw,expected", [
    ("infinity", {}, 2.0),
    ("p-finite", {"p": 2.0}, 4.0),
    ("p-finite", {"p": 3.0}, 3.0),
    ("h-homogeneous", {"h": 1.0}, 3.0),
    ("h-homogeneous", {"h": 2.0}, 2.0),
])
def test_constants_for_unit_psi(variant, kw, expected):
    assert abp_constant(variant, UNIT, **kw) == expected


def test_h_two_matches_infinity_exponents():
    psi = psi_family("double-phase", p_hat=0.5, q_hat=1.0, coef=0.5)
    assert abp_exponents("h-homogeneous", psi, 0.7, h=2.0) == abp_exponents("infinity", psi, 0.7)


def test_window_refused():
    psi = psi_family("constant-power", p_hat=0.5)
    assert sigma_ceiling("infinity", psi) == 2.5
    with pytest.raises(ValueError):
        check_window("infinity", psi, 2.5)
    check_window("infinity", psi, 2.4)


def test_classical_bound_positive():
    bound, const = classical_sup_bound(UNIT, 3.0, 0.5, 2.0, 1.0)
    assert bound > 0 and const > 0
    with pytest.raises(ValueError):
        classical_sup_bound(UNIT, 1.2, 0.5, 2.0, 1.0)


@pytest.fixture(scope="module")
def disc_solution():
    grid = Grid.ball((0.0, 0.0), 1.0, 41)
    ps = ProblemSpec(grid, UNIT, Hamiltonian(), OperatorConfig(), f=1.0, g=0.0)
    return ps, solve_dirichlet(ps, SolveParams(tol=1e-8)).u


def test_rhs_constant_integrand_exact(disc_solution):
    ps, u = disc_solution
    env = concave_envelope(positive_part_extend(u), tol_c=ps.grid.spacing ** 2 * 0.5)
    M = float(u.values.max())
    total, rows = abp_rhs(ps, u, env, 16, resolve_floor=True)
    assert total == pytest.approx(2.0 * 1.0 * M, rel=1e-12)
    assert len(rows) == 16


def test_disc_verdict(disc_solution):
    ps, u = disc_solution
    rep = abp_verdict(ps, u)
    assert rep.C == 2.0
    assert rep.M == pytest.approx(0.5, abs=0.05)
    assert rep.lhs == pytest.approx((rep.M / rep.d) ** 2)
    assert rep.rhs == pytest.approx(2.0 * rep.M, rel=1e-12)
    assert rep.passed
    assert rep.supersolution is not None and rep.supersolution.verdict
    doc = json.loads(rep.to_json({"timestamp": "t"}))
    assert doc["verdict"] == "pass" and doc["overall"] == "pass"
    assert rep.table_csv().startswith("side,k,tau")
    assert "constant C = 2" in rep.to_text()


def test_constant_function_trivial(disc_solution):
    ps, _ = disc_solution
    rep = abp_verdict(ps, GridFunction(ps.grid, 0.0))
    assert rep.lhs == 0.0 and rep.rhs == 0.0
    assert rep.verdict


def test_rhs_linear_in_integrand(disc_solution):
    ps, u = disc_solution
    a = abp_verdict(ps, u, supersolution=False).rhs
    b = abp_verdict(ps.with_data(f=3.0), u, supersolution=False).rhs
    assert b == pytest.approx(3 * a, rel=1e-12)


def test_advisory_when_not_a_solution(disc_solution):
    ps, u = disc_solution
    # residual 1 - 0.2 > 0: a supersolution of the smaller datum only
    rep = abp_verdict(ps.with_data(f=0.2), u)
    assert rep.advisory
    assert not rep.supersolution.advisory


def test_unknown_variant(disc_solution):
    ps, u = disc_solution
    with pytest.raises(ValueError):
        abp_verdict(ps, u, variant="nonsense")


def test_declared_factors_reported(disc_solution):
    ps, u = disc_solution
    psi = PsiField("constant-power", i_psi=0.0, s_psi=0.0, l2=2.0, a_lower=0.5, p_hat=0.0)
    rep = abp_verdict(ps.with_data(psi=psi), u)
    assert rep.psi_factor_quotient == 0.25
    assert rep.psi_factor_product == 1.0
    assert np.isclose(rep.C, 2 * 1.0 / 0.5)
