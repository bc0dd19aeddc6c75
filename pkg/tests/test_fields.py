import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiabp.fields import (CoefficientDomainError, Hamiltonian, PsiField, ham_continuity_check, ham_eval,
                             ham_growth_check, psi_eval, psi_family, psi_lower_bound, validate_structural)

XS = np.array([[0.0, 0.0], [0.3, -0.2], [-0.5, 0.4]])


@pytest.mark.parametrize("kind,kw,i_psi,s_psi", [
    ("constant-power", dict(p_hat=0.5), 0.5, 0.5),
    ("double-phase", dict(p_hat=0.5, q_hat=1.5, coef=0.3), 0.5, 1.5),
    ("log-double-phase", dict(p_hat=0.5, coef=0.3), 0.5, 1.5),
])
def test_family_constants(kind, kw, i_psi, s_psi):
    psi = psi_family(kind, **kw)
    assert psi.i_psi == i_psi
    assert psi.s_psi == s_psi
    assert validate_structural(psi, XS).ok


@pytest.mark.parametrize("kind,kw", [
    ("variable-power", dict(p_hat=lambda x: 0.5 + 0.2 * x[..., 0])),
    ("variable-double-phase", dict(p_hat=lambda x: 0.5 + 0.2 * x[..., 0], q_hat=lambda x: 1.0 + 0.2 * x[..., 1],
                                   coef=0.5)),
    ("log-variable-double-phase", dict(p_hat=lambda x: 0.5 + 0.2 * x[..., 1], coef=0.5)),
])
def test_variable_families_validate(kind, kw):
    psi = psi_family(kind, samples=XS, **kw)
    assert validate_structural(psi, XS).ok


def test_variable_family_needs_samples():
    with pytest.raises(ValueError):
        psi_family("variable-power", p_hat=lambda x: 0.5 + x[..., 0])


def test_unit_psi_is_one():
    psi = psi_family("constant-power", p_hat=0.0)
    assert psi.a_lower == psi.b_upper == psi.l1 == psi.l2 == 1.0
    assert np.all(psi_eval(psi, XS, np.array([0.1, 1.0, 7.0])) == 1.0)


def test_wrong_declared_constants_detected():
    psi = PsiField("constant-power", i_psi=1.0, s_psi=1.0, p_hat=0.5)
    report = validate_structural(psi, XS)
    assert not report.ok
    assert any("Psi/t^i" in v.inequality or "Psi/t^s" in v.inequality for v in report.violations)


def test_declared_constant_constraints():
    psi = PsiField("constant-power", i_psi=1.0, s_psi=0.5)
    assert psi.constant_errors()


def test_singular_psi_at_zero():
    psi = PsiField("constant-power", i_psi=-0.5, s_psi=-0.5, p_hat=-0.5)
    with pytest.raises(ValueError):
        psi_eval(psi, XS[:1], 0.0)


def test_bounds_refused():
    psi = psi_family("constant-power", p_hat=0.5, bounds=((-1.0, -1.0), (1.0, 1.0)))
    with pytest.raises(CoefficientDomainError):
        psi_eval(psi, [2.0, 0.0], 1.0)


@settings(max_examples=60, deadline=None)
@given(t=st.floats(1e-3, 1e3), p=st.floats(0.0, 1.5), dq=st.floats(0.0, 1.0), c=st.floats(0.0, 2.0))
def test_lower_bound_holds(t, p, dq, c):
    psi = psi_family("double-phase", p_hat=p, q_hat=p + dq, coef=c)
    x = np.zeros(2)
    assert psi_eval(psi, x, t) >= psi_lower_bound(psi, x, t) * (1 - 1e-12)


def test_product_form_not_implied():
    psi = PsiField("constant-power", i_psi=0.5, s_psi=0.5, l1=1.0, l2=2.0, p_hat=0.5)
    t = 0.5
    assert psi_lower_bound(psi, [0.0, 0.0], t, product_form=True) == pytest.approx(4 * psi_lower_bound(psi, [0.0, 0.0], t))


def test_drift_power_value():
    h = Hamiltonian(kind="drift-power", drift=(1.0, 0.0), rho=2.0, drift_exponent=1.0, sigma=1.5)
    xi = np.array([3.0, 4.0])
    assert ham_eval(h, [0.0, 0.0], xi) == pytest.approx(3.0 * 5.0 + 2.0 * 5.0 ** 1.5)
    assert ham_eval(h, [0.0, 0.0], [0.0, 0.0]) == 0.0


def test_growth_check_flags_bad_envelope():
    h = Hamiltonian(kind="two-power", coef_a=1.0, coef_b=1.0, theta=1.0, sigma=2.0, growth_sigma=1.0,
                    growth_rho=1.0)
    rep = ham_growth_check(h, XS, np.array([[2.0, 0.0], [0.1, 0.0]]))
    assert not rep.ok
    # the default envelope 2 |xi|**2 covers t + t**2 only for |xi| >= 1
    default = Hamiltonian(kind="two-power", coef_a=1.0, coef_b=1.0, theta=1.0, sigma=2.0)
    assert not ham_growth_check(default, XS, np.array([[0.1, 0.0]])).ok
    assert ham_growth_check(default, XS, np.array([[1.0, 0.0], [2.0, 0.0]])).ok


def test_window_errors():
    assert Hamiltonian(sigma=2.0, c1=1.5).window_errors()
    assert not Hamiltonian(sigma=1.0, c0=0.0, c1=1.5).window_errors()


def test_continuity_check():
    h = Hamiltonian(kind="drift-power", drift=lambda x: x, drift_exponent=0.0, rho=0.0,
                    omega=lambda d: d, h0=lambda t: t)
    rep = ham_continuity_check(h, XS, XS + 0.1, np.array([[1.0, 1.0]]))
    assert rep.ok
