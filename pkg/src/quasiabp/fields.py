"""Degeneracy laws Psi(x, t) and Hamiltonians H(x, xi).

Coefficient data (exponents, modulating coefficients, drift fields) may be
constants or vectorized callables ``f(x)`` where ``x`` has shape ``(..., n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence, Union

import numpy as np

ScalarField = Union[float, Callable[[np.ndarray], np.ndarray]]
VectorField = Union[Sequence[float], np.ndarray, Callable[[np.ndarray], np.ndarray]]

PSI_KINDS = (
    "constant-power",
    "double-phase",
    "log-double-phase",
    "variable-power",
    "variable-double-phase",
    "log-variable-double-phase",
    "custom-callable",
)
HAMILTONIAN_KINDS = ("zero", "drift-power", "two-power", "custom-callable")

DEFAULT_T_LATTICE = np.logspace(-3.0, 3.0, 32)


class CoefficientDomainError(ValueError):
    """A coefficient field was evaluated outside its declared domain."""


def evaluate_scalar(value: ScalarField, x: np.ndarray) -> np.ndarray:
    """Evaluate a constant or callable scalar field at points ``x`` of shape (..., n)."""
    x = np.asarray(x, dtype=float)
    if callable(value):
        out = np.asarray(value(x), dtype=float)
        return np.broadcast_to(out, x.shape[:-1]).astype(float, copy=False)
    return np.full(x.shape[:-1], float(value))


def evaluate_vector(value: VectorField, x: np.ndarray) -> np.ndarray:
    """Evaluate a constant or callable vector field; result has the shape of ``x``."""
    x = np.asarray(x, dtype=float)
    if callable(value):
        out = np.asarray(value(x), dtype=float)
    else:
        out = np.asarray(value, dtype=float)
    return np.broadcast_to(out, x.shape).astype(float, copy=False)


def _field_range(value: ScalarField, samples: Optional[np.ndarray], name: str) -> tuple[float, float]:
    if not callable(value):
        return float(value), float(value)
    if samples is None:
        raise ValueError(f"{name} is x-dependent: pass sample points to derive its range")
    vals = evaluate_scalar(value, samples)
    return float(vals.min()), float(vals.max())


@dataclass(frozen=True)
class PsiField:
    """A degeneracy law with its declared structural constants.

    Parameters
    ----------
    kind : str
        One of :data:`PSI_KINDS`.
    p_hat, q_hat : float or callable
        Exponent data. ``q_hat`` is used by the double-phase families.
    coef : float or callable
        Modulating coefficient (nonnegative) of the second phase.
    i_psi, s_psi, l1, l2, a_lower, b_upper : float
        Declared constants: pinning exponents, almost-monotonicity constants
        and the bounds on ``Psi(x, 1)``.
    func : callable, optional
        ``func(x, t)`` for ``custom-callable`` kinds.
    bounds : (lower, upper), optional
        Box outside which coefficient evaluation is refused.
    """

    kind: str
    i_psi: float
    s_psi: float
    l1: float = 1.0
    l2: float = 1.0
    a_lower: float = 1.0
    b_upper: float = 1.0
    p_hat: ScalarField = 0.0
    q_hat: Optional[ScalarField] = None
    coef: ScalarField = 0.0
    func: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    bounds: Optional[tuple] = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in PSI_KINDS:
            raise ValueError(f"unknown Psi kind {self.kind!r}; expected one of {PSI_KINDS}")
        if self.kind == "custom-callable" and self.func is None:
            raise ValueError("custom-callable Psi requires func(x, t)")
        if self.kind in ("double-phase", "variable-double-phase") and self.q_hat is None:
            raise ValueError(f"{self.kind} requires q_hat")

    @property
    def is_pure_power(self) -> bool:
        return self.kind in ("constant-power", "variable-power")

    def constant_errors(self) -> list[str]:
        """Violations of the declared-constant constraints (empty when consistent)."""
        errs = []
        if not self.i_psi > -1:
            errs.append(f"i_psi={self.i_psi} must exceed -1")
        if not self.s_psi >= self.i_psi:
            errs.append(f"s_psi={self.s_psi} must be >= i_psi={self.i_psi}")
        if not (self.l1 >= 1 and self.l2 >= 1):
            errs.append(f"L1={self.l1}, L2={self.l2} must be >= 1")
        if not (0 < self.a_lower <= self.b_upper):
            errs.append(f"need 0 < a={self.a_lower} <= b={self.b_upper}")
        return errs


def psi_family(kind: str, *, p_hat: ScalarField = 0.0, q_hat: Optional[ScalarField] = None,
               coef: ScalarField = 0.0, samples: Optional[np.ndarray] = None,
               bounds=None, label: str = "") -> PsiField:
    """Build a built-in family with constants read off its closed form.

    For x-dependent exponents or coefficients the infimum and supremum are
    taken over ``samples`` (points of shape (m, n)).
    """
    p_lo, p_hi = _field_range(p_hat, samples, "p_hat")
    c_lo, c_hi = _field_range(coef, samples, "coef")
    if c_lo < 0:
        raise ValueError("modulating coefficient must be nonnegative")
    log2 = float(np.log(2.0))
    if kind in ("constant-power", "variable-power"):
        if kind == "constant-power" and callable(p_hat):
            raise ValueError("constant-power takes a constant exponent")
        i, s, a, b = p_lo, p_hi, 1.0, 1.0
    elif kind in ("double-phase", "variable-double-phase"):
        if q_hat is None:
            raise ValueError(f"{kind} requires q_hat")
        q_lo, q_hi = _field_range(q_hat, samples, "q_hat")
        if kind == "double-phase":
            if callable(p_hat) or callable(q_hat):
                raise ValueError("double-phase takes constant exponents")
            if q_lo < p_lo:
                raise ValueError("double-phase requires q_hat >= p_hat")
            i, s = p_lo, q_hi
        else:
            pq = evaluate_scalar(p_hat, samples) if samples is not None else np.array(p_lo)
            qq = evaluate_scalar(q_hat, samples) if samples is not None else np.array(q_lo)
            i = float(np.minimum(pq, qq).min())
            s = float(np.maximum(pq, qq).max())
        a, b = 1.0 + c_lo, 1.0 + c_hi
    elif kind in ("log-double-phase", "log-variable-double-phase"):
        if kind == "log-double-phase" and callable(p_hat):
            raise ValueError("log-double-phase takes a constant exponent")
        i, s = p_lo, p_hi + 1.0
        a, b = 1.0 + c_lo * log2, 1.0 + c_hi * log2
    else:
        raise ValueError(f"psi_family does not build {kind!r}; construct PsiField directly")
    return PsiField(kind=kind, i_psi=i, s_psi=s, l1=1.0, l2=1.0, a_lower=a, b_upper=b,
                    p_hat=p_hat, q_hat=q_hat, coef=coef, bounds=bounds, label=label)


def _check_bounds(field: PsiField | "Hamiltonian", x: np.ndarray) -> None:
    if field.bounds is None:
        return
    lo, hi = (np.asarray(v, dtype=float) for v in field.bounds)
    if np.any(x < lo) or np.any(x > hi):
        raise CoefficientDomainError("point outside the coefficient domain")


def psi_eval(field: PsiField, x, t) -> np.ndarray:
    """Evaluate Psi(x, t).

    ``x`` has shape (..., n) and ``t`` broadcasts against ``x.shape[:-1]``.
    Returns a float for scalar input.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("Psi is evaluated at t >= 0 only")
    _check_bounds(field, x)
    shape = np.broadcast_shapes(x.shape[:-1], t.shape)
    t = np.broadcast_to(t, shape)
    kind = field.kind
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == "custom-callable":
            out = np.asarray(field.func(x, t), dtype=float)
        else:
            p = evaluate_scalar(field.p_hat, x)
            base = t ** p
            if kind in ("double-phase", "variable-double-phase"):
                out = base + evaluate_scalar(field.coef, x) * t ** evaluate_scalar(field.q_hat, x)
            elif kind in ("log-double-phase", "log-variable-double-phase"):
                out = base + evaluate_scalar(field.coef, x) * base * np.log1p(t)
            else:
                out = base
    out = np.broadcast_to(out, shape)
    if not np.all(np.isfinite(out)):
        raise ValueError("Psi is singular at t = 0 for this field; evaluate at t > 0")
    return out[()] if out.ndim == 0 else out


def psi_lower_bound(field: PsiField, x, t, product_form: bool = False) -> np.ndarray:
    """Power-type lower bound for Psi implied by the structural constants.

    ``(a / L2) t**s_psi`` for ``t <= 1`` and ``(a / L1) t**i_psi`` for ``t > 1``.
    With ``product_form=True`` the small-t factor is ``L2 * a`` instead, which is
    not implied by the structural inequalities unless ``L2 = 1``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("lower bound requires t > 0")
    small = field.l2 * field.a_lower if product_form else field.a_lower / field.l2
    out = np.where(t <= 1.0, small * t ** field.s_psi, field.a_lower / field.l1 * t ** field.i_psi)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class Violation:
    """One sampled witness against a declared inequality."""

    inequality: str
    x: tuple
    s: float
    t: float
    lhs: float
    rhs: float

    @property
    def excess(self) -> float:
        return self.lhs - self.rhs


@dataclass
class ValidationReport:
    violations: list = dc_field(default_factory=list)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_structural(field: PsiField, sample_xs, sample_ts=DEFAULT_T_LATTICE,
                        rtol: float = 1e-12) -> ValidationReport:
    """Check the declared constants of ``field`` on a finite sample.

    For each sampled x the worst pair ``s < t`` of each almost-monotonicity
    inequality is reported, together with the bounds on ``Psi(x, 1)``.
    """
    xs = np.atleast_2d(np.asarray(sample_xs, dtype=float))
    ts = np.asarray(sample_ts, dtype=float)
    if xs.size == 0 or ts.size == 0:
        raise ValueError("samples must be nonempty")
    if np.any(np.diff(ts) <= 0) or ts[0] <= 0:
        raise ValueError("sample_ts must be positive and strictly increasing")
    report = ValidationReport()
    for msg in field.constant_errors():
        report.violations.append(Violation("declared-constants: " + msg, (), np.nan, np.nan, np.nan, np.nan))
    vals = psi_eval(field, xs[:, None, :], ts[None, :])        # (m, k)
    at_one = psi_eval(field, xs, np.ones(len(xs)))
    upper = np.triu(np.ones((len(ts), len(ts)), dtype=bool), 1)  # s index < t index
    for k, x in enumerate(xs):
        xt = tuple(float(c) for c in x)
        if at_one[k] < field.a_lower * (1 - rtol):
            report.violations.append(Violation("Psi(x,1) >= a", xt, 1.0, 1.0, field.a_lower, float(at_one[k])))
        if at_one[k] > field.b_upper * (1 + rtol):
            report.violations.append(Violation("Psi(x,1) <= b", xt, 1.0, 1.0, float(at_one[k]), field.b_upper))
        low = vals[k] / ts ** field.i_psi
        high = vals[k] / ts ** field.s_psi
        # rows: s, cols: t
        lhs_inc = np.broadcast_to(low[:, None], upper.shape)
        rhs_inc = field.l1 * low[None, :]
        lhs_dec = np.broadcast_to(high[None, :], upper.shape)
        rhs_dec = field.l2 * high[:, None]
        for name, lhs, rhs in (("almost non-decreasing Psi/t^i", lhs_inc, rhs_inc),
                               ("almost non-increasing Psi/t^s", lhs_dec, rhs_dec)):
            excess = np.where(upper, lhs - rhs * (1 + rtol), -np.inf)
            j = np.unravel_index(np.argmax(excess), excess.shape)
            if excess[j] > 0:
                report.violations.append(Violation(name, xt, float(ts[j[0]]), float(ts[j[1]]),
                                                   float(lhs[j]), float(rhs[j])))
        report.checked += int(upper.sum()) * 2 + 2
    return report


@dataclass(frozen=True)
class Hamiltonian:
    """First-order term H(x, xi) with its growth envelope.

    Built-in kinds::

        zero          H = 0
        drift-power   H = <B(x), xi> |xi|**drift_exponent + rho(x) |xi|**sigma
        two-power     H = coef_a(x) |xi|**theta + coef_b(x) |xi|**sigma

    The envelope ``|H(x, xi)| <= growth_rho(x) |xi|**growth_sigma`` is what the
    estimates consume. It defaults to ``sigma`` with coefficient
    ``|B| + rho`` (drift-power) or ``|coef_a| + |coef_b|`` (two-power); it is
    a declaration, checked on samples by :func:`ham_growth_check`.
    """

    kind: str = "zero"
    drift: VectorField = (0.0, 0.0)
    rho: ScalarField = 0.0
    coef_a: ScalarField = 0.0
    coef_b: ScalarField = 0.0
    sigma: float = 1.0
    theta: float = 1.0
    drift_exponent: float = 0.0
    growth_rho: Optional[ScalarField] = None
    growth_sigma: Optional[float] = None
    c0: Optional[float] = None
    c1: Optional[float] = None
    omega: Optional[Callable[[np.ndarray], np.ndarray]] = None
    h0: Optional[Callable[[np.ndarray], np.ndarray]] = None
    func: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    bounds: Optional[tuple] = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in HAMILTONIAN_KINDS:
            raise ValueError(f"unknown Hamiltonian kind {self.kind!r}; expected one of {HAMILTONIAN_KINDS}")
        if self.kind == "custom-callable" and (self.func is None or self.growth_rho is None):
            raise ValueError("custom-callable Hamiltonian requires func and growth_rho")

    @property
    def envelope_sigma(self) -> float:
        return float(self.sigma if self.growth_sigma is None else self.growth_sigma)

    def envelope_rho(self, x) -> np.ndarray:
        """Coefficient of the growth envelope at points ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.growth_rho is not None:
            return evaluate_scalar(self.growth_rho, x)
        if self.kind == "zero":
            return np.zeros(x.shape[:-1])
        if self.kind == "drift-power":
            b = np.linalg.norm(evaluate_vector(self.drift, x), axis=-1)
            return b + np.abs(evaluate_scalar(self.rho, x))
        return np.abs(evaluate_scalar(self.coef_a, x)) + np.abs(evaluate_scalar(self.coef_b, x))

    def window_errors(self) -> list[str]:
        """Check the declared window ``0 <= c0 < sigma < c1``."""
        errs = []
        sig = self.envelope_sigma
        if self.c0 is not None and not (0 <= self.c0 < sig):
            errs.append(f"growth exponent sigma={sig} must exceed c0={self.c0} >= 0")
        if self.c1 is not None and not sig < self.c1:
            errs.append(f"growth exponent sigma={sig} must be below c1={self.c1}")
        return errs


def ham_eval(h: Hamiltonian, x, xi) -> np.ndarray:
    """Evaluate H(x, xi); ``x`` and ``xi`` have shape (..., n)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    _check_bounds(h, x)
    shape = np.broadcast_shapes(x.shape, xi.shape)[:-1]
    if h.kind == "zero":
        out = np.zeros(shape)
    elif h.kind == "custom-callable":
        out = np.broadcast_to(np.asarray(h.func(x, xi), dtype=float), shape)
    else:
        mag = np.linalg.norm(xi, axis=-1)
        zero = mag == 0
        safe = np.where(zero, 1.0, mag)
        if h.kind == "drift-power":
            inner = np.sum(evaluate_vector(h.drift, x) * xi, axis=-1)
            out = inner * safe ** h.drift_exponent + evaluate_scalar(h.rho, x) * safe ** h.sigma
        else:
            out = (evaluate_scalar(h.coef_a, x) * safe ** h.theta
                   + evaluate_scalar(h.coef_b, x) * safe ** h.sigma)
        out = np.where(zero, 0.0, out)
    out = np.asarray(out, dtype=float)
    return out[()] if out.ndim == 0 else out


def ham_growth_check(h: Hamiltonian, xs, xis, rtol: float = 1e-12) -> ValidationReport:
    """List sampled pairs violating ``|H(x, xi)| <= growth_rho(x) |xi|**growth_sigma``.

    ``xs`` has shape (m, n) and ``xis`` shape (k, n); every combination is tested.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    vals = np.abs(ham_eval(h, xs[:, None, :], xis[None, :, :]))
    mags = np.linalg.norm(xis, axis=-1)
    bound = h.envelope_rho(xs)[:, None] * mags[None, :] ** h.envelope_sigma
    report = ValidationReport(checked=vals.size)
    bad = vals > bound * (1 + rtol) + 1e-300
    for i, j in zip(*np.nonzero(bad)):
        report.violations.append(Violation("|H| <= rho |xi|^sigma", tuple(float(c) for c in xs[i]),
                                           float(mags[j]), float(mags[j]), float(vals[i, j]), float(bound[i, j])))
    return report


def ham_continuity_check(h: Hamiltonian, xs, ys, xis, rtol: float = 1e-12) -> ValidationReport:
    """Check ``|H(x,xi) - H(y,xi)| <= omega(|x-y|)(1 + H0(|xi|))`` on sampled pairs."""
    if h.omega is None or h.h0 is None:
        raise ValueError("continuity data (omega, h0) not declared")
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    diff = np.abs(ham_eval(h, xs[:, None, :], xis[None]) - ham_eval(h, ys[:, None, :], xis[None]))
    dist = np.linalg.norm(xs - ys, axis=-1)
    bound = np.asarray(h.omega(dist))[:, None] * (1 + np.asarray(h.h0(np.linalg.norm(xis, axis=-1))))[None, :]
    report = ValidationReport(checked=diff.size)
    for i, j in zip(*np.nonzero(diff > bound * (1 + rtol))):
        report.violations.append(Violation("continuity in x", tuple(float(c) for c in xs[i]),
                                           float(dist[i]), float(np.linalg.norm(xis[j])),
                                           float(diff[i, j]), float(bound[i, j])))
    return report
