"""Harnesses for the qualitative properties: comparison, maximum principles, Liouville bounds, non-uniqueness.

The barrier checks use the operator in the form

    L[u] = Psi(x, |Du|) D(u) + H(x, Du) + c(x) u**(1 + sigma)

with ``D`` the diffusion of the problem. Note the sign: a solver solution of
``-Psi D(u) + H = f`` with ``H = 0`` satisfies ``Psi D(u) = -f``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .fields import Hamiltonian, evaluate_scalar, evaluate_vector, ham_eval, psi_eval, psi_family
from .grid import Grid, GridFunction
from .operators import OperatorConfig, equation_parts
from .reporting import csv_text, to_json


class HypothesisError(ValueError):
    """A declared hypothesis fails on a sample; ``witness`` holds the offending point and value."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


# ---------------------------------------------------------------------------
# radial evaluation


def radial_diffusion(cfg: OperatorConfig, ndim: int, radius, d1, d2, p_values=None) -> np.ndarray:
    """Diffusion of a radial profile from its exact derivatives ``d1 = u'(r)``, ``d2 = u''(r)``."""
    radius = np.asarray(radius, dtype=float)
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    if cfg.diffusion == "infinity":
        return d2 + 0.0 * radius
    if cfg.diffusion == "h-homogeneous":
        return np.abs(d1) ** (2.0 - cfg.homogeneity) * d2
    p = cfg.p if p_values is None else np.asarray(p_values, dtype=float)
    total = d2 + (ndim - 1) * d1 / radius + (p - 2.0) * d2
    return total / p if cfg.convention == "mean" else total


def _radial_points(center, radii, angles) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Points ``center + r (cos a, sin a)`` for every radius and angle, flattened."""
    center = np.asarray(center, dtype=float)
    rr, aa = np.meshgrid(np.asarray(radii, float), np.asarray(angles, float), indexing="ij")
    dirs = np.stack([np.cos(aa), np.sin(aa)], axis=-1)
    pts = center + rr[..., None] * dirs
    return pts.reshape(-1, 2), rr.ravel(), dirs.reshape(-1, 2)


def _p_at(cfg: OperatorConfig, pts: np.ndarray):
    return cfg.p_values(pts) if cfg.diffusion == "variable-p" else None


def _psi_at(psi, pts, mag):
    if psi.kind == "constant-power" and not callable(psi.p_hat) and psi.p_hat == 0:
        return np.ones(mag.shape)
    return psi_eval(psi, pts, mag)


# ---------------------------------------------------------------------------
# comparison


def _identity(t):
    return np.asarray(t, dtype=float)


def _cube(t):
    return np.asarray(t, dtype=float) ** 3


def signed_power(exponent: float) -> Callable:
    """``t -> sign(t) |t|**exponent``."""
    if not exponent > 0:
        raise ValueError("exponent must be positive")

    def func(t):
        t = np.asarray(t, dtype=float)
        return np.sign(t) * np.abs(t) ** exponent
    return func


ZERO_ORDER_LAWS = {"identity": _identity, "cube": _cube}


def zero_order_law(name: str, sigma: Optional[float] = None) -> Callable:
    """Built-in increasing laws vanishing at zero: ``identity``, ``cube``, ``signed-power``."""
    if name == "signed-power":
        if sigma is None:
            raise ValueError("signed-power needs sigma")
        return signed_power(1.0 + sigma)
    if name not in ZERO_ORDER_LAWS:
        raise ValueError(f"unknown zero-order law {name!r}")
    return ZERO_ORDER_LAWS[name]


@dataclass
class ComparisonScenario:
    """A sub/supersolution pair for ``G(u) + c F(u)`` with ``G = Psi D + H``.

    ``lower`` should satisfy ``G + c F >= f_sub`` and ``upper`` should satisfy
    ``G + c F <= f_super``. ``hypothesis`` is ``a`` (``c < 0``,
    ``f_sub >= f_super``) or ``b`` (``c <= 0``, ``f_sub > f_super``).
    """

    spec: object
    lower: GridFunction
    upper: GridFunction
    f_sub: object = 0.0
    f_super: object = 0.0
    zero_order: object = 0.0
    law: Callable = _identity
    hypothesis: str = "b"
    label: str = ""

    def __post_init__(self):
        if self.hypothesis not in ("a", "b"):
            raise ValueError("hypothesis tag must be 'a' or 'b'")
        if isinstance(self.law, str):
            self.law = zero_order_law(self.law)

    def swapped(self) -> "ComparisonScenario":
        """Same data with the two functions exchanged."""
        return replace(self, lower=self.upper, upper=self.lower, label=f"{self.label} (swapped)".strip())


@dataclass
class ComparisonReport:
    passed: bool
    gap: float
    interior_max: float
    boundary_max: float
    witness: Optional[tuple]
    sub_residual: float
    super_residual: float
    preconditions_ok: bool
    tol: float
    hypothesis: str
    label: str = ""

    def to_dict(self) -> dict:
        return {"label": self.label, "verdict": "pass" if self.passed else "fail", "gap": self.gap,
                "interior_max_difference": self.interior_max, "boundary_max_difference": self.boundary_max,
                "witness": list(self.witness) if self.witness is not None else None,
                "sub_residual": self.sub_residual, "super_residual": self.super_residual,
                "preconditions_ok": self.preconditions_ok, "tol": self.tol, "hypothesis": self.hypothesis}


def _values_on(data, grid: Grid) -> np.ndarray:
    if isinstance(data, GridFunction):
        return data.values
    return np.broadcast_to(evaluate_scalar(data, grid.points) if callable(data) else
                           np.asarray(data, dtype=float), grid.shape)


def _check_hypothesis(sc: ComparisonScenario, grid: Grid) -> None:
    mask = grid.closure
    pts = grid.points[mask]
    c = _values_on(sc.zero_order, grid)[mask]
    f1 = _values_on(sc.f_sub, grid)[mask]
    f2 = _values_on(sc.f_super, grid)[mask]
    strict_c = sc.hypothesis == "a"
    bad_c = c >= 0 if strict_c else c > 0
    if np.any(bad_c):
        k = int(np.argmax(bad_c))
        need = "c < 0" if strict_c else "c <= 0"
        raise HypothesisError(f"hypothesis {sc.hypothesis}: {need} fails at {tuple(pts[k])} (c = {c[k]:g})",
                              (tuple(float(v) for v in pts[k]), float(c[k])))
    bad_f = f1 < f2 if strict_c else f1 <= f2
    if np.any(bad_f):
        k = int(np.argmax(bad_f))
        need = "f_sub >= f_super" if strict_c else "f_sub > f_super"
        raise HypothesisError(f"hypothesis {sc.hypothesis}: {need} fails at {tuple(pts[k])} "
                              f"({f1[k]:g} vs {f2[k]:g})", (tuple(float(v) for v in pts[k]), float(f1[k] - f2[k])))


def full_operator(ps, values: np.ndarray, mask: np.ndarray, zero_order=0.0, law: Callable = _identity):
    """``Psi D(u) + H(x, Du) + c F(u)`` at the ``mask`` nodes (flat, mask order)."""
    psi, diff, ham, _, _ = equation_parts(ps, values, mask)
    c = _values_on(zero_order, ps.grid)[mask]
    return psi * diff + ham + c * law(values[mask])


def comparison_check(sc: ComparisonScenario, tol: float = 1e-6) -> ComparisonReport:
    """Check ``lower <= upper`` in the domain given the boundary ordering.

    Passes iff ``max_interior(lower - upper) <= max(0, max_boundary(lower - upper)) + tol``.
    The residual inequalities of the pair are reported as preconditions.
    """
    ps = sc.spec
    grid = ps.grid
    _check_hypothesis(sc, grid)
    diff = sc.lower.values - sc.upper.values
    bnd = grid.boundary
    if np.any(diff[bnd] > tol):
        k = np.argmax(np.where(bnd, diff, -np.inf))
        node = np.unravel_index(k, grid.shape)
        raise HypothesisError(f"boundary ordering fails at {tuple(grid.points[node])}: "
                              f"lower - upper = {diff[node]:g}", (tuple(int(i) for i in node), float(diff[node])))
    inner = grid.interior
    sub = full_operator(ps, sc.lower.values, inner, sc.zero_order, sc.law) - _values_on(sc.f_sub, grid)[inner]
    sup = full_operator(ps, sc.upper.values, inner, sc.zero_order, sc.law) - _values_on(sc.f_super, grid)[inner]
    sub_res = float(max(0.0, -sub.min()))
    super_res = float(max(0.0, sup.max()))
    in_max = float(diff[inner].max())
    b_max = float(diff[bnd].max())
    gap = in_max - max(0.0, b_max)
    k = np.argmax(np.where(inner, diff, -np.inf))
    witness = tuple(int(i) for i in np.unravel_index(k, grid.shape))
    return ComparisonReport(bool(gap <= tol), float(gap), in_max, b_max, witness, sub_res, super_res,
                            bool(sub_res <= tol and super_res <= tol), float(tol), sc.hypothesis, sc.label)


def disc_comparison_pair(grid_n: int = 41, solve_tol: float = 1e-8):
    """Infinity-diffusion pair on the unit disc: solutions for ``f = 1`` and ``f = 2``, ``g = 0``.

    In the form ``G = Psi D + H`` these have data ``-1`` and ``-2``, so the
    comparison orientation puts the ``f = 1`` solution below (``f_sub = -1 > f_super = -2``).
    """
    from .solver import ProblemSpec, SolveParams, solve_dirichlet

    grid = Grid.ball((0.0, 0.0), 1.0, grid_n)
    base = ProblemSpec(grid, psi_family("constant-power", p_hat=0.0), Hamiltonian(),
                       OperatorConfig(diffusion="infinity"), f=1.0, g=0.0, label="f=1")
    params = SolveParams(tol=solve_tol, max_iter=400_000)
    one = solve_dirichlet(base, params)
    two = solve_dirichlet(base.with_data(f=2.0, label="f=2"), params)
    return ComparisonScenario(base, one.u, two.u, f_sub=-1.0, f_super=-2.0, hypothesis="b",
                              label="disc infinity pair")


# ---------------------------------------------------------------------------
# strong maximum principle and Hopf bound


@dataclass
class BarrierSpec:
    """Parameters of an explicit barrier.

    ``smp-exponential``: ``exp(-alpha |x - x0|**2) - exp(-alpha r**2)`` on the
    annulus ``r/2 <= |x - x0| <= r``. ``liouville-power``: ``|x|**alpha`` with
    ``-1 < alpha < 0`` outside the ball of radius ``core_radius``.
    """

    kind: str
    alpha: float
    radius: float = 1.0
    center: tuple = (0.0, 0.0)
    zero_order: object = 0.0
    sigma: Optional[float] = None
    core_radius: float = 1.0
    outer_radius: float = 10.0
    drift: object = None
    samples: int = 200
    angles: int = 8

    def __post_init__(self):
        if self.kind not in ("smp-exponential", "liouville-power"):
            raise ValueError(f"unknown barrier kind {self.kind!r}")
        if self.kind == "smp-exponential" and not (self.alpha > 0 and self.radius > 0):
            raise ValueError("smp barrier needs alpha > 0 and r > 0")
        if self.kind == "liouville-power":
            if not -1 < self.alpha < 0:
                raise ValueError("liouville barrier needs -1 < alpha < 0")
            if not 0 < self.core_radius < self.outer_radius:
                raise ValueError("need 0 < core_radius < outer_radius")

    @property
    def theta(self) -> float:
        """Normalization ``1 / max over the core boundary of |x|**alpha``."""
        return float(self.core_radius ** -self.alpha)


def smp_bracket(alpha: float, r: float, n: int, p: float, rho_sup: float = 0.0, c_sup: float = 0.0,
                sigma: float = 1.0, psi_factor: float = 1.0) -> float:
    """Lower bound of the bracket in the barrier inequality over the annulus ``r/2 <= s <= r``.

    ``psi_factor * (alpha (p-1) r - 2 (n+p-2) / r) - rho_sup - c_sup / r * (1 - exp(-3 alpha r**2 / 4))**(1+sigma)``.
    """
    shrink = (1.0 - np.exp(-0.75 * alpha * r * r)) ** (1.0 + sigma)
    return float(psi_factor * (alpha * (p - 1.0) * r - 2.0 * (n + p - 2.0) / r) - rho_sup - c_sup / r * shrink)


def barrier_max_slope(alpha: float, r: float) -> float:
    """``max |Du|`` of the exponential barrier over the annulus."""
    s = np.clip(1.0 / np.sqrt(2.0 * alpha), r / 2.0, r)
    return float(2.0 * alpha * s * np.exp(-alpha * s * s))


def smp_alpha_select(r: float, n: int, p: float, rho_sup: float = 0.0, c_sup: float = 0.0, sigma: float = 1.0,
                     psi_factor: float = 1.0, margin: float = 1e-12, unit_slope: bool = False,
                     alpha_cap: float = 2.0 ** 40) -> float:
    """Smallest ``alpha = 2**k > 1`` whose bracket exceeds ``margin``.

    With ``unit_slope`` the barrier slope must also stay below 1 on the annulus,
    the regime where Psi is bounded below by ``t**s_psi``.
    """
    if not p > 1:
        raise ValueError("need p > 1")
    if not r > 0:
        raise ValueError("need r > 0")
    alpha = 2.0
    while alpha <= alpha_cap:
        ok = smp_bracket(alpha, r, n, p, rho_sup, c_sup, sigma, psi_factor) > margin
        if ok and (not unit_slope or barrier_max_slope(alpha, r) < 1.0):
            return alpha
        alpha *= 2.0
    raise ValueError(f"no admissible alpha up to {alpha_cap:g} (r={r:g}, n={n}, p={p:g})")


def smp_profile(alpha: float, r: float, s):
    """Barrier value and its first two radial derivatives at radii ``s``."""
    s = np.asarray(s, dtype=float)
    e = np.exp(-alpha * s * s)
    return e - np.exp(-alpha * r * r), -2.0 * alpha * s * e, (4.0 * alpha ** 2 * s * s - 2.0 * alpha) * e


@dataclass
class BarrierReport:
    kind: str
    alpha: float
    passed: bool
    min_value: float
    witness: Optional[tuple]
    radii: np.ndarray
    values: np.ndarray
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "verdict": "pass" if self.passed else "fail",
                "min_value": self.min_value,
                "witness": list(self.witness) if self.witness is not None else None, **self.extra}

    def table_csv(self) -> str:
        return csv_text(["radius", "value"], zip(self.radii.tolist(), self.values.tolist()))


def _sample_sup(value, pts) -> float:
    return float(np.max(np.abs(_values_on_points(value, pts))))


def _values_on_points(value, pts) -> np.ndarray:
    if callable(value):
        return np.broadcast_to(np.asarray(evaluate_scalar(value, pts), dtype=float), pts.shape[:-1])
    return np.broadcast_to(np.asarray(value, dtype=float), pts.shape[:-1])


def smp_barrier_residual_check(ps, bar: BarrierSpec) -> BarrierReport:
    """Evaluate ``L`` on the exponential barrier with exact radial derivatives at annulus samples.

    Passes iff ``L > 0`` at every sample. Samples cover ``bar.samples`` radii
    in ``[r/2, r]`` times ``bar.angles`` directions. When the problem grid
    covers the annulus, the largest deviation of the grid stencil from the
    exact value is reported as ``stencil_deviation`` (an O(h) quantity).
    """
    if bar.kind != "smp-exponential":
        raise ValueError("expected an smp-exponential barrier")
    cfg = ps.operator
    r, alpha = bar.radius, bar.alpha
    sigma = ps.hamiltonian.envelope_sigma if bar.sigma is None else bar.sigma
    _smp_window(ps, bar, sigma)
    radii = np.linspace(r / 2.0, r, bar.samples)
    angles = 2.0 * np.pi * np.arange(bar.angles) / bar.angles
    pts, s, dirs = _radial_points(bar.center, radii, angles)
    u, d1, d2 = smp_profile(alpha, r, s)
    value = _barrier_operator(ps, pts, s, dirs, u, d1, d2, bar.zero_order, sigma)
    per_radius = value.reshape(len(radii), len(angles)).min(axis=1)
    k = int(np.argmin(value))
    extra = {"radius": r, "center": list(bar.center), "samples": int(value.size),
             "convention": cfg.convention, "diffusion": cfg.diffusion}
    extra["stencil_deviation"] = _smp_stencil_deviation(ps, bar, sigma)
    return BarrierReport(bar.kind, alpha, bool(np.all(value > 0)), float(value.min()),
                         (float(s[k]), float(np.arctan2(dirs[k, 1], dirs[k, 0]))), radii, per_radius, extra)


def _smp_window(ps, bar: BarrierSpec, sigma: float) -> None:
    """Refuse ``sigma`` outside ``(s_psi, 1 + s_psi)`` whenever it enters the operator."""
    acts = ps.hamiltonian.kind != "zero" or callable(bar.zero_order) or bar.zero_order != 0
    low = float(ps.psi.s_psi)
    if acts and not low < sigma < 1.0 + low:
        raise HypothesisError(f"sigma = {sigma:g} lies outside the window ({low:g}, {1.0 + low:g})", (sigma, low))


def _barrier_operator(ps, pts, s, dirs, u, d1, d2, zero_order, sigma) -> np.ndarray:
    cfg = ps.operator
    diff = radial_diffusion(cfg, 2, s, d1, d2, _p_at(cfg, pts))
    mag = np.abs(d1)
    psi = _psi_at(ps.psi, pts, mag)
    ham = ham_eval(ps.hamiltonian, pts, d1[:, None] * dirs)
    c = _values_on_points(zero_order, pts)
    return psi * diff + ham + c * np.maximum(u, 0.0) ** (1.0 + sigma)


def _smp_stencil_deviation(ps, bar: BarrierSpec, sigma: float) -> Optional[float]:
    grid = ps.grid
    if grid.ndim != 2:
        return None
    dist = np.linalg.norm(grid.points - np.asarray(bar.center), axis=-1)
    ring = grid.interior & (dist >= bar.radius / 2) & (dist <= bar.radius) & (dist > 0)
    if not ring.any():
        return None
    vals, _, _ = smp_profile(bar.alpha, bar.radius, dist)
    discrete = full_operator(ps, vals, ring, 0.0)
    c = _values_on_points(bar.zero_order, grid.points[ring])
    discrete = discrete + c * np.maximum(vals[ring], 0.0) ** (1.0 + sigma)
    pts = grid.points[ring]
    s = dist[ring]
    dirs = (pts - np.asarray(bar.center)) / s[:, None]
    _, d1, d2 = smp_profile(bar.alpha, bar.radius, s)
    exact = _barrier_operator(ps, pts, s, dirs, vals[ring], d1, d2, bar.zero_order, sigma)
    return float(np.max(np.abs(discrete - exact)))


@dataclass
class HopfReport:
    constant: float
    witness: Optional[tuple]
    nodes: int
    center: tuple
    radius: float

    @property
    def certified(self) -> bool:
        return self.constant > 0


def hopf_fit(v: GridFunction, center, radius: float) -> HopfReport:
    """Largest ``d >= 0`` with ``v(x) >= d (r - |x - x0|)`` at every node of the open ball.

    A negative value of ``v`` in the ball gives ``d = 0``.
    """
    grid = v.grid
    center = np.asarray(center, dtype=float)
    if not radius > 0:
        raise ValueError("radius must be positive")
    lo = np.asarray(grid.lower)
    hi = lo + grid.spacing * (np.asarray(grid.shape) - 1)
    if np.any(center - radius < lo - 1e-12) or np.any(center + radius > hi + 1e-12):
        raise ValueError("ball is not inside the grid")
    dist = np.linalg.norm(grid.points - center, axis=-1)
    ball = dist < radius * (1 - 1e-12)
    if np.any(ball & ~grid.closure):
        raise ValueError("ball is not inside the closed domain")
    if not ball.any():
        raise ValueError("ball contains no nodes")
    ratio = v.values[ball] / (radius - dist[ball])
    k = int(np.argmin(ratio))
    node = tuple(int(i[k]) for i in np.nonzero(ball))
    return HopfReport(float(max(ratio[k], 0.0)), node, int(ball.sum()), tuple(float(c) for c in center),
                      float(radius))


# ---------------------------------------------------------------------------
# Liouville


def _drift_field(bar: BarrierSpec, ps):
    if bar.drift is not None:
        return bar.drift
    ham = ps.hamiltonian
    return ham.drift if ham.kind == "drift-power" else (0.0, 0.0)


def _drift_dot_x(bar: BarrierSpec, ps, pts) -> np.ndarray:
    return np.sum(evaluate_vector(_drift_field(bar, ps), pts) * pts, axis=-1)


def liouville_hypothesis(bar: BarrierSpec, ps, n: int = 2) -> float:
    """Largest ``(B(x).x)+`` on far-field samples; raises unless it is below ``n``."""
    radii = np.geomspace(bar.core_radius * 1.0001, bar.outer_radius, bar.samples)
    angles = 2.0 * np.pi * np.arange(bar.angles) / bar.angles
    pts, _, _ = _radial_points((0.0, 0.0), radii, angles)
    bx = np.maximum(_drift_dot_x(bar, ps, pts), 0.0)
    k = int(np.argmax(bx))
    if bx[k] >= n:
        raise HypothesisError(f"(B(x).x)+ = {bx[k]:g} is not below n = {n} at {tuple(pts[k])}",
                              (tuple(float(c) for c in pts[k]), float(bx[k])))
    return float(bx[k])


def liouville_reduced_bracket(alpha: float, p: float, n: int, bx) -> np.ndarray:
    """``alpha [(alpha-1)(p-1) + ((B.x)+ - n) - (B.x)-]``, the reduced bracket, with ``n - 1`` replaced by ``-n``."""
    bx = np.asarray(bx, dtype=float)
    return alpha * ((alpha - 1.0) * (p - 1.0) + (np.maximum(bx, 0.0) - n) - np.maximum(-bx, 0.0))


def liouville_exact_bracket(alpha: float, p: float, n: int, bx) -> np.ndarray:
    """``alpha [(alpha-1)(p-1) + n - 1 + B.x]``, from the radial derivatives of ``|x|**alpha``."""
    return alpha * ((alpha - 1.0) * (p - 1.0) + n - 1.0 + np.asarray(bx, dtype=float))


def liouville_barrier_check(bar: BarrierSpec, ps) -> BarrierReport:
    """Evaluate the operator on ``|x|**alpha`` outside the core and compare with two closed forms.

    Needs the sum convention with a finite-p diffusion. The drift is
    ``bar.drift`` (entering as ``Psi <B, Du>``) or else that of a drift-power
    Hamiltonian. The verdict is strict positivity of the operator
    ``Psi D + H (+ Psi <B, Du>)`` from exact radial derivatives.
    The report also carries the minimum of the reduced form
    ``Psi alpha |x|**(alpha-2) [(alpha-1)(p-1) + ((B.x)+ - n) - (B.x)-]`` and
    the largest gap between the operator without its ``rho`` part and the
    intermediate form ``Psi alpha |x|**(alpha-2) (n + (alpha-1)(p-2) + alpha - 2 + B.x)``.
    """
    if bar.kind != "liouville-power":
        raise ValueError("expected a liouville-power barrier")
    cfg = ps.operator
    if cfg.diffusion != "p-finite" or cfg.convention != "sum":
        raise ValueError("the Liouville barrier is set up for the finite-p diffusion in the sum convention")
    n, p, alpha = 2, cfg.p, bar.alpha
    sup_bx = liouville_hypothesis(bar, ps, n)
    start = max(bar.core_radius, 1.0) * (1.0 + 1e-9)
    radii = np.geomspace(start, bar.outer_radius, bar.samples)
    angles = 2.0 * np.pi * np.arange(bar.angles) / bar.angles
    pts, s, dirs = _radial_points((0.0, 0.0), radii, angles)
    d1 = alpha * s ** (alpha - 1.0)
    d2 = alpha * (alpha - 1.0) * s ** (alpha - 2.0)
    mag = np.abs(d1)
    psi = _psi_at(ps.psi, pts, mag)
    diff = radial_diffusion(cfg, n, s, d1, d2)
    grad = d1[:, None] * dirs
    ham = ham_eval(ps.hamiltonian, pts, grad)
    # a barrier-level drift enters as Psi <B, Du>; otherwise the drift is part of H
    drift_part = psi * np.sum(evaluate_vector(_drift_field(bar, ps), pts) * grad, axis=-1)
    value = psi * diff + ham + (drift_part if bar.drift is not None else 0.0)
    bx = _drift_dot_x(bar, ps, pts)
    scale = psi * s ** (alpha - 2.0)
    intermediate = scale * alpha * (n + (alpha - 1.0) * (p - 2.0) + alpha - 2.0) + scale * alpha * bx
    reduced = scale * liouville_reduced_bracket(alpha, p, n, bx)
    exact = scale * liouville_exact_bracket(alpha, p, n, bx)
    per_radius = value.reshape(len(radii), len(angles)).min(axis=1)
    k = int(np.argmin(value))
    extra = {"theta": bar.theta, "core_radius": bar.core_radius, "outer_radius": bar.outer_radius,
             "hypothesis_sup": sup_bx, "reduced_min": float(reduced.min()),
             "reduced_positive": bool(np.all(reduced > 0)), "exact_bracket_min": float(exact.min()),
             "intermediate_gap": float(np.max(np.abs(psi * diff + drift_part - intermediate))),
             "slope_below_one": bool(np.all(mag < 1.0))}
    return BarrierReport(bar.kind, alpha, bool(np.all(value > 0)), float(value.min()),
                         (float(s[k]), float(np.arctan2(dirs[k, 1], dirs[k, 0]))), radii, per_radius, extra)


@dataclass
class GrowthReport:
    passed: bool
    worst: float
    witness: Optional[tuple]
    shift: float
    rows: list

    def to_dict(self) -> dict:
        return {"verdict": "pass" if self.passed else "fail", "worst_margin": self.worst,
                "witness": list(self.witness) if self.witness is not None else None, "shift": self.shift,
                "rows": self.rows}


def liouville_growth_check(functions: Sequence[GridFunction], core_radius: float,
                           alphas: Sequence[float] = tuple(np.linspace(-0.95, -0.05, 19)),
                           tol: float = 1e-12) -> GrowthReport:
    """Check ``u >= (min_K u) Theta_alpha |x|**alpha`` on ``B_R \\ K`` for each supplied function.

    ``K`` is the closed ball of radius ``core_radius`` about the origin and
    ``Theta_alpha = core_radius**(-alpha)``. Each function lives on its own
    grid (one per ``R``). If some function dips below 1, all are shifted by
    the same constant first.
    """
    if isinstance(functions, GridFunction):
        functions = [functions]
    lows = [float(f.values[f.grid.closure].min()) for f in functions]
    shift = max(0.0, 1.0 - min(lows))
    rows, worst, witness = [], np.inf, None
    for idx, fn in enumerate(functions):
        grid = fn.grid
        vals = fn.values + shift
        dist = np.linalg.norm(grid.points, axis=-1)
        core = grid.closure & (dist <= core_radius)
        if not core.any():
            raise ValueError("the core ball contains no nodes")
        outer = grid.closure & (dist > core_radius)
        low = float(vals[core].min())
        for a in alphas:
            if not -1 < a < 0:
                raise ValueError("alpha must lie in (-1, 0)")
            bound = low * core_radius ** (-a) * dist[outer] ** a
            margin = vals[outer] - bound
            k = int(np.argmin(margin))
            m = float(margin[k])
            rows.append({"function": idx, "alpha": float(a), "min_core": low, "min_margin": m})
            if m < worst:
                worst = m
                node = tuple(int(i[k]) for i in np.nonzero(outer))
                witness = (idx, float(a), node)
    return GrowthReport(bool(worst >= -tol), float(worst), witness, float(shift), rows)


# ---------------------------------------------------------------------------
# non-uniqueness scenario


@dataclass
class NonUniquenessReport:
    theta: float
    sigma: float
    p: float
    n: int
    beta: float
    c: float
    zero_residual_max: float
    zero_is_solution: bool
    diffusion_closed_form: float
    diffusion_oracle_error: float
    radii: np.ndarray
    terms: dict
    residual_max: dict
    discrepancy: bool
    note: str

    def to_dict(self) -> dict:
        return {"theta": self.theta, "sigma": self.sigma, "p": self.p, "n": self.n, "beta": self.beta,
                "c": self.c, "zero_residual_max": self.zero_residual_max,
                "zero_is_solution": self.zero_is_solution,
                "diffusion_closed_form": self.diffusion_closed_form,
                "diffusion_oracle_error": self.diffusion_oracle_error,
                "residual_max": self.residual_max, "discrepancy_flagged": self.discrepancy, "note": self.note}

    def to_json(self, metadata: Optional[dict] = None) -> str:
        doc = self.to_dict()
        if metadata is not None:
            doc = {"metadata": metadata, **doc}
        return to_json(doc) + "\n"

    def table_csv(self) -> str:
        keys = list(self.terms)
        return csv_text(["radius"] + keys, zip(self.radii.tolist(), *(self.terms[k].tolist() for k in keys)))


def nonuniqueness_spec(theta: float, sigma: float, p: float, grid_n: int = 41, convention: str = "sum"):
    """Problem ``|Du|**theta (D(u) + <B, Du>) + rho |Du|**sigma = 0`` on the unit disc, ``u = 0`` on its boundary.

    ``B(x) = (p-2)/(1+theta) |x| x`` and ``rho(x) = (n + (n-1) theta)/(1+theta) |x|**(1+theta-sigma)``
    with ``n = 2``.
    """
    from .solver import ProblemSpec

    if not theta < sigma < 1.0 + theta:
        raise ValueError(f"need theta < sigma < 1 + theta (theta={theta:g}, sigma={sigma:g})")
    if not p > 1:
        raise ValueError("need p > 1")
    n = 2
    bscale = (p - 2.0) / (1.0 + theta)
    rscale = (n + (n - 1) * theta) / (1.0 + theta)

    def drift(x):
        return bscale * np.linalg.norm(x, axis=-1, keepdims=True) * x

    def rho(x):
        return rscale * np.linalg.norm(x, axis=-1) ** (1.0 + theta - sigma)

    # this scenario writes H beside the diffusion; the solver form -Psi D + H = f needs -H
    ham = Hamiltonian(kind="drift-power", drift=lambda x: -drift(x), rho=lambda x: -rho(x),
                      drift_exponent=theta, sigma=sigma,
                      growth_rho=lambda x: np.abs(bscale) * np.linalg.norm(x, axis=-1) ** 2 + rho(x),
                      growth_sigma=sigma)
    grid = Grid.ball((0.0, 0.0), 1.0, grid_n)
    return ProblemSpec(grid, psi_family("constant-power", p_hat=theta), ham,
                       OperatorConfig(diffusion="p-finite", p=p, convention=convention), f=0.0, g=0.0,
                       label=f"non-uniqueness theta={theta:g} sigma={sigma:g} p={p:g}")


def nonuniqueness_scenario(theta: float, sigma: float, p: float, n: int = 2, grid_n: int = 41,
                           radii: Optional[np.ndarray] = None) -> NonUniquenessReport:
    """Check the trivial branch and tabulate every term of the equation on ``v = c (1 - |x|**beta)``.

    ``beta = (2+theta)/(1+theta)``, ``c = 1/beta``. The weighted diffusion term
    in the sum convention is compared with ``-[(beta-1)(p-1) + n - 1]``. The
    full residual is reported under both conventions; a nonzero residual is
    flagged as a discrepancy rather than asserted away.
    """
    if n != 2:
        raise ValueError("grids are at most two-dimensional")
    ps = nonuniqueness_spec(theta, sigma, p, grid_n)
    beta = (2.0 + theta) / (1.0 + theta)
    c = 1.0 / beta
    zero = np.zeros(ps.grid.shape)
    psi, diff, ham, _, _ = equation_parts(ps, zero, ps.grid.interior)
    zero_res = float(np.max(np.abs(psi * diff + ham)))
    if radii is None:
        radii = np.linspace(0.01, 1.0, 100)
    r = np.asarray(radii, dtype=float)
    d1 = -c * beta * r ** (beta - 1.0)
    d2 = -c * beta * (beta - 1.0) * r ** (beta - 2.0)
    weight = np.abs(d1) ** theta
    terms = {}
    for conv in ("sum", "mean"):
        cfg = OperatorConfig(diffusion="p-finite", p=p, convention=conv)
        terms[f"diffusion_{conv}"] = weight * radial_diffusion(cfg, n, r, d1, d2)
    bscale = (p - 2.0) / (1.0 + theta)
    rscale = (n + (n - 1) * theta) / (1.0 + theta)
    # <B(x), Dv> with B = bscale |x| x and Dv = v'(r) x / r
    terms["drift"] = weight * bscale * r * r * d1
    terms["rho"] = rscale * r ** (1.0 + theta - sigma) * np.abs(d1) ** sigma
    for conv in ("sum", "mean"):
        terms[f"residual_{conv}"] = terms[f"diffusion_{conv}"] + terms["drift"] + terms["rho"]
    closed = -((beta - 1.0) * (p - 1.0) + n - 1.0)
    oracle_err = float(np.max(np.abs(terms["diffusion_sum"] - closed)))
    res_max = {conv: float(np.max(np.abs(terms[f"residual_{conv}"]))) for conv in ("sum", "mean")}
    discrepancy = min(res_max.values()) > 1e-8
    note = ("v does not make the residual vanish node-wise under either convention; "
            "the drift term scales like r**3 while the weighted diffusion term is constant"
            if discrepancy else "v solves the scenario equation node-wise")
    return NonUniquenessReport(theta, sigma, p, n, beta, c, zero_res, zero_res == 0.0, closed, oracle_err, r,
                               terms, res_max, discrepancy, note)
