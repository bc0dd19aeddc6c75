"""Both sides of the A.B.P.-type maximum principle estimates and their verdicts."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .envelope import EnvelopeResult, concave_envelope, level_band_sup
from .fields import PsiField
from .grid import GridFunction, boundary_sup, gradient_array, positive_part_extend, sup_over
from .operators import equation_parts
from .reporting import csv_text, to_json

VARIANTS = ("infinity", "p-finite", "h-homogeneous", "classical-p")


def _require_p(p) -> float:
    if p is None or not (1 < p < np.inf):
        raise ValueError("this variant needs an exponent 1 < p < inf")
    return float(p)


def _shift(variant: str, p=None, h=None) -> float:
    """Order of the diffusion in the gradient: 2 for the normalized operators."""
    if variant in ("infinity", "p-finite"):
        return 2.0
    if variant == "h-homogeneous":
        if h is None or not 0 <= h <= 2:
            raise ValueError("h-homogeneous variant needs 0 <= h <= 2")
        return 4.0 - h
    if variant == "classical-p":
        return _require_p(p)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def abp_exponents(variant: str, psi: PsiField, sigma: float, p=None, h=None) -> tuple[float, float]:
    """``(e1, e2)`` of the left-hand side ``min(rho**e1, rho**e2)``."""
    k = _shift(variant, p, h)
    return k + psi.i_psi - sigma, k + psi.s_psi


def sigma_ceiling(variant: str, psi: PsiField, p=None, h=None) -> float:
    """The estimates need ``sigma`` strictly below this value (so that ``e1 > 0``)."""
    return _shift(variant, p, h) + psi.i_psi


def abp_constant(variant: str, psi: PsiField, p=None, h=None) -> float:
    """Constant in front of the level integral."""
    k = _shift(variant, p, h)
    base = (k + psi.s_psi) * psi.l1 / psi.a_lower
    if variant in ("p-finite", "classical-p"):
        p = _require_p(p)
        base *= p / (p - 1.0)
    return float(base)


def check_window(variant: str, psi: PsiField, sigma: float, p=None, h=None) -> None:
    """Refuse growth exponents outside the window of the estimate."""
    c1 = sigma_ceiling(variant, psi, p, h)
    if not sigma < c1:
        raise ValueError(f"sigma={sigma:g} is not below c1={c1:g} for the {variant} estimate; "
                         f"the left-hand exponent e1 = c1 - sigma would not be positive")


def abp_lhs(M: float, M_plus: float, d: float, e1: float, e2: float) -> float:
    """``min(rho**e1, rho**e2)`` with ``rho = max(M - M_plus, 0) / d``."""
    if not d > 0:
        raise ValueError("diameter must be positive")
    if not (e1 > 0 and e2 > 0):
        raise ValueError("exponents must be positive")
    rho = max(M - M_plus, 0.0) / d
    return float(min(rho ** e1, rho ** e2))


def classical_sup_bound(psi: PsiField, p: float, sigma: float, d: float, data_norm: float,
                        boundary_sup_plus: float = 0.0) -> tuple[float, float]:
    """Sup bound for the divergence-form p-Laplacian: returns ``(bound, C)``.

    ``bound = boundary_sup_plus + C max(N**(1/(p-1+i-sigma)), N**(1/(p-1+s)))``
    with ``N = data_norm`` the sup of ``f+ + rho`` on the contact set.
    """
    p = _require_p(p)
    lo = p - 1.0 + psi.i_psi - sigma
    hi = p - 1.0 + psi.s_psi
    if not (lo > 0 and hi > 0):
        raise ValueError("classical bound needs p - 1 + i_psi - sigma > 0")
    k = (p + psi.s_psi) * psi.l1 * p / (psi.a_lower * (p - 1.0))
    const = max((d ** (lo + 1.0) * k) ** (1.0 / lo), (d ** (hi + 1.0) * k) ** (1.0 / hi))
    norm = max(float(data_norm), 0.0)
    return boundary_sup_plus + const * max(norm ** (1.0 / lo), norm ** (1.0 / hi)), float(const)


def variant_of(ps) -> tuple[str, Optional[float], Optional[float]]:
    """Estimate variant and its parameter for the operator of ``ps``.

    Variable exponents use ``p- = min p`` over the closed domain, which gives
    the largest constant.
    """
    cfg = ps.operator
    if cfg.diffusion == "infinity":
        return "infinity", None, None
    if cfg.diffusion == "h-homogeneous":
        return "h-homogeneous", None, float(cfg.homogeneity)
    if cfg.diffusion == "variable-p":
        return "p-finite", float(ps.p_values[ps.grid.closure].min()), None
    return "p-finite", float(cfg.p), None


def _sigma_of(ham) -> float:
    # a vanishing Hamiltonian carries no growth; its exponent enters only through e1
    if ham.kind == "zero" and ham.growth_sigma is None:
        return 0.0
    return ham.envelope_sigma


@dataclass
class LevelRow:
    k: int
    tau: float
    band_nodes: int
    band_sup: float
    contribution: float


def band_floor(u_plus: np.ndarray, grid) -> float:
    """Finest level spacing the nodes resolve: ``h`` times the largest central slope of ``u_plus``."""
    slope = np.linalg.norm(gradient_array(u_plus, grid.spacing), axis=-1)
    return float(grid.spacing * slope[grid.interior].max())


def _level_sum(w: np.ndarray, u_plus: np.ndarray, mask: np.ndarray, lo: float, hi: float, K: int, C: float,
               grid, floor: float = 0.0) -> tuple[float, list]:
    delta = (hi - lo) / K
    half = max(delta, floor)
    rows, total = [], 0.0
    wf = GridFunction(grid, w)
    uf = GridFunction(grid, u_plus)
    for k in range(1, K + 1):
        tau = lo + (k - 0.5) * delta
        band = (np.abs(u_plus - tau) <= half) & mask
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sup = level_band_sup(wf, uf, tau, half, mask)
        contrib = C * sup * delta
        total += contrib
        rows.append(LevelRow(k, tau, int(band.sum()), sup, contrib))
    empty = sum(1 for r in rows if r.band_nodes == 0)
    if empty:
        warnings.warn(f"{empty} of {K} level bands are empty", stacklevel=3)
    return total, rows


def integrand_values(ps, f_values: np.ndarray) -> np.ndarray:
    """``f+ + rho`` on every node (zero outside the closed domain)."""
    rho = ps.hamiltonian.envelope_rho(ps.grid.points)
    w = np.maximum(f_values, 0.0) + rho
    return np.where(ps.grid.closure, w, 0.0)


def abp_rhs(ps, u: GridFunction, env: EnvelopeResult, K: int, C: Optional[float] = None,
            f_values: Optional[np.ndarray] = None, resolve_floor: bool = False) -> tuple[float, list]:
    """Riemann sum ``C sum_k sup_band(f+ + rho) delta`` over midpoint levels of ``[M+, M]``.

    Bands are ``{|u+ - tau_k| <= w}`` intersected with the contact set and
    the interior, where ``delta = (M - M+) / K`` and ``w = delta``, or
    ``max(delta, band_floor(u+))`` with ``resolve_floor``.
    """
    if K < 1:
        raise ValueError("need at least one level")
    if C is None:
        variant, p, h = variant_of(ps)
        C = abp_constant(variant, ps.psi, p, h)
    f = ps.f_values if f_values is None else f_values
    grid = ps.grid
    M = sup_over(u, grid.closure)
    M_plus = max(boundary_sup(u), 0.0)
    if M <= M_plus:
        return 0.0, []
    mask = env.contact & grid.interior
    floor = band_floor(env.u_plus.values, grid) if resolve_floor else 0.0
    return _level_sum(integrand_values(ps, f), env.u_plus.values, mask, M_plus, M, K, C, grid, floor)


@dataclass
class AbpReport:
    """Both sides of one A.B.P. inequality and its verdict."""

    variant: str
    side: str
    M: float
    M_plus: float
    d: float
    sigma: float
    c1: float
    e1: float
    e2: float
    C: float
    lhs: float
    rhs: float
    K: int
    delta: float
    slack: float
    allowance: float
    margin: float
    verdict: bool
    inequality_ok: bool
    refinement: list
    spread: float
    spread_ok: bool
    residual_sup: float
    advisory: bool
    psi_factor_quotient: float
    psi_factor_product: float
    p: Optional[float] = None
    h: Optional[float] = None
    levels: list = field(default_factory=list)
    contact_nodes: int = 0
    envelope_degenerate: bool = False
    supersolution: Optional["AbpReport"] = None
    label: str = ""
    band_halfwidth: float = 0.0

    @property
    def passed(self) -> bool:
        return self.verdict and (self.supersolution is None or self.supersolution.verdict)

    def to_dict(self) -> dict:
        out = {
            "label": self.label, "variant": self.variant, "side": self.side,
            "p": self.p, "h": self.h, "M": self.M, "M_plus": self.M_plus, "d": self.d,
            "sigma": self.sigma, "c1": self.c1, "e1": self.e1, "e2": self.e2, "C": self.C,
            "LHS": self.lhs, "RHS": self.rhs, "K": self.K, "delta": self.delta, "band_halfwidth": self.band_halfwidth,
            "slack": self.slack, "allowance": self.allowance, "margin": self.margin,
            "inequality_ok": self.inequality_ok,
            "refinement": [{"K": k, "RHS": r} for k, r in self.refinement],
            "spread": self.spread, "spread_ok": self.spread_ok,
            "verdict": "pass" if self.verdict else "fail",
            "residual_sup": self.residual_sup, "advisory": self.advisory,
            "psi_lower_factor": {"a_over_L2": self.psi_factor_quotient, "L2_times_a": self.psi_factor_product},
            "contact_nodes": self.contact_nodes, "envelope_degenerate": self.envelope_degenerate,
        }
        if self.supersolution is not None:
            out["supersolution"] = self.supersolution.to_dict()
            out["overall"] = "pass" if self.passed else "fail"
        return out

    def to_json(self, metadata: Optional[dict] = None) -> str:
        doc = self.to_dict()
        if metadata is not None:
            doc = {"metadata": metadata, **doc}
        return to_json(doc) + "\n"

    def to_text(self) -> str:
        lines = [f"A.B.P. check [{self.variant}, {self.side}] {self.label}".rstrip(),
                 f"  M = {self.M:.6g}, M+ = {self.M_plus:.6g}, diam = {self.d:.6g}",
                 f"  exponents e1 = {self.e1:.6g}, e2 = {self.e2:.6g} (sigma = {self.sigma:.6g} < c1 = {self.c1:.6g})",
                 f"  constant C = {self.C:.17g}",
                 f"  LHS = {self.lhs:.6e}, RHS = {self.rhs:.6e} (K = {self.K}), margin = {self.margin:.6e}",
                 "  refinement: " + ", ".join(f"K={k}: {r:.6e}" for k, r in self.refinement)
                 + f" (spread {100 * self.spread:.2f}%)",
                 f"  verdict: {'pass' if self.verdict else 'fail'}"
                 + (" (advisory: input residual above tolerance)" if self.advisory else "")]
        if self.supersolution is not None:
            lines.append(self.supersolution.to_text())
        return "\n".join(lines)

    def table_csv(self) -> str:
        rows = [(self.side, r.k, r.tau, r.band_nodes, r.band_sup, r.contribution) for r in self.levels]
        if self.supersolution is not None:
            rows += [(self.supersolution.side, r.k, r.tau, r.band_nodes, r.band_sup, r.contribution)
                     for r in self.supersolution.levels]
        return csv_text(["side", "k", "tau", "band_nodes", "band_sup", "contribution"], rows)


def _one_side(ps, values: np.ndarray, f_values: np.ndarray, side: str, variant: str, p, h, sigma: float,
              K: int, refinement, slack: float, allowance_factor: float, spread_limit: float,
              residual_sup: float, advisory: bool, label: str, contact_tol: Optional[float],
              resolve_floor: bool) -> AbpReport:
    grid = ps.grid
    u = GridFunction(grid, values)
    M = sup_over(u, grid.closure) + 0.0  # no negative zero in reports
    M_plus = max(boundary_sup(u), 0.0) + 0.0
    d = grid.diameter
    e1, e2 = abp_exponents(variant, ps.psi, sigma, p, h)
    C = abp_constant(variant, ps.psi, p, h)
    lhs = abp_lhs(M, M_plus, d, e1, e2)
    w = integrand_values(ps, f_values)
    contact_nodes, degenerate, floor = 0, M <= 0, 0.0
    rhs_by_k = {}
    rows = []
    if M > M_plus:
        tol_c = grid.spacing ** 2 * (M - M_plus) if contact_tol is None else contact_tol
        env = concave_envelope(positive_part_extend(u), "hull", tol_c=tol_c)
        mask = env.contact & grid.interior
        contact_nodes = int(mask.sum())
        floor = band_floor(env.u_plus.values, grid) if resolve_floor else 0.0
        for k in sorted(set(refinement) | {K}):
            total, table = _level_sum(w, env.u_plus.values, mask, M_plus, M, k, C, grid, floor)
            rhs_by_k[k] = total
            if k == K:
                rows = table
    else:
        rhs_by_k = {k: 0.0 for k in set(refinement) | {K}}
    rhs = rhs_by_k[K]
    refine = [(k, rhs_by_k[k]) for k in refinement]
    vals = [r for _, r in refine]
    spread = (max(vals) - min(vals)) / max(vals) if vals and max(vals) > 0 else 0.0
    allowance = allowance_factor * grid.spacing
    ok = lhs <= rhs * (1.0 + slack) + allowance
    spread_ok = spread <= spread_limit
    delta = (M - M_plus) / K if M > M_plus else 0.0
    return AbpReport(variant=variant, side=side, M=M, M_plus=M_plus, d=d, sigma=sigma,
                     c1=sigma_ceiling(variant, ps.psi, p, h), e1=e1, e2=e2, C=C, lhs=lhs, rhs=rhs, K=K,
                     delta=delta, slack=slack, allowance=allowance, margin=rhs - lhs,
                     verdict=bool(ok and spread_ok), inequality_ok=bool(ok), refinement=refine,
                     spread=float(spread), spread_ok=bool(spread_ok), residual_sup=residual_sup,
                     advisory=advisory, psi_factor_quotient=ps.psi.a_lower / ps.psi.l2,
                     psi_factor_product=ps.psi.l2 * ps.psi.a_lower, p=p, h=h, levels=rows,
                     contact_nodes=contact_nodes, envelope_degenerate=bool(degenerate), label=label,
                     band_halfwidth=max(delta, floor))


def abp_verdict(ps, u: GridFunction, variant: Optional[str] = None, K: int = 16, slack: float = 0.05,
                allowance_factor: float = 1.0, refinement=(8, 16, 32), spread_limit: float = 0.10,
                residual_tol: float = 1e-4, supersolution: bool = True, label: str = "",
                contact_tol: Optional[float] = None, resolve_floor: bool = True) -> AbpReport:
    """Evaluate the subsolution estimate for ``u`` and, optionally, the supersolution one.

    The verdict passes when ``LHS <= RHS (1 + slack) + allowance_factor h``
    and the right-hand sides for the ``refinement`` level counts differ by at
    most ``spread_limit`` relative to their maximum. The supersolution estimate
    is the same pipeline applied to ``-u`` with ``f`` negated. A report is
    marked advisory when ``u`` violates the corresponding residual inequality
    by more than ``residual_tol``. ``contact_tol`` defaults to ``h**2 (M - M+)``,
    the size of the truncation error of the schemes, so discrete solutions
    that are concave only up to that error still register contact. With
    ``resolve_floor`` the band half-width is at least ``h max|D u+|``, the
    finest level spacing the nodes can resolve.
    """
    auto_variant, p, h = variant_of(ps)
    variant = variant or auto_variant
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "classical-p" and p is None:
        raise ValueError("classical-p needs a p-type operator")
    sigma = _sigma_of(ps.hamiltonian)
    check_window(variant, ps.psi, sigma, p, h)
    mask = ps.grid.interior
    psi, diff, ham, _, _ = equation_parts(ps, u.values, mask)
    res = -psi * diff + ham - ps.f_values[mask]
    sub_res = float(res.max())
    common = dict(variant=variant, p=p, h=h, sigma=sigma, K=K, refinement=tuple(refinement), slack=slack,
                  allowance_factor=allowance_factor, spread_limit=spread_limit, contact_tol=contact_tol,
                  resolve_floor=resolve_floor)
    report = _one_side(ps, u.values, ps.f_values, "subsolution", residual_sup=sub_res,
                       advisory=sub_res > residual_tol, label=label, **common)
    if supersolution:
        super_res = float(-res.min())
        report.supersolution = _one_side(ps, -u.values, -ps.f_values, "supersolution", residual_sup=super_res,
                                         advisory=super_res > residual_tol, label=label, **common)
    return report
