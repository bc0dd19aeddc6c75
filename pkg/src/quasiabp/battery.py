"""The A.B.P. battery: solved instances pairing each Psi family with each diffusion."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .abp import AbpReport, abp_verdict
from .fields import Hamiltonian, psi_family
from .grid import Grid, gradient_array
from .operators import OperatorConfig
from .reporting import to_json
from .solver import ProblemSpec, SolveParams, SolveResult, solve_dirichlet

log = logging.getLogger(__name__)

FAMILIES = ("constant-power", "double-phase", "log-double-phase",
            "variable-power", "variable-double-phase", "log-variable-double-phase")
DIFFUSIONS = ("infinity", "p3", "h1")
HAMILTONIANS = ("drift-power", "two-power")


def battery_datum(pts):
    """Positive, non-constant right-hand side so the level bands differ."""
    return 1.0 + 0.5 * pts[..., 0]


def _x(pts):
    return pts[..., 0]


def _y(pts):
    return pts[..., 1]


def family_psi(family: str, samples: np.ndarray):
    """Representative member of each built-in family with mild exponents."""
    if family == "constant-power":
        return psi_family(family, p_hat=0.5)
    if family == "double-phase":
        return psi_family(family, p_hat=0.5, q_hat=1.0, coef=lambda x: 0.5 + 0.25 * _x(x), samples=samples)
    if family == "log-double-phase":
        return psi_family(family, p_hat=0.5, coef=0.5)
    if family == "variable-power":
        return psi_family(family, p_hat=lambda x: 0.5 + 0.2 * _x(x), samples=samples)
    if family == "variable-double-phase":
        return psi_family(family, p_hat=lambda x: 0.5 + 0.2 * _x(x), q_hat=lambda x: 1.0 + 0.2 * _y(x),
                          coef=0.5, samples=samples)
    if family == "log-variable-double-phase":
        return psi_family(family, p_hat=lambda x: 0.5 + 0.2 * _y(x), coef=0.5, samples=samples)
    raise ValueError(f"unknown family {family!r}")


def diffusion_config(tag: str, convention: str = "mean") -> OperatorConfig:
    if tag == "infinity":
        return OperatorConfig(diffusion="infinity", convention=convention)
    if tag == "p3":
        return OperatorConfig(diffusion="p-finite", p=3.0, convention=convention)
    if tag == "h1":
        return OperatorConfig(diffusion="h-homogeneous", homogeneity=1.0, convention=convention)
    raise ValueError(f"unknown diffusion tag {tag!r}")


def hamiltonian_for(kind: str, i_psi: float) -> Hamiltonian:
    """Drift-power with growth exponent ``1 + i_psi``, or a two-power sum with ``theta < sigma``."""
    if kind == "drift-power":
        return Hamiltonian(kind="drift-power", drift=(0.3, -0.2), rho=0.25, drift_exponent=i_psi,
                           sigma=1.0 + i_psi)
    if kind == "two-power":
        return Hamiltonian(kind="two-power", coef_a=0.25, coef_b=0.25, theta=1.0, sigma=1.5)
    raise ValueError(f"unknown Hamiltonian kind {kind!r}")


@dataclass(frozen=True)
class BatteryInstance:
    name: str
    family: str
    diffusion: str
    hamiltonian: str
    domain: str
    spec: ProblemSpec


def uniform_instances(grid_n: int = 41, convention: str = "mean") -> list[BatteryInstance]:
    """Uniformly elliptic instances with no Hamiltonian, one per normalized diffusion."""
    disc = Grid.ball((0.0, 0.0), 1.0, grid_n)
    out = []
    for diff in ("infinity", "p3"):
        name = f"uniform/{diff}/zero/disc"
        spec = ProblemSpec(disc, psi_family("constant-power", p_hat=0.0), Hamiltonian(kind="zero"),
                           diffusion_config(diff, convention), f=1.0, g=0.0, label=name)
        out.append(BatteryInstance(name, "constant-power", diff, "zero", "disc", spec))
    return out


def battery_instances(grid_n: int = 41, convention: str = "mean") -> list[BatteryInstance]:
    """Twenty instances: two uniformly elliptic references, then each family under each
    diffusion with Hamiltonians and domains alternating."""
    disc = Grid.ball((0.0, 0.0), 1.0, grid_n)
    square = Grid.box((-1.0, -1.0), (1.0, 1.0), grid_n)
    out = uniform_instances(grid_n, convention)
    for fi, family in enumerate(FAMILIES):
        for di, diff in enumerate(DIFFUSIONS):
            ham_kind = HAMILTONIANS[(fi + di) % 2]
            domain = "disc" if (fi + di) % 3 != 2 else "square"
            grid = disc if domain == "disc" else square
            psi = family_psi(family, grid.points[grid.closure])
            ham = hamiltonian_for(ham_kind, psi.i_psi)
            name = f"{family}/{diff}/{ham_kind}/{domain}"
            spec = ProblemSpec(grid, psi, ham, diffusion_config(diff, convention), f=battery_datum, g=0.0,
                               label=name)
            out.append(BatteryInstance(name, family, diff, ham_kind, domain, spec))
    return out


def envelope_for_solution(spec: ProblemSpec, u_values: np.ndarray) -> ProblemSpec:
    """Attach a single-power growth envelope valid up to the largest solved gradient.

    A two-power Hamiltonian ``a|xi|**theta + b|xi|**sigma`` with ``theta < sigma``
    obeys ``|H| <= (|a| + |b| G**(sigma - theta)) |xi|**theta`` for ``|xi| <= G``.
    """
    ham = spec.hamiltonian
    if ham.kind != "two-power":
        return spec
    grad = np.linalg.norm(gradient_array(u_values, spec.grid.spacing), axis=-1)
    big = max(1.0, float(grad[spec.grid.interior].max()))
    a, b = abs(float(ham.coef_a)), abs(float(ham.coef_b))
    growth = a + b * big ** (ham.sigma - ham.theta)
    return spec.with_data(hamiltonian=replace(ham, growth_sigma=ham.theta, growth_rho=growth))


@dataclass
class BatteryResult:
    instance: BatteryInstance
    solve: SolveResult
    report: AbpReport

    def to_dict(self) -> dict:
        return {"name": self.instance.name, "family": self.instance.family,
                "diffusion": self.instance.diffusion, "hamiltonian": self.instance.hamiltonian,
                "domain": self.instance.domain, "converged": self.solve.converged,
                "iterations": self.solve.iterations, "solve_residual": self.solve.residual_sup,
                "passed": self.report.passed, "abp": self.report.to_dict()}


def run_battery(grid_n: int = 41, convention: str = "mean", tol: float = 1e-6, levels: int = 16,
                max_iter: int = 200_000, instances: Optional[list] = None) -> list[BatteryResult]:
    """Solve every instance and check the A.B.P. estimate on it, serially and in a fixed order."""
    results = []
    for inst in instances if instances is not None else battery_instances(grid_n, convention):
        sol = solve_dirichlet(inst.spec, SolveParams(tol=tol, max_iter=max_iter))
        spec = envelope_for_solution(inst.spec, sol.u.values)
        report = abp_verdict(spec, sol.u, K=levels, label=inst.name)
        log.info("%s: converged=%s iterations=%d verdict=%s", inst.name, sol.converged, sol.iterations,
                 report.passed)
        results.append(BatteryResult(inst, sol, report))
    return results


def battery_passed(results: list[BatteryResult]) -> bool:
    return bool(results) and all(r.solve.converged and r.report.passed for r in results)


def battery_json(results: list[BatteryResult], metadata: Optional[dict] = None) -> str:
    """Deterministic report; only ``metadata`` may vary between identical runs."""
    doc = {"instances": [r.to_dict() for r in results], "count": len(results),
           "passed": battery_passed(results)}
    if metadata is not None:
        doc = {"metadata": metadata, **doc}
    return to_json(doc) + "\n"
