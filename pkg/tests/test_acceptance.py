"""Acceptance suite: one test per criterion, each emitting a single PASS/FAIL line."""
import json
import re
import time

import numpy as np
import pytest

from oracles import affine_majorant_envelope, radial_quadratic, turning_angle_sum, weighted_diffusion_symbolic
from quasiabp import qualitative as q
from quasiabp.cli import main as cli_main, run_scenario
from quasiabp.config import ScenarioConfig
from quasiabp.envelope import concave_envelope, contact_hull_polygon, gauss_bonnet_check, hull_nodes
from quasiabp.fields import Hamiltonian, psi_family
from quasiabp.grid import Grid, GridFunction, positive_part_extend
from quasiabp.operators import OperatorConfig
from quasiabp.solver import ProblemSpec, SolveParams, solve_dirichlet
from quasiabp.supconv import semiconvexity_check, subsolution_transfer_check, sup_convolution

UNIT = psi_family("constant-power", p_hat=0.0)
SEED = 20240607


@pytest.fixture
def verdict(capsys):
    """Record the outcome of one criterion on the terminal, then assert it."""
    def record(number, title, checks):
        ok = all(passed for passed, _ in checks.values())
        detail = "; ".join(f"{name}={text}" for name, (_, text) in checks.items())
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        failed = [name for name, (passed, _) in checks.items() if not passed]
        assert not failed, f"criterion {number} failed checks: {failed}"
    return record


def random_positive_part(rng, n, disc):
    grid = Grid.ball((0.0, 0.0), 1.0, n) if disc else Grid.box((0.0, 0.0), (1.0, 1.0), n)
    return positive_part_extend(GridFunction(grid, np.where(grid.closure, rng.random(grid.shape), 0.0)))


# 1 -----------------------------------------------------------------------------

def test_criterion_01_radial_solver(verdict):
    p = 3.0
    errors, elapsed, converged = {}, {}, True
    for n in (51, 101):
        grid = Grid.ball((0.0, 0.0), 1.0, n)
        ps = ProblemSpec(grid, UNIT, Hamiltonian(), OperatorConfig(diffusion="p-finite", p=p, convention="mean"),
                         f=(2 + p - 2) / p, g=0.0)
        start = time.process_time()
        sol = solve_dirichlet(ps, SolveParams(tol=1e-8))
        elapsed[n] = time.process_time() - start
        converged = converged and sol.converged
        # the closed form lives on the closed unit disc; Dirichlet nodes beyond it carry g only
        in_disc = grid.closure & (np.linalg.norm(grid.points, axis=-1) <= 1.0)
        errors[n] = float(np.max(np.abs(sol.u.values - radial_quadratic(grid.points, p))[in_disc]))
    ratio = errors[101] / errors[51]
    verdict(1, "radial solver accuracy", {
        "converged": (converged, str(converged)),
        "err101": (errors[101] <= 2e-2, f"{errors[101]:.4g}"),
        "ratio": (0.35 <= ratio <= 0.65, f"{ratio:.3f}"),
        "cpu101_s": (elapsed[101] <= 60.0, f"{elapsed[101]:.1f}"),
    })


# 2 and 10 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def battery_runs(tmp_path_factory):
    runs = []
    for tag in ("first", "second"):
        out = tmp_path_factory.mktemp(f"battery_{tag}")
        code = cli_main(["battery", "--out", str(out)])
        runs.append((code, out))
    return runs


def test_criterion_02_abp_battery(verdict, battery_runs):
    code, out = battery_runs[0]
    doc = json.loads((out / "battery.json").read_text())
    rows = doc["instances"]
    nonuniform = [r for r in rows if r["hamiltonian"] != "zero"]
    families = {r["family"] for r in nonuniform}
    combos = {(r["family"], r["diffusion"]) for r in nonuniform}
    hams = {r["hamiltonian"] for r in nonuniform}
    uniform = {r["diffusion"]: r["abp"]["C"] for r in rows if r["name"].startswith("uniform/")}
    failing = [r["name"] for r in rows if not (r["converged"] and r["passed"])]
    verdict(2, "A.B.P. battery", {
        "instances": (len(rows) >= 12, str(len(rows))),
        "families": (len(families) == 6, str(len(families))),
        "diffusions": ({d for _, d in combos} == {"infinity", "p3", "h1"}, ",".join(sorted({d for _, d in combos}))),
        "hamiltonians": (hams == {"drift-power", "two-power"}, ",".join(sorted(hams))),
        "all_pass": (not failing and doc["passed"] and code == 0, ",".join(failing) or "none failing"),
        "C_infinity": (uniform.get("infinity") == 2.0, repr(uniform.get("infinity"))),
        "C_p3": (uniform.get("p3") == 2 * 3.0 / (3.0 - 1), repr(uniform.get("p3"))),
    })


def _strip_timestamp(text):
    return re.sub(r'"timestamp": "[^"]*"', '"timestamp": ""', text).encode()


def test_criterion_10_determinism(verdict, battery_runs):
    (_, a), (_, b) = battery_runs
    names = sorted(p.name for p in a.iterdir())
    same = {name: _strip_timestamp((a / name).read_text()) == _strip_timestamp((b / name).read_text())
            for name in names}
    verdict(10, "determinism", {
        "files": (names == sorted(p.name for p in b.iterdir()), ",".join(names)),
        "identical": (all(same.values()), ",".join(k for k, v in same.items() if not v) or "all"),
    })


# 3 ---------------------------------------------------------------------------------

def test_criterion_03_envelope_oracle(verdict):
    rng = np.random.default_rng(SEED)
    oracle_err, mono_worst, mono_nodes, idem_worst = 0.0, 0.0, 0, 0.0
    sizes = []
    for k in range(25):
        n = int(rng.integers(4, 16))
        sizes.append(n)
        up = random_positive_part(rng, n, bool(k % 2))
        grid = up.grid
        gamma = concave_envelope(up).gamma
        inside = hull_nodes(grid)
        ref = affine_majorant_envelope(grid.points[inside], up.values[inside], grid.points[inside])
        oracle_err = max(oracle_err, float(np.max(np.abs(ref - gamma.values[inside]))))
        bump = np.where(rng.random(grid.shape) < 0.5, 0.3 * rng.random(grid.shape), 0.0)
        upper = positive_part_extend(GridFunction(grid, np.where(grid.closure, up.values + bump, 0.0)))
        gap = gamma.values - concave_envelope(upper).gamma.values
        mono_worst = max(mono_worst, float(gap.max()))
        mono_nodes += int(np.sum(gap > 0))
        again = concave_envelope(gamma).gamma
        idem_worst = max(idem_worst, float(np.max(np.abs(again.values - gamma.values))))
    # plane intercepts from qhull carry rounding; allow a few ulps of the unit data scale
    ulps = 4 * np.finfo(float).eps
    verdict(3, "envelope oracle equivalence", {
        "grids": (len(sizes) == 25 and max(sizes) <= 15, f"25 up to {max(sizes)}x{max(sizes)}"),
        "oracle_err": (oracle_err <= 1e-9, f"{oracle_err:.2e}"),
        "monotone": (mono_worst <= ulps, f"worst {mono_worst:.1e} on {mono_nodes} nodes"),
        "idempotent": (idem_worst == 0.0, f"{idem_worst:.1e}"),
    })


# 4 ---------------------------------------------------------------------------------

def test_criterion_04_gauss_bonnet(verdict):
    rng = np.random.default_rng(SEED + 4)
    worst, oracle_gap, vertices = 0.0, 0.0, []
    for k in range(50):
        up = random_positive_part(rng, int(rng.integers(5, 16)), bool(k % 2))
        env = concave_envelope(up)
        poly = contact_hull_polygon(env)
        vertices.append(len(poly))
        total = gauss_bonnet_check(poly)
        worst = max(worst, abs(total - 2 * np.pi))
        oracle_gap = max(oracle_gap, abs(total - turning_angle_sum(env.gamma.grid.points[env.contact])))
    verdict(4, "Gauss-Bonnet on contact hulls", {
        "polygons": (len(vertices) == 50, f"50 with {min(vertices)}-{max(vertices)} vertices"),
        "turning_sum": (worst <= 1e-9, f"{worst:.1e}"),
        "qhull_agreement": (oracle_gap <= 1e-9, f"{oracle_gap:.1e}"),
    })


# 5 ---------------------------------------------------------------------------------

def test_criterion_05_sup_convolution(verdict):
    rng = np.random.default_rng(SEED + 5)
    exact, dominates, semiconvex, monotone = True, True, True, True
    grid = Grid.box((0.0, 0.0), (1.0, 1.0), 64)
    for _ in range(20):
        u = GridFunction(grid, rng.normal(size=grid.shape))
        eps = float(10 ** rng.uniform(-3, -1))
        fast = sup_convolution(u, eps, "separable").u_eps.values
        brute = sup_convolution(u, eps, "brute").u_eps.values
        exact = exact and np.array_equal(fast, brute)
        dominates = dominates and bool(np.all(fast >= u.values))
        semiconvex = semiconvex and semiconvexity_check(GridFunction(grid, fast), 1.0 / eps).ok
        larger = sup_convolution(u, 2 * eps, "separable").u_eps.values
        monotone = monotone and bool(np.all(fast <= larger))
    disc = Grid.ball((0.0, 0.0), 1.0, 41)
    ps = ProblemSpec(disc, UNIT, Hamiltonian(), OperatorConfig(), f=1.0, g=0.0)
    sol = solve_dirichlet(ps, SolveParams(tol=1e-8))
    transfer = subsolution_transfer_check(ps, sol.u, 1e-3)
    verdict(5, "sup-convolution", {
        "bit_exact": (exact, "20 grids 64x64"),
        "dominates": (dominates, str(dominates)),
        "semiconvex": (semiconvex, "lambda=1/eps"),
        "eps_monotone": (monotone, str(monotone)),
        "transfer": (transfer.input_is_subsolution and transfer.pass_fraction >= 0.99,
                     f"{transfer.pass_fraction:.3f}"),
    })


# 6 ---------------------------------------------------------------------------------

def test_criterion_06_smp_and_hopf(verdict):
    alpha = q.smp_alpha_select(1.0, 2, 2.0)
    grid = Grid.ball((0.0, 0.0), 1.5, 61)
    ps = ProblemSpec(grid, UNIT, Hamiltonian(), OperatorConfig(diffusion="p-finite", p=2.0, convention="sum"))
    rep = q.smp_barrier_residual_check(ps, q.BarrierSpec("smp-exponential", alpha=alpha, radius=1.0, samples=200))
    # independent closed form: the Laplacian of e^{-a|x|^2} in the plane is 4a e^{-a s^2} (a s^2 - 1)
    s = np.asarray(rep.radii)
    closed = 4 * alpha * np.exp(-alpha * s ** 2) * (alpha * s ** 2 - 1)
    hopf_doc, hopf_ok, _ = run_scenario(ScenarioConfig("hopf", {}))
    verdict(6, "strong maximum principle and Hopf", {
        "alpha": (True, f"{alpha:g}"),
        "radii": (len(s) >= 200, str(len(s))),
        "margin": (rep.passed and rep.min_value > 0, f"{rep.min_value:.3e}"),
        "closed_form": (bool(np.allclose(rep.values, closed, rtol=1e-9)), "Laplacian match"),
        "hopf": (hopf_ok and hopf_doc["constant"] > 0, f"{hopf_doc['constant']:.4f}"),
    })


# 7 ---------------------------------------------------------------------------------

def test_criterion_07_liouville(verdict):
    alphas = np.linspace(-0.9, -0.01, 20)
    grid = Grid.ball((0.0, 0.0), 1.0, 11)
    ps = ProblemSpec(grid, UNIT, Hamiltonian(), OperatorConfig(diffusion="p-finite", p=2.0, convention="sum"))
    minima, operator_ok = [], True
    for a in alphas:
        rep = q.liouville_barrier_check(q.BarrierSpec("liouville-power", alpha=float(a)), ps)
        minima.append(rep.extra["reduced_min"])
        operator_ok = operator_ok and rep.passed
    # alpha [(alpha - 1)(p - 1) - n] with p = n = 2
    independent = alphas * (alphas - 3.0)
    library = np.array([float(q.liouville_reduced_bracket(a, 2.0, 2, 0.0)) for a in alphas])
    drift = lambda x: 3.0 * x / np.sum(x ** 2, axis=-1, keepdims=True)  # noqa: E731
    try:
        q.liouville_barrier_check(q.BarrierSpec("liouville-power", alpha=-0.5, drift=drift), ps)
        rejected = False
    except q.HypothesisError:
        rejected = True
    verdict(7, "Liouville barrier", {
        "alphas": (len(alphas) == 20, "20 in [-0.9, -0.01]"),
        "reduced_positive": (min(minima) > 0 and bool(np.all(independent > 0)), f"min {min(minima):.3e}"),
        "bracket_oracle": (bool(np.allclose(library, independent, rtol=1e-14)), "alpha(alpha-3)"),
        "operator_positive": (operator_ok, str(operator_ok)),
        "rejects_Bx_3": (rejected, str(rejected)),
    })


# 8 ---------------------------------------------------------------------------------

def test_criterion_08_comparison(verdict):
    pair = q.disc_comparison_pair(41)
    tol = 1e-6
    fwd = q.comparison_check(pair, tol)
    rev = q.comparison_check(pair.swapped(), tol)
    verdict(8, "comparison harness", {
        "declared": (fwd.passed and fwd.gap <= tol, f"gap {fwd.gap:.3e}"),
        "swapped_fails": (not rev.passed, f"gap {rev.gap:.3e}"),
    })


# 9 ---------------------------------------------------------------------------------

def test_criterion_09_nonuniqueness(verdict):
    theta, sigma, p = 1.0, 1.5, 3.0
    radii = np.linspace(0.01, 1.0, 100)
    rep = q.nonuniqueness_scenario(theta, sigma, p, radii=radii)
    beta = (2 + theta) / (1 + theta)
    closed = -((beta - 1) * (p - 1) + 2 - 1)
    symbolic = weighted_diffusion_symbolic(theta, p, 2, radii)
    doc = json.loads(rep.to_json({"timestamp": ""}))
    verdict(9, "non-uniqueness scenario", {
        "zero_solution": (rep.zero_is_solution, f"residual {rep.zero_residual_max:.1e}"),
        "closed_form": (bool(np.max(np.abs(symbolic - closed)) <= 1e-10)
                        and abs(rep.diffusion_closed_form - closed) <= 1e-10, f"{closed:g}"),
        "terms_vs_symbolic": (bool(np.max(np.abs(rep.terms["diffusion_sum"] - symbolic)) <= 1e-10),
                              f"{np.max(np.abs(rep.terms['diffusion_sum'] - symbolic)):.1e} at 100 radii"),
        "flagged": (doc["discrepancy_flagged"] is True, str(doc["discrepancy_flagged"])),
    })
