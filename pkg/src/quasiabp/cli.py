"""Command-line front end.

Exit status: 0 when every requested verdict passes, 2 on a failed verdict or
a solve that did not converge, 1 on errors (bad configuration, I/O).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigError, ProblemConfig, ScenarioConfig, parse_config
from .reporting import csv_text, to_json, write_text

log = logging.getLogger("quasiabp")

COMMANDS = ("solve", "abp-check", "envelope", "supconv", "scenario", "battery")
EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def metadata(command: str) -> dict:
    """Run metadata; ``timestamp`` is the only field that changes between identical runs."""
    return {"timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"), "command": command,
            "version": __version__}


def _json(doc: dict, command: str) -> str:
    return to_json({"metadata": metadata(command), **doc}) + "\n"


def _load(args, kinds=(ProblemConfig, ScenarioConfig)):
    with open(args.config, encoding="utf-8") as fh:
        text = fh.read()
    cfg = parse_config(text, grid_n=args.grid, convention=args.convention, tol=args.tol, levels=args.levels)
    if not isinstance(cfg, kinds):
        kind = "scenario" if isinstance(cfg, ScenarioConfig) else "problem"
        raise ConfigError([(0, f"command {args.command} does not take a {kind} configuration")])
    return cfg


def _solve(cfg: ProblemConfig, args):
    from dataclasses import replace
    from .solver import solve_dirichlet

    params = cfg.solve if args.max_iter is None else replace(cfg.solve, max_iter=args.max_iter)
    return solve_dirichlet(cfg.spec, params)


def _write_solution(out: str, result) -> None:
    result.u.to_csv(os.path.join(out, "solution.csv"))
    result.log.to_csv(os.path.join(out, "convergence.csv"))


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    cfg = _load(args, ProblemConfig)
    result = _solve(cfg, args)
    _write_solution(args.out, result)
    doc = {"label": cfg.label, "converged": result.converged, "iterations": result.iterations,
           "residual_sup": result.residual_sup, "tol": cfg.solve.tol}
    write_text(os.path.join(args.out, "solve.json"), _json(doc, "solve"))
    return EXIT_OK if result.converged else EXIT_FAIL


def cmd_abp_check(args) -> int:
    from .abp import abp_verdict

    if args.config is None:
        return _run_battery(args, "abp-check", per_instance=True)
    cfg = _load(args, ProblemConfig)
    result = _solve(cfg, args)
    _write_solution(args.out, result)
    report = abp_verdict(cfg.spec, result.u, K=cfg.levels, slack=cfg.slack, allowance_factor=cfg.allowance,
                         resolve_floor=cfg.resolve_floor, label=cfg.label)
    write_text(os.path.join(args.out, "abp.json"), report.to_json(metadata("abp-check")))
    write_text(os.path.join(args.out, "abp_levels.csv"), report.table_csv())
    return EXIT_OK if result.converged and report.passed else EXIT_FAIL


def _random_field(args, ndim: int = 2):
    from .grid import Grid, GridFunction

    rng = np.random.default_rng(args.seed)
    n = args.grid or 15
    grid = Grid.box((-1.0,) * ndim, (1.0,) * ndim, n)
    return GridFunction(grid, rng.random(grid.shape), f"random seed={args.seed}")


def _input_function(args):
    """Solution of the configured problem, or a seeded random field on a box."""
    if args.config is None:
        return _random_field(args), True
    cfg = _load(args, ProblemConfig)
    result = _solve(cfg, args)
    _write_solution(args.out, result)
    return result.u, result.converged


def cmd_envelope(args) -> int:
    from .envelope import concave_envelope
    from .grid import positive_part_extend

    u, ok = _input_function(args)
    env = concave_envelope(positive_part_extend(u))
    env.to_csv(os.path.join(args.out, "envelope.csv"))
    doc = {"method": env.method, "domain": env.domain, "tol_c": env.tol_c,
           "contact_nodes": int(env.contact.sum()), "degenerate": env.degenerate, "input_converged": ok}
    write_text(os.path.join(args.out, "envelope.json"), _json(doc, "envelope"))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_supconv(args) -> int:
    from .supconv import semiconvexity_check, sup_convolution

    u, ok = _input_function(args)
    eps = args.eps
    sc = sup_convolution(u, eps)
    semi = semiconvexity_check(sc.u_eps, 1.0 / eps, mask=u.grid.closure)
    above = bool(np.all(sc.u_eps.values[u.grid.closure] >= u.values[u.grid.closure]))
    sc.u_eps.to_csv(os.path.join(args.out, "supconv.csv"))
    doc = {"eps": eps, "r_eps": sc.r_eps, "shrunken_nodes": int(sc.shrunken.sum()), "dominates_input": above,
           "semiconvex": semi.ok, "min_second_difference": semi.min_second_difference,
           "semiconvexity_tol": semi.tol, "input_converged": ok}
    write_text(os.path.join(args.out, "supconv.json"), _json(doc, "supconv"))
    return EXIT_OK if ok and above and semi.ok else EXIT_FAIL


def cmd_scenario(args) -> int:
    cfg = _load(args, ScenarioConfig)
    doc, passed, tables = run_scenario(cfg)
    write_text(os.path.join(args.out, "scenario.json"), _json(doc, "scenario"))
    for name, text in tables.items():
        write_text(os.path.join(args.out, name), text)
    return EXIT_OK if passed else EXIT_FAIL


def run_scenario(cfg: ScenarioConfig):
    """Run one qualitative scenario; returns ``(report dict, passed, {filename: csv text})``."""
    from . import qualitative as q
    from .fields import Hamiltonian, psi_family
    from .grid import Grid, GridFunction
    from .operators import OperatorConfig
    from .solver import ProblemSpec, SolveParams, solve_dirichlet

    prm = cfg.params
    name = cfg.name
    tables = {}
    if name == "comparison":
        sc = q.disc_comparison_pair(int(prm.get("grid", 41)))
        tol = prm.get("tol", 1e-6)
        fwd = q.comparison_check(sc, tol)
        rev = q.comparison_check(sc.swapped(), tol)
        doc = {"scenario": name, "declared": fwd.to_dict(), "swapped": rev.to_dict()}
        return doc, fwd.passed and not rev.passed, tables
    if name == "smp":
        p, r = prm.get("p", 2.0), prm.get("radius", 1.0)
        alpha = prm.get("alpha") or q.smp_alpha_select(r, 2, p, sigma=prm.get("sigma", 1.0))
        grid = Grid.ball((0.0, 0.0), 1.5 * r, int(prm.get("grid", 61)))
        ps = ProblemSpec(grid, psi_family("constant-power", p_hat=0.0), Hamiltonian(),
                         OperatorConfig(diffusion="p-finite", p=p, convention="sum"))
        bar = q.BarrierSpec("smp-exponential", alpha=alpha, radius=r, zero_order=prm.get("zero_order", 0.0),
                            samples=int(prm.get("samples", 200)))
        rep = q.smp_barrier_residual_check(ps, bar)
        tables["smp_barrier.csv"] = rep.table_csv()
        return {"scenario": name, **rep.to_dict()}, rep.passed, tables
    if name == "hopf":
        grid = Grid.ball((0.0, 0.0), 1.0, int(prm.get("grid", 41)))
        ps = ProblemSpec(grid, psi_family("constant-power", p_hat=0.0), Hamiltonian(), OperatorConfig(),
                         f=1.0, g=lambda x: 1.0 - x[..., 0])
        sol = solve_dirichlet(ps, SolveParams(tol=prm.get("tol", 1e-7)))
        rep = q.hopf_fit(sol.u, prm.get("center", (0.5, 0.0)), prm.get("radius", 0.5))
        doc = {"scenario": name, "constant": rep.constant, "certified": rep.certified,
               "witness": list(rep.witness), "nodes": rep.nodes, "solve_converged": sol.converged}
        return doc, rep.certified and sol.converged, tables
    if name == "liouville":
        p = prm.get("p", 2.0)
        grid = Grid.ball((0.0, 0.0), 1.0, 11)
        ps = ProblemSpec(grid, psi_family("constant-power", p_hat=0.0), Hamiltonian(),
                         OperatorConfig(diffusion="p-finite", p=p, convention="sum"))
        alphas = prm.get("alphas") or tuple(np.linspace(-0.9, -0.01, 20))
        rows, ok = [], True
        for a in alphas:
            bar = q.BarrierSpec("liouville-power", alpha=a, core_radius=prm.get("core_radius", 1.0),
                                outer_radius=prm.get("outer_radius", 10.0), drift=prm.get("drift"))
            rep = q.liouville_barrier_check(bar, ps)
            rows.append(rep.to_dict())
            ok = ok and rep.passed
        return {"scenario": name, "alphas": rows}, ok, tables
    if name == "liouville-growth":
        core = prm.get("core_radius", 0.5)
        fns = []
        for radius in (2.0, 4.0, 8.0):
            grid = Grid.ball((0.0, 0.0), radius, int(prm.get("grid", 41)))
            fns.append(GridFunction(grid, 1.0 + np.sum(grid.points ** 2, axis=-1)))
        rep = q.liouville_growth_check(fns, core, prm.get("alphas") or tuple(np.linspace(-0.95, -0.05, 19)))
        return {"scenario": name, **rep.to_dict()}, rep.passed, tables
    if name == "nonuniqueness":
        rep = q.nonuniqueness_scenario(prm.get("theta", 1.0), prm.get("sigma", 1.5), prm.get("p", 3.0),
                                       int(prm.get("n", 2)), int(prm.get("grid", 41)))
        tables["nonuniqueness_terms.csv"] = rep.table_csv()
        ok = rep.zero_is_solution and rep.diffusion_oracle_error <= 1e-10
        return {"scenario": name, **rep.to_dict()}, ok, tables
    raise ConfigError([(0, f"unknown scenario {name!r}")])


def _battery_worker(job):
    index, grid_n, convention, tol, levels = job
    from .battery import battery_instances, run_battery

    inst = battery_instances(grid_n, convention)[index]
    return run_battery(tol=tol, levels=levels, instances=[inst])[0].to_dict()


def _run_battery(args, command: str, per_instance: bool = False) -> int:
    from .battery import battery_instances

    grid_n = args.grid or 41
    convention = args.convention or "mean"
    tol = args.tol or 1e-6
    levels = args.levels or 16
    count = len(battery_instances(grid_n, convention))
    jobs = [(i, grid_n, convention, tol, levels) for i in range(count)]
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_battery_worker, jobs))
    else:
        rows = [_battery_worker(job) for job in jobs]
    passed = all(r["converged"] and r["passed"] for r in rows)
    doc = {"instances": rows, "count": len(rows), "passed": passed}
    write_text(os.path.join(args.out, "battery.json"), _json(doc, command))
    summary = [(r["name"], r["converged"], r["iterations"], r["abp"]["C"], r["abp"]["LHS"], r["abp"]["RHS"],
                r["abp"]["spread"], r["passed"]) for r in rows]
    write_text(os.path.join(args.out, "battery.csv"),
               csv_text(["name", "converged", "iterations", "C", "LHS", "RHS", "spread", "passed"], summary))
    if per_instance:
        for i, r in enumerate(rows):
            write_text(os.path.join(args.out, f"abp_{i:02d}.json"),
                       to_json({"metadata": metadata(command), **r["abp"]}) + "\n")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_battery(args) -> int:
    return _run_battery(args, "battery")


HANDLERS = {"solve": cmd_solve, "abp-check": cmd_abp_check, "envelope": cmd_envelope, "supconv": cmd_supconv,
            "scenario": cmd_scenario, "battery": cmd_battery}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quasiabp", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="configuration file (key = value sections or JSON)")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("--grid", type=int, help="nodes per axis")
    parser.add_argument("--levels", type=int, help="number of level bands K")
    parser.add_argument("--convention", choices=("sum", "mean"), help="normalization of the p-diffusion")
    parser.add_argument("--tol", type=float, help="solver residual tolerance")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized inputs")
    parser.add_argument("--max-iter", dest="max_iter", type=int, help="solver iteration cap")
    parser.add_argument("--eps", type=float, default=1e-2, help="sup-convolution parameter")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for the battery")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    needs_config = args.command in ("solve", "scenario")
    if needs_config and args.config is None:
        print(f"error: {args.command} needs --config", file=sys.stderr)
        return EXIT_ERROR
    try:
        os.makedirs(args.out, exist_ok=True)
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            return HANDLERS[args.command](args)
    except ConfigError as exc:
        for line, msg in exc.errors:
            print(f"config error{f' (line {line})' if line else ''}: {msg}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
