"""Dirichlet problems and their explicit pseudo-time relaxation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .fields import Hamiltonian, PsiField, evaluate_scalar
from .grid import Grid, GridFunction, format_float
from .operators import OperatorConfig, equation_parts, residual

log = logging.getLogger(__name__)

Data = Union[float, np.ndarray, GridFunction, Callable[[np.ndarray], np.ndarray]]


def _evaluate_data(data: Data, grid: Grid, name: str) -> np.ndarray:
    if isinstance(data, GridFunction):
        vals = data.values
    elif callable(data):
        vals = evaluate_scalar(data, grid.points)
    else:
        vals = np.broadcast_to(np.asarray(data, dtype=float), grid.shape)
    vals = np.array(vals, dtype=float)
    if not np.all(np.isfinite(vals[grid.closure])):
        raise ValueError(f"{name} is not finite on the domain")
    vals[~np.isfinite(vals)] = 0.0
    vals.setflags(write=False)
    return vals


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """``-Psi(x,|Du|) D(u) + H(x,Du) = f`` in the domain, ``u = g`` on its boundary."""

    grid: Grid
    psi: PsiField
    hamiltonian: Hamiltonian
    operator: OperatorConfig
    f: Data = 0.0
    g: Data = 0.0
    label: str = ""
    f_values: np.ndarray = field(init=False, repr=False)
    g_values: np.ndarray = field(init=False, repr=False)
    p_values: Optional[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        errs = self.psi.constant_errors() + self.hamiltonian.window_errors()
        if errs:
            raise ValueError("invalid problem: " + "; ".join(errs))
        object.__setattr__(self, "f_values", _evaluate_data(self.f, self.grid, "f"))
        object.__setattr__(self, "g_values", _evaluate_data(self.g, self.grid, "g"))
        p_vals = None
        if self.operator.diffusion == "variable-p":
            p_vals = self.operator.p_values(self.grid.points)
            if not np.all(p_vals[self.grid.closure] > 1):
                raise ValueError("variable exponent must exceed 1 on the domain")
        object.__setattr__(self, "p_values", p_vals)

    def with_data(self, f: Data = None, g: Data = None, **changes) -> "ProblemSpec":
        """Copy with new data or components."""
        kw = dict(grid=self.grid, psi=self.psi, hamiltonian=self.hamiltonian, operator=self.operator,
                  f=self.f if f is None else f, g=self.g if g is None else g, label=self.label)
        kw.update(changes)
        return ProblemSpec(**kw)

    def time_step(self, safety: float, rule: str = "spectral") -> float:
        """Explicit pseudo-time step scaled by ``safety``.

        ``spectral`` uses ``2 h**2 / bound`` with the symbol bound of the
        discrete diffusion; ``anisotropy`` uses ``h**2 / (2 n (1 + |p - 2|))``.
        The update divides by Psi times the homogeneity weight, so neither
        depends on Psi.
        """
        pts = self.grid.points[self.grid.closure]
        h2 = self.grid.spacing ** 2
        if rule == "anisotropy":
            return safety * h2 / (2 * self.grid.ndim * self.operator.anisotropy(pts))
        return safety * 2.0 * h2 / self.operator.spectral_bound(self.grid.ndim, pts)


@dataclass(frozen=True)
class SolveParams:
    """Pseudo-time controls.

    ``initial`` is ``zero`` (interior zero, boundary g), ``boundary-harmonic``
    (discrete harmonic extension of g) or ``user`` with ``initial_values``.
    ``psi_floor`` defaults to ``1e-6 * a``. ``step_rule`` selects the
    pseudo-time step (see :meth:`ProblemSpec.time_step`); ``max_step`` clips
    the per-iteration change of every node. When the best residual has not
    The residual is watched in windows of ``stall_window`` iterations; when a
    window's minimum fails to drop 1% below the previous window's, the step
    is halved, at most ``max_backoffs`` times. The first window is skipped
    because the residual commonly rises before it decays.
    """

    safety: float = 0.9
    tol: float = 1e-6
    max_iter: int = 200_000
    initial: str = "zero"
    initial_values: Optional[np.ndarray] = None
    psi_floor: Optional[float] = None
    max_step: Optional[float] = None
    step_rule: str = "spectral"
    stall_window: int = 1000
    max_backoffs: int = 6

    def __post_init__(self):
        if self.step_rule not in ("spectral", "anisotropy"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if not 0 < self.safety <= 1:
            raise ValueError("safety factor must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.initial not in ("zero", "boundary-harmonic", "user"):
            raise ValueError(f"unknown initial guess policy {self.initial!r}")
        if self.initial == "user" and self.initial_values is None:
            raise ValueError("user initial guess requires initial_values")


@dataclass
class ConvergenceLog:
    iterations: list = field(default_factory=list)
    residual_sup: list = field(default_factory=list)
    du_sup: list = field(default_factory=list)

    def append(self, it: int, res: float, du: float) -> None:
        self.iterations.append(it)
        self.residual_sup.append(res)
        self.du_sup.append(du)

    def to_csv(self, path=None, every: int = 1) -> str:
        lines = ["iteration,residual_sup,du_sup"]
        last = len(self.iterations) - 1
        for k, (it, r, d) in enumerate(zip(self.iterations, self.residual_sup, self.du_sup)):
            if k % every == 0 or k == last:
                lines.append(f"{it},{format_float(r)},{format_float(d)}")
        text = "\r\n".join(lines) + "\r\n"
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


@dataclass
class SolveResult:
    u: GridFunction
    converged: bool
    iterations: int
    residual_sup: float
    log: ConvergenceLog


def harmonic_extension(grid: Grid, g: np.ndarray) -> np.ndarray:
    """Discrete harmonic function on the interior with trace ``g`` on the boundary."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.linalg import spsolve

    idx = -np.ones(grid.shape, dtype=int)
    interior = np.argwhere(grid.interior)
    idx[grid.interior] = np.arange(len(interior))
    rows, cols, vals = [], [], []
    rhs = np.zeros(len(interior))
    for k, node in enumerate(interior):
        rows.append(k)
        cols.append(k)
        vals.append(2.0 * grid.ndim)
        for ax in range(grid.ndim):
            for s in (-1, 1):
                nb = node.copy()
                nb[ax] += s
                nb = tuple(nb)
                if idx[nb] >= 0:
                    rows.append(k)
                    cols.append(idx[nb])
                    vals.append(-1.0)
                else:
                    rhs[k] += g[nb]
    mat = coo_matrix((vals, (rows, cols)), shape=(len(interior),) * 2).tocsr()
    out = np.where(grid.closure, g, 0.0)
    out[grid.interior] = spsolve(mat, rhs)
    return out


def initial_guess(ps: ProblemSpec, params: SolveParams) -> np.ndarray:
    g = np.where(ps.grid.closure, ps.g_values, 0.0)
    if params.initial == "zero":
        u = np.where(ps.grid.boundary, g, 0.0)
    elif params.initial == "boundary-harmonic":
        u = harmonic_extension(ps.grid, g)
    else:
        init = params.initial_values
        u = np.array(init.values if isinstance(init, GridFunction) else init, dtype=float)
    u = np.where(ps.grid.boundary, g, u)
    return np.where(ps.grid.closure, u, 0.0)


def solve_dirichlet(ps: ProblemSpec, params: SolveParams = SolveParams()) -> SolveResult:
    """Relax ``u <- u - dt * residual / max(Psi * weight, floor)`` on interior nodes.

    Boundary nodes keep ``g`` exactly. The iterate with the smallest
    max-norm residual is returned; ``converged`` reports whether it met ``tol``.
    """
    grid = ps.grid
    mask = grid.interior
    dt = ps.time_step(params.safety, params.step_rule)
    floor = params.psi_floor if params.psi_floor is not None else 1e-6 * ps.psi.a_lower
    f = ps.f_values[mask]
    u = initial_guess(ps, params)
    if not np.all(np.isfinite(u)):
        raise ValueError("initial guess is not finite")
    history = ConvergenceLog()
    best_u, best_res = u.copy(), np.inf
    backoffs, window_min, prev_min = 0, np.inf, np.inf
    converged = False
    it = 0
    for it in range(params.max_iter + 1):
        psi, diff, ham, weight, _ = equation_parts(ps, u, mask)
        res = -psi * diff + ham - f
        res_sup = float(np.max(np.abs(res))) if res.size else 0.0
        if not np.isfinite(res_sup):
            log.warning("residual became non-finite at iteration %d", it)
            break
        if res_sup < best_res:
            best_res = res_sup
            best_u = u.copy()
        if res_sup <= params.tol:
            history.append(it, res_sup, 0.0)
            converged = True
            break
        if it == params.max_iter:
            history.append(it, res_sup, 0.0)
            break
        window_min = min(window_min, res_sup)
        if it and it % params.stall_window == 0:
            # a stalled residual signals a cycle from the gradient dependence of Psi
            if it > params.stall_window and window_min >= 0.99 * prev_min and backoffs < params.max_backoffs:
                dt *= 0.5
                backoffs += 1
                log.info("residual stalled at %.3e; halving step to %.3e", window_min, dt)
            prev_min, window_min = window_min, np.inf
        step = dt * res / np.maximum(psi * weight, floor)
        if params.max_step is not None:
            step = np.clip(step, -params.max_step, params.max_step)
        u[mask] -= step
        history.append(it, res_sup, float(np.max(np.abs(step))))
    if not converged:
        log.info("no convergence after %d iterations (best residual %.3e)", it, best_res)
    return SolveResult(GridFunction(grid, best_u, ps.label or "u"), converged, it, best_res, history)


def bracket_check(ps: ProblemSpec, u_flat: GridFunction, u_sharp: GridFunction, tol: float = 1e-6) -> bool:
    """True iff ``u_flat`` is a discrete subsolution, ``u_sharp`` a supersolution and ``u_flat <= u_sharp``."""
    mask = ps.grid.interior
    sub = residual(ps, u_flat)[mask]
    sup = residual(ps, u_sharp)[mask]
    closure = ps.grid.closure
    return bool(np.all(sub <= tol) and np.all(sup >= -tol)
                and np.all(u_flat.values[closure] <= u_sharp.values[closure]))
