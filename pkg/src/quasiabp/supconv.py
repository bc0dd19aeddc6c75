"""Sup-convolution with its semiconvexity certificate and the shrunken-domain residual transfer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import GridFunction, _inner
from .operators import equation_parts

METHODS = ("brute", "separable")


@dataclass
class SupConvResult:
    """``u_eps(x) = max_y u(y) - |x - y|**2 / (2 eps)`` over closure nodes ``y``.

    ``argmax`` holds, per node, the index of a maximizing ``y`` (shape
    ``grid.shape + (ndim,)``); ``shrunken`` marks interior nodes farther than
    ``r_eps`` from the boundary.
    """

    u_eps: GridFunction
    eps: float
    r_eps: float
    shrunken: np.ndarray
    argmax: np.ndarray
    method: str


def _penalty(eps: float, h: float, m: int) -> np.ndarray:
    """Penalty table ``q[k] = c k**2`` for index offsets ``-(m-1)..m-1``; ``q[m-1+k]`` is offset ``k``."""
    c = h * h / (2.0 * eps)
    k = np.arange(-(m - 1), m, dtype=float)
    return c * k * k


def _brute(values: np.ndarray, allowed: np.ndarray, eps: float, h: float):
    """Direct maximum over all admissible nodes, in the same rounding order as the separable pass."""
    vals = np.where(allowed, values, -np.inf)
    if vals.ndim == 1:
        m = len(vals)
        q = _penalty(eps, h, m)
        idx = np.arange(m)
        table = vals[None, :] - q[(m - 1) + idx[:, None] - idx[None, :]]
        arg = table.argmax(axis=1)
        return table[idx, arg], arg[:, None]
    n1, n2 = vals.shape
    q1 = _penalty(eps, h, n1)
    q2 = _penalty(eps, h, n2)
    i2 = np.arange(n2)
    # inner[i2, j1, j2] = u[j1, j2] - q(i2 - j2)
    inner = vals[None, :, :] - q2[(n2 - 1) + i2[:, None, None] - i2[None, None, :]]
    out = np.empty((n1, n2))
    arg = np.empty((n1, n2, 2), dtype=int)
    j1 = np.arange(n1)
    for a in range(n1):
        full = inner - q1[(n1 - 1) + a - j1][None, :, None]
        flat = full.reshape(n2, -1)
        k = flat.argmax(axis=1)
        out[a] = flat[np.arange(n2), k]
        arg[a, :, 0], arg[a, :, 1] = np.divmod(k, n2)
    return out, arg


def _line_pass(a: np.ndarray, q: np.ndarray):
    """``out[i] = max_j a[j] - q(i - j)`` along one line via the upper envelope of parabolas.

    The envelope picks the maximizing parabola; its value and those of its
    envelope neighbours are then evaluated exactly as ``a[j] - q(i - j)`` so
    the result matches a direct maximum in floating point.
    """
    m = len(a)
    off = m - 1
    cand = np.flatnonzero(np.isfinite(a))
    out = np.full(m, -np.inf)
    arg = np.full(m, -1, dtype=int)
    if cand.size == 0:
        return out, arg
    c = q[off + 1]  # penalty coefficient per unit offset squared
    verts = [int(cand[0])]
    bounds = [-np.inf, np.inf]
    for j in cand[1:]:
        j = int(j)
        while True:
            k = verts[-1]
            s = ((a[k] - a[j]) / (c * (j - k)) + j + k) / 2.0
            if len(verts) > 1 and s <= bounds[-2]:
                verts.pop()
                bounds.pop()
                continue
            break
        bounds[-1] = s
        verts.append(j)
        bounds.append(np.inf)
    pos = 0
    for i in range(m):
        while bounds[pos + 1] < i:
            pos += 1
        best, best_j = -np.inf, -1
        for p in (pos - 1, pos, pos + 1):
            if 0 <= p < len(verts):
                j = verts[p]
                v = a[j] - q[off + i - j]
                if v > best or (v == best and j < best_j):
                    best, best_j = v, j
        out[i], arg[i] = best, best_j
    return out, arg


def _separable(values: np.ndarray, allowed: np.ndarray, eps: float, h: float):
    vals = np.where(allowed, values, -np.inf)
    if vals.ndim == 1:
        q = _penalty(eps, h, len(vals))
        out, arg = _line_pass(vals, q)
        return out, arg[:, None]
    n1, n2 = vals.shape
    q1 = _penalty(eps, h, n1)
    q2 = _penalty(eps, h, n2)
    # pass along the second axis: partial[j1, i2] = max_j2 u[j1, j2] - q(i2 - j2)
    partial = np.empty((n1, n2))
    arg2 = np.empty((n1, n2), dtype=int)
    for j1 in range(n1):
        partial[j1], arg2[j1] = _line_pass(vals[j1], q2)
    out = np.empty((n1, n2))
    arg = np.empty((n1, n2, 2), dtype=int)
    for i2 in range(n2):
        col, a1 = _line_pass(partial[:, i2], q1)
        out[:, i2] = col
        arg[:, i2, 0] = a1
        arg[:, i2, 1] = arg2[a1, i2]
    return out, arg


def sup_convolution(u: GridFunction, eps: float, method: str = "separable") -> SupConvResult:
    """Sup-convolution of ``u`` over the closed domain, evaluated at every grid node.

    ``brute`` scans all admissible ``y`` per node; ``separable`` runs one
    upper-envelope-of-parabolas pass per axis. Both evaluate
    ``(u(y) - q2) - q1`` in the same order, so they agree bit for bit.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if method not in METHODS:
        raise ValueError(f"unknown sup-convolution method {method!r}")
    grid = u.grid
    allowed = grid.closure
    fn = _brute if method == "brute" else _separable
    vals, arg = fn(u.values, allowed, eps, grid.spacing)
    sup_norm = float(np.max(np.abs(u.values[allowed])))
    r_eps = 2.0 * np.sqrt(eps * sup_norm)
    shrunken = grid.interior & (grid.distance_to_boundary() > r_eps)
    return SupConvResult(GridFunction(grid, vals, f"{u.label}^eps" if u.label else "u^eps"),
                         float(eps), float(r_eps), shrunken, arg, method)


@dataclass
class SemiconvexityReport:
    ok: bool
    min_second_difference: float
    witness: Optional[tuple]
    direction: Optional[tuple]
    tol: float


def _directions(ndim: int):
    return ((1,),) if ndim == 1 else ((1, 0), (0, 1), (1, 1), (1, -1))


def semiconvexity_check(w: GridFunction, lam: float, tol: Optional[float] = None, mask=None) -> SemiconvexityReport:
    """Check ``(w(x+he) - 2w(x) + w(x-he)) / (h|e|)**2 >= -lam - tol`` along axis and diagonal lattice directions.

    By default every node whose stencil stays inside the bounding box is
    checked; ``mask`` restricts the centres. The default ``tol`` covers
    rounding in the second difference.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    grid = w.grid
    v = w.values
    h = grid.spacing
    if tol is None:
        tol = 64 * np.finfo(float).eps * (1.0 + float(np.max(np.abs(v)))) / h ** 2
    centre_mask = np.zeros(v.shape, dtype=bool)
    centre_mask[_inner(grid.ndim)] = True
    if mask is not None:
        centre_mask &= np.asarray(mask, dtype=bool)
    worst, witness, wdir = np.inf, None, None
    inner_sel = centre_mask[_inner(grid.ndim)]
    for d in _directions(grid.ndim):
        second = (v[_inner(grid.ndim, d)] - 2 * v[_inner(grid.ndim)]
                  + v[_inner(grid.ndim, [-c for c in d])]) / (h * h * sum(c * c for c in d))
        vals = np.where(inner_sel, second, np.inf)
        k = int(np.argmin(vals))
        if vals.flat[k] < worst:
            worst = float(vals.flat[k])
            witness = tuple(int(i) + 1 for i in np.unravel_index(k, vals.shape))
            wdir = d
    if not np.isfinite(worst):
        return SemiconvexityReport(True, worst, None, None, float(tol))
    return SemiconvexityReport(worst >= -lam - tol, worst, witness, wdir, float(tol))


@dataclass
class TransferReport:
    pass_fraction: float
    nodes: int
    failures: int
    worst_residual: float
    eps: float
    r_eps: float
    tol: float
    input_residual_sup: float
    input_is_subsolution: bool
    note: str = ("coefficients are frozen at the evaluation node; only f is inflated "
                 "to its maximum over the r_eps ball")


def inflated_datum(f_values: np.ndarray, grid, radius: float) -> np.ndarray:
    """``max f`` over closure nodes within ``radius`` of each node (``-inf`` where none)."""
    from scipy.ndimage import maximum_filter

    reach = int(np.floor(radius / grid.spacing + 1e-12))
    offs = np.arange(-reach, reach + 1)
    mesh = np.meshgrid(*([offs] * grid.ndim), indexing="ij")
    footprint = sum(m.astype(float) ** 2 for m in mesh) * grid.spacing ** 2 <= radius ** 2 * (1 + 1e-12)
    src = np.where(grid.closure, f_values, -np.inf)
    return maximum_filter(src, footprint=footprint, mode="constant", cval=-np.inf)


def subsolution_transfer_check(ps, u: GridFunction, eps: float, tol: float = 1e-6) -> TransferReport:
    """Residual of the sup-convolution of ``u`` on the shrunken domain against the inflated datum."""
    res_in = -np.inf
    mask = ps.grid.interior
    psi, diff, ham, _, _ = equation_parts(ps, u.values, mask)
    res_in = float(np.max(-psi * diff + ham - ps.f_values[mask]))
    sc = sup_convolution(u, eps, "separable")
    sh = sc.shrunken
    if not sh.any():
        raise ValueError(f"shrunken domain is empty for eps={eps:g} (r_eps={sc.r_eps:g})")
    f_eps = inflated_datum(ps.f_values, ps.grid, sc.r_eps)
    psi, diff, ham, _, _ = equation_parts(ps, sc.u_eps.values, sh)
    res = -psi * diff + ham - f_eps[sh]
    fails = int(np.sum(res > tol))
    return TransferReport(1.0 - fails / res.size, int(res.size), fails, float(res.max()), sc.eps, sc.r_eps,
                          tol, res_in, res_in <= tol)
