"""Concave envelopes of nonnegative grid functions and the geometry of their contact sets."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import GridFunction, _inner, convex_hull_polygon, format_float, gradient_array

METHODS = ("hull", "iterative")

# lattice directions for the iterative method (one per antipodal pair)
ITERATIVE_DIRECTIONS_2D = ((1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2))


class EnvelopeConvergenceError(RuntimeError):
    """The iterative envelope did not settle within the iteration budget."""


@dataclass
class EnvelopeResult:
    """Concave envelope of ``u_plus`` over the hull of the domain (or the bounding box).

    ``contact`` marks nodes with ``|gamma - u_plus| <= tol_c``; ``degenerate``
    flags an identically zero ``u_plus`` (every node is then a contact node).
    """

    gamma: GridFunction
    u_plus: GridFunction
    contact: np.ndarray
    tol_c: float
    method: str
    iterations: int = 0
    degenerate: bool = False
    domain: str = "hull"

    def to_csv(self, path=None) -> str:
        """Rows ``x[,y],u_plus,gamma,contact`` in C order."""
        grid = self.gamma.grid
        cols = ["x", "y"][: grid.ndim] + ["u_plus", "gamma", "contact"]
        pts = grid.points.reshape(-1, grid.ndim)
        lines = [",".join(cols)]
        for p, a, b, c in zip(pts, self.u_plus.values.ravel(), self.gamma.values.ravel(), self.contact.ravel()):
            lines.append(",".join([format_float(v) for v in p] + [format_float(a), format_float(b), str(int(c))]))
        text = "\r\n".join(lines) + "\r\n"
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _upper_hull_1d(z: np.ndarray) -> np.ndarray:
    """Concave envelope of samples at integer abscissae (monotone chain on the upper side)."""
    hull: list[int] = []
    for k in range(len(z)):
        # pop while the last point lies on or below the chord from hull[-2] to k
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            if (z[j] - z[i]) * (k - i) <= (z[k] - z[i]) * (j - i):
                hull.pop()
            else:
                break
        hull.append(k)
    idx = np.array(hull)
    return np.interp(np.arange(len(z)), idx, z[idx])


def _upper_planes_2d(ii: np.ndarray, jj: np.ndarray, z: np.ndarray):
    """Slopes and intercepts (index units) of the non-vertical upper facets of the graph hull."""
    from scipy.spatial import ConvexHull, QhullError

    pts = np.column_stack([ii, jj, z]).astype(float)
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return None
    tri = hull.simplices[hull.equations[:, 2] > 0]
    p0, p1, p2 = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
    d1, d2 = p1 - p0, p2 - p0
    # projected lattice triangles have area 0 or at least 1/2 in index units
    det = d1[:, 0] * d2[:, 1] - d2[:, 0] * d1[:, 1]
    keep = np.abs(det) > 0.25
    d1, d2, p0, det = d1[keep], d2[keep], p0[keep], det[keep]
    gx = (d1[:, 2] * d2[:, 1] - d2[:, 2] * d1[:, 1]) / det
    gy = (d1[:, 0] * d2[:, 2] - d2[:, 0] * d1[:, 2]) / det
    icpt = p0[:, 2] - gx * p0[:, 0] - gy * p0[:, 1]
    return gx, gy, icpt, np.unique(tri[keep])


def _hull_envelope(z: np.ndarray, inside: np.ndarray) -> np.ndarray:
    """Envelope over the nodes ``inside`` (a lattice-convex set); other nodes keep ``z``."""
    if z.ndim == 1:
        idx = np.flatnonzero(inside)
        out = z.copy()
        out[idx[0]:idx[-1] + 1] = _upper_hull_1d(z[idx[0]:idx[-1] + 1])
        return out
    ii, jj = np.nonzero(inside)
    planes = _upper_planes_2d(ii, jj, z[inside])
    if planes is None:  # graph points are coplanar, so z is affine and already concave
        return z.copy()
    gx, gy, icpt, verts = planes
    ii, jj = ii.astype(float), jj.astype(float)
    gamma = np.full(ii.shape, np.inf)
    chunk = max(1, 2_000_000 // max(ii.size, 1))
    for s in range(0, len(gx), chunk):
        vals = icpt[s:s + chunk, None] + gx[s:s + chunk, None] * ii + gy[s:s + chunk, None] * jj
        gamma = np.minimum(gamma, vals.min(axis=0))
    gamma[verts] = z[inside][verts]
    out = z.copy()
    out[inside] = gamma
    return out


def _iterative_envelope(z: np.ndarray, inside: np.ndarray, tol: float, max_iter: int):
    dirs = ((1,),) if z.ndim == 1 else ITERATIVE_DIRECTIONS_2D
    pad = max(max(abs(c) for c in d) for d in dirs)
    shape = z.shape
    gamma = z.copy()
    big = np.full(tuple(s + 2 * pad for s in shape), -np.inf)
    core = tuple(slice(pad, pad + s) for s in shape)
    for it in range(1, max_iter + 1):
        big[core] = np.where(inside, gamma, -np.inf)
        best = z.copy()
        for d in dirs:
            fwd = big[tuple(slice(pad + c, pad + c + s) for c, s in zip(d, shape))]
            bwd = big[tuple(slice(pad - c, pad - c + s) for c, s in zip(d, shape))]
            np.maximum(best, 0.5 * (fwd + bwd), out=best)
        best = np.where(inside, best, z)
        change = float(np.max(best - gamma))
        gamma = best
        if change <= tol:
            return gamma, it
    raise EnvelopeConvergenceError(f"iterative envelope did not converge in {max_iter} iterations")


def hull_nodes(grid) -> np.ndarray:
    """Nodes lying in the convex hull of the closed domain."""
    closure = grid.closure
    if grid.ndim == 1:
        idx = np.flatnonzero(closure)
        out = np.zeros(grid.shape, dtype=bool)
        out[idx[0]:idx[-1] + 1] = True
        return out
    ii, jj = np.nonzero(closure)
    poly = convex_hull_polygon(np.column_stack([ii, jj]).astype(float))
    ai, aj = np.meshgrid(np.arange(grid.shape[0]), np.arange(grid.shape[1]), indexing="ij")
    inside = np.ones(grid.shape, dtype=bool)
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        # integer coordinates make the orientation test exact
        inside &= (b[0] - a[0]) * (aj - a[1]) - (b[1] - a[1]) * (ai - a[0]) >= 0
    return inside


def concave_envelope(u_plus: GridFunction, method: str = "hull", tol_c: Optional[float] = None,
                     tol: Optional[float] = None, max_iter: int = 200_000, domain: str = "hull") -> EnvelopeResult:
    """Smallest concave function above ``u_plus`` on the convex hull of the domain.

    Parameters
    ----------
    u_plus : GridFunction
        Nonnegative data, zero outside the domain.
    method : {"hull", "iterative"}
        ``hull`` takes the upper convex hull of the graph points (exact up to
        rounding); ``iterative`` raises ``u_plus`` by repeated maxima of
        lattice-direction midpoint averages until the change drops below ``tol``.
    tol_c : float, optional
        Contact tolerance; defaults to ``10 eps max(u_plus)`` for hull and
        ``1e-8 max(u_plus)`` for iterative.
    domain : {"hull", "box"}
        ``hull`` works on the nodes in the convex hull of the closed domain,
        ``box`` on the whole bounding box. Nodes outside keep ``u_plus`` and are
        never contact nodes.
    """
    if method not in METHODS:
        raise ValueError(f"unknown envelope method {method!r}")
    z = np.asarray(u_plus.values, dtype=float)
    if np.any(z < 0):
        raise ValueError("concave_envelope expects a nonnegative function")
    if domain not in ("hull", "box"):
        raise ValueError(f"unknown envelope domain {domain!r}")
    inside = hull_nodes(u_plus.grid) if domain == "hull" else np.ones(z.shape, dtype=bool)
    scale = float(z[inside].max())
    iterations = 0
    if scale == float(z[inside].min()):
        gamma = z.copy()
    elif method == "hull":
        gamma = _hull_envelope(z, inside)
    else:
        gamma, iterations = _iterative_envelope(z, inside, 1e-12 * scale if tol is None else tol, max_iter)
    gamma = np.where(inside, np.clip(gamma, z, scale), z)
    # plane intercepts carry rounding; values that close to the data are the data
    gamma = np.where(gamma - z <= 16 * np.finfo(float).eps * scale, z, gamma)
    if tol_c is None:
        tol_c = (10 * np.finfo(float).eps if method == "hull" else 1e-8) * scale
    contact = (np.abs(gamma - z) <= tol_c) & inside
    return EnvelopeResult(GridFunction(u_plus.grid, gamma, "gamma"), u_plus, contact, float(tol_c),
                          method, iterations, degenerate=scale == 0.0, domain=domain)


def contact_set(env: EnvelopeResult) -> np.ndarray:
    """Nodes where the envelope touches ``u_plus``."""
    if env.degenerate:
        warnings.warn("u_plus vanishes identically; every node is a contact node", stacklevel=2)
    return env.contact.copy()


def level_band_sup(w: GridFunction, u_plus: GridFunction, tau: float, delta: float, mask=None) -> float:
    """Supremum of ``w`` over ``{|u_plus - tau| <= delta}`` intersected with ``mask``.

    An empty band yields 0 and a warning.
    """
    if not delta > 0:
        raise ValueError("band half-width must be positive")
    band = np.abs(u_plus.values - tau) <= delta
    if mask is not None:
        band &= np.asarray(mask, dtype=bool)
    if not band.any():
        warnings.warn(f"empty level band at tau={tau:g} (half-width {delta:g})", stacklevel=2)
        return 0.0
    return float(w.values[band].max())


def level_band_geometry(env: EnvelopeResult, levels: int = 8) -> list[dict]:
    """Per-level node count and smallest envelope slope on bands of ``gamma``.

    Levels are the midpoints of ``levels`` equal slices of ``(0, max gamma)``;
    the slope is the central-difference gradient magnitude, reported over
    band nodes other than the argmax and away from the bounding-box edge.
    """
    grid = env.gamma.grid
    g = env.gamma.values
    top = float(g.max())
    if top <= 0:
        return []
    delta = top / levels
    grad = np.linalg.norm(gradient_array(g, grid.spacing), axis=-1)
    away = np.zeros(g.shape, dtype=bool)
    away[_inner(grid.ndim)] = True
    away &= g < top
    rows = []
    for k in range(levels):
        tau = (k + 0.5) * delta
        band = np.abs(g - tau) <= 0.5 * delta
        inner = band & away
        rows.append({"tau": tau, "count": int(band.sum()),
                     "min_slope": float(grad[inner].min()) if inner.any() else float("nan")})
    return rows


def curvature_divergence(gamma: GridFunction, node, eps_g: float = 1e-8) -> float:
    """Divergence of ``D gamma / |D gamma|`` at ``node`` by central differences.

    The unit gradient is formed at the axis neighbours from their own central
    gradients, so the node needs two cells of margin inside the bounding box.
    For concave ``gamma`` the value is minus the sum of level-curve curvatures.
    """
    grid = gamma.grid
    node = tuple(int(i) for i in np.atleast_1d(node))
    if any(i < 2 or i > s - 3 for i, s in zip(node, grid.shape)):
        raise ValueError(f"node {node} needs two cells of margin inside the grid")
    h = grid.spacing
    n = grid.ndim
    block = gamma.values[tuple(slice(i - 2, i + 3) for i in node)]
    grad = gradient_array(block, h)
    centre = (2,) * n
    if np.linalg.norm(grad[centre]) < eps_g:
        raise ValueError(f"gradient vanishes at node {node}")
    total = 0.0
    for k in range(n):
        ends = []
        for s in (1, -1):
            idx = list(centre)
            idx[k] += s
            g = grad[tuple(idx)]
            norm = np.linalg.norm(g)
            if norm < eps_g:
                raise ValueError(f"gradient vanishes next to node {node}")
            ends.append(g[k] / norm)
        total += (ends[0] - ends[1]) / (2 * h)
    return float(total)


def contact_hull_polygon(env: EnvelopeResult, mask=None) -> np.ndarray:
    """Counter-clockwise hull of the contact nodes (restricted to ``mask``, default the closed domain)."""
    grid = env.gamma.grid
    if grid.ndim != 2:
        raise ValueError("contact hull polygons are planar")
    sel = env.contact & (grid.closure if mask is None else np.asarray(mask, dtype=bool))
    return convex_hull_polygon(grid.points[sel])


def gauss_bonnet_check(vertices) -> float:
    """Total exterior turning angle of a convex polygon given by ordered vertices.

    Orientation is normalized to counter-clockwise, so the result is ``2 pi``
    up to rounding.
    """
    v = np.asarray(vertices, dtype=float).reshape(-1, 2)
    if len(v) < 3:
        raise ValueError("polygon needs at least three vertices")
    edges = np.roll(v, -1, axis=0) - v
    area2 = float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))
    scale = float(np.max(np.abs(v - v.mean(axis=0)))) or 1.0
    if abs(area2) <= 1e-12 * scale ** 2:
        raise ValueError("degenerate polygon: vertices are collinear")
    if area2 < 0:
        edges = -edges[::-1]
    nxt = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    dot = np.sum(edges * nxt, axis=1)
    return float(np.sum(np.arctan2(cross, dot)))
