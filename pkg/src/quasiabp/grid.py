"""Uniform grids with their grid functions and discrete calculus primitives."""
from __future__ import annotations

import csv
import io
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

EXTERIOR, INTERIOR, BOUNDARY = 0, 1, 2


class Grid:
    """Uniform grid of dimension 1 or 2 carrying a domain mask.

    Node labels are ``INTERIOR`` (inside the open domain), ``BOUNDARY``
    (discrete boundary: outside nodes touching an interior node) and
    ``EXTERIOR``. Arrays use ``ij`` indexing, so axis ``k`` is coordinate ``k``.
    """

    def __init__(self, lower: Sequence[float], spacing: float, labels: np.ndarray):
        labels = np.array(labels, dtype=np.int8)
        if labels.ndim not in (1, 2):
            raise ValueError("only dimensions 1 and 2 are supported")
        if spacing <= 0:
            raise ValueError("spacing must be positive")
        if len(lower) != labels.ndim:
            raise ValueError("lower corner does not match the label array dimension")
        self.lower = tuple(float(v) for v in lower)
        self.spacing = float(spacing)
        labels.setflags(write=False)
        self.labels = labels
        edge = np.zeros(labels.shape, dtype=bool)
        for ax in range(labels.ndim):
            idx = [slice(None)] * labels.ndim
            idx[ax] = 0
            edge[tuple(idx)] = True
            idx[ax] = -1
            edge[tuple(idx)] = True
        if np.any(edge & (labels == INTERIOR)):
            raise ValueError("interior nodes must not touch the bounding box edge")
        if not np.any(labels == INTERIOR):
            raise ValueError("domain has no interior nodes")

    # construction -------------------------------------------------------
    @classmethod
    def from_inside(cls, lower, spacing, inside: np.ndarray) -> "Grid":
        """Label ``inside`` nodes interior and their outside neighbours boundary."""
        inside = np.asarray(inside, dtype=bool)
        near = np.zeros_like(inside)
        padded = np.pad(inside, 1)
        for offset in np.ndindex(*(3,) * inside.ndim):
            sl = tuple(slice(o, o + s) for o, s in zip(offset, inside.shape))
            near |= padded[sl]
        labels = np.where(inside, INTERIOR, np.where(near, BOUNDARY, EXTERIOR))
        return cls(lower, spacing, labels)

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float], num: int) -> "Grid":
        """Box domain; the frame nodes are the boundary."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        widths = upper - lower
        if not np.allclose(widths, widths[0]):
            raise ValueError("box grids use equal spacing: give a square box")
        h = widths[0] / (num - 1)
        labels = np.full((num,) * len(lower), BOUNDARY, dtype=np.int8)
        labels[(slice(1, -1),) * len(lower)] = INTERIOR
        return cls(lower, h, labels)

    @classmethod
    def ball(cls, center: Sequence[float], radius: float, num: int, margin: int = 0) -> "Grid":
        """Ball domain on the box ``center +- radius`` sampled with ``num`` nodes per axis.

        ``margin`` extra node layers are added on every side.
        """
        center = np.atleast_1d(np.asarray(center, dtype=float))
        h = 2.0 * radius / (num - 1)
        lower = center - radius - margin * h
        total = num + 2 * margin
        axes = [lower[k] + h * np.arange(total) for k in range(len(center))]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        r2 = np.sum((mesh - center) ** 2, axis=-1)
        inside = r2 < radius ** 2 * (1 - 1e-10)
        return cls.from_inside(lower, h, inside)

    # geometry -----------------------------------------------------------
    @property
    def ndim(self) -> int:
        return self.labels.ndim

    @property
    def shape(self) -> tuple:
        return self.labels.shape

    @cached_property
    def interior(self) -> np.ndarray:
        return _frozen(self.labels == INTERIOR)

    @cached_property
    def boundary(self) -> np.ndarray:
        return _frozen(self.labels == BOUNDARY)

    @cached_property
    def closure(self) -> np.ndarray:
        return _frozen(self.labels != EXTERIOR)

    @cached_property
    def axes(self) -> list:
        return [self.lower[k] + self.spacing * np.arange(n) for k, n in enumerate(self.shape)]

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``grid.shape + (ndim,)``."""
        return _frozen(np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1))

    def point(self, node) -> np.ndarray:
        return self.points[tuple(node)]

    @cached_property
    def diameter(self) -> float:
        """Largest distance between two closure nodes."""
        return diameter(self.points[self.closure])

    def distance_to_boundary(self) -> np.ndarray:
        """Euclidean distance from every node to the nearest boundary node."""
        from scipy.ndimage import distance_transform_edt
        return distance_transform_edt(~self.boundary, sampling=self.spacing)

    def __repr__(self) -> str:
        return (f"Grid(shape={self.shape}, h={self.spacing:g}, "
                f"interior={int(self.interior.sum())}, boundary={int(self.boundary.sum())})")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class GridFunction:
    """Finite values on every node of a grid."""

    __slots__ = ("grid", "values", "label")

    def __init__(self, grid: Grid, values, label: str = ""):
        self.grid = grid
        self.label = label
        self.values = self._checked(values)

    def _checked(self, values) -> np.ndarray:
        arr = np.array(np.broadcast_to(np.asarray(values, dtype=float), self.grid.shape), dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"grid function {self.label!r} has non-finite values")
        return arr

    @classmethod
    def from_callable(cls, grid: Grid, func: Callable[[np.ndarray], np.ndarray], label: str = "") -> "GridFunction":
        return cls(grid, func(grid.points), label)

    def update(self, values) -> None:
        """Replace all values (validated)."""
        self.values = self._checked(values)

    def copy(self, label: Optional[str] = None) -> "GridFunction":
        return GridFunction(self.grid, self.values, self.label if label is None else label)

    def __getitem__(self, node):
        return self.values[tuple(node)] if not isinstance(node, (int, np.integer)) else self.values[node]

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.grid, -self.values, f"-{self.label}")

    # serialization ------------------------------------------------------
    def to_csv(self, path=None) -> str:
        """CSV text with one ``x[,y],value`` row per node (C order, 17 digits)."""
        names = ["x", "y"][: self.grid.ndim] + ["value"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(names)
        pts = self.grid.points.reshape(-1, self.grid.ndim)
        for p, v in zip(pts, self.values.ravel()):
            writer.writerow([format_float(c) for c in p] + [format_float(v)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, grid: Grid, source, label: str = "") -> "GridFunction":
        """Load values written by :meth:`to_csv` onto ``grid`` (coordinates are verified)."""
        if hasattr(source, "read"):
            text = source.read()
        elif isinstance(source, str) and "\n" in source:
            text = source
        else:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        body = np.array([[float(c) for c in row] for row in rows[1:]], dtype=float)
        if body.shape != (grid.points[..., 0].size, grid.ndim + 1):
            raise ValueError("CSV row count or width does not match the grid")
        pts = grid.points.reshape(-1, grid.ndim)
        if not np.allclose(body[:, :-1], pts, rtol=0, atol=1e-9 * max(1.0, np.abs(pts).max())):
            raise ValueError("CSV coordinates do not match the grid nodes")
        return cls(grid, body[:, -1].reshape(grid.shape), label)


def format_float(v: float) -> str:
    """Decimal text with 17 significant digits (round-trips exactly)."""
    return "%.17g" % float(v)


# ---------------------------------------------------------------------------
# node-set operations

def positive_part_extend(u: GridFunction) -> GridFunction:
    """``max(u, 0)`` on the closed domain and 0 on exterior nodes."""
    v = u.values
    vals = np.where(u.grid.closure & (v > 0), v, 0.0)
    return GridFunction(u.grid, vals, f"{u.label}+" if u.label else "u+")


def sup_over(u: GridFunction, mask) -> float:
    """Maximum of ``u`` over the nodes selected by ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty mask")
    return float(u.values[mask].max())


def boundary_sup(u: GridFunction) -> float:
    return sup_over(u, u.grid.boundary)


# ---------------------------------------------------------------------------
# central differences; array forms fill the bounding-box edge with zeros

def _inner(ndim: int, shift: Sequence[int] = None):
    shift = shift or (0,) * ndim
    return tuple(slice(1 + s, (-1 + s) or None) for s in shift)


def gradient_array(v: np.ndarray, h: float) -> np.ndarray:
    """Central gradient on all non-edge nodes; shape ``v.shape + (ndim,)``."""
    n = v.ndim
    out = np.zeros(v.shape + (n,))
    for k in range(n):
        plus = [0] * n
        plus[k] = 1
        minus = [0] * n
        minus[k] = -1
        out[_inner(n) + (k,)] = (v[_inner(n, plus)] - v[_inner(n, minus)]) / (2 * h)
    return out


def hessian_array(v: np.ndarray, h: float) -> np.ndarray:
    """Central Hessian on all non-edge nodes; shape ``v.shape + (ndim, ndim)``."""
    n = v.ndim
    out = np.zeros(v.shape + (n, n))
    c = v[_inner(n)]
    for k in range(n):
        e = [0] * n
        e[k] = 1
        out[_inner(n) + (k, k)] = (v[_inner(n, e)] - 2 * c + v[_inner(n, [-s for s in e])]) / h ** 2
    if n == 2:
        mixed = (v[_inner(2, (1, 1))] - v[_inner(2, (1, -1))]
                 - v[_inner(2, (-1, 1))] + v[_inner(2, (-1, -1))]) / (4 * h ** 2)
        out[_inner(2) + (0, 1)] = mixed
        out[_inner(2) + (1, 0)] = mixed
    return out


def _require_interior(u: GridFunction, node) -> tuple:
    node = tuple(int(i) for i in np.atleast_1d(node))
    if u.grid.labels[node] != INTERIOR:
        raise ValueError(f"node {node} is not an interior node")
    return node


def _local_block(u: GridFunction, node: tuple) -> np.ndarray:
    return u.values[tuple(slice(i - 1, i + 2) for i in node)]


def gradient_central(u: GridFunction, node) -> np.ndarray:
    node = _require_interior(u, node)
    return gradient_array(_local_block(u, node), u.grid.spacing)[(1,) * u.grid.ndim]


def hessian_central(u: GridFunction, node) -> np.ndarray:
    node = _require_interior(u, node)
    return hessian_array(_local_block(u, node), u.grid.spacing)[(1,) * u.grid.ndim]


# ---------------------------------------------------------------------------
# planar hulls and diameters

def convex_hull_polygon(points) -> np.ndarray:
    """Counter-clockwise hull vertices of planar points (monotone chain, collinear points dropped)."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def diameter(points) -> float:
    """Diameter of a point set: rotating calipers on the planar hull, max-min in 1D."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 or pts.shape[-1] == 1:
        flat = pts.ravel()
        return float(flat.max() - flat.min()) if flat.size else 0.0
    hull = convex_hull_polygon(pts)
    m = len(hull)
    if m == 1:
        return 0.0
    if m == 2:
        return float(np.linalg.norm(hull[1] - hull[0]))

    def area2(a, b, c):
        return abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    best = 0.0
    j = 1
    for i in range(m):
        a, b = hull[i], hull[(i + 1) % m]
        while area2(a, b, hull[(j + 1) % m]) > area2(a, b, hull[j]):
            j = (j + 1) % m
        # parallel edges leave two antipodal candidates
        for q in (hull[j], hull[(j + 1) % m]):
            best = max(best, np.linalg.norm(q - a), np.linalg.norm(q - b))
    return float(best)


def diameter_bruteforce(points) -> float:
    """O(N^2) diameter, used as an oracle."""
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    best = 0.0
    for p in pts:
        best = max(best, float(np.sqrt(np.max(np.sum((pts - p) ** 2, axis=1)))))
    return best
