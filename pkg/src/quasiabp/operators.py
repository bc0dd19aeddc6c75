"""Finite-difference realizations of the normalized diffusion operators and the equation residual.

Array forms evaluate on every node away from the bounding-box edge; node
forms evaluate the same stencils on a single interior node.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .fields import ScalarField, evaluate_scalar, ham_eval, psi_eval
from .grid import INTERIOR, GridFunction, _inner

DIFFUSIONS = ("p-finite", "infinity", "h-homogeneous", "variable-p")
CONVENTIONS = ("sum", "mean")
SCHEMES = ("aligned", "minmax")
MAGNITUDES = ("upwind", "central")


@dataclass(frozen=True)
class OperatorConfig:
    """Choice of diffusion and of its discretization.

    Parameters
    ----------
    diffusion : str
        ``p-finite``, ``infinity``, ``h-homogeneous`` or ``variable-p``.
    p : float
        Exponent for ``p-finite``.
    p_field : float or callable, optional
        Exponent field for ``variable-p``.
    homogeneity : float
        The ``h`` in ``|Du|**(2-h)`` times the normalized infinity-Laplacian, in [0, 2].
    convention : str
        ``sum`` gives ``Lap u + (p-2) LapInf u``; ``mean`` divides that by ``p``.
    scheme : str
        ``aligned`` contracts the central Hessian with the unit gradient;
        ``minmax`` is the monotone max-plus-min stencil.
    eps_g : float
        Gradient magnitudes below this are treated as vanishing.
    directions : int
        Number of unit directions in the 2D minmax stencil.
    magnitude : str
        ``upwind`` takes the larger one-sided difference per axis when
        measuring ``|Du|`` for Psi and the homogeneity factor; ``central``
        uses the central gradient.
    """

    diffusion: str = "infinity"
    p: float = 2.0
    p_field: Optional[ScalarField] = None
    homogeneity: float = 2.0
    convention: str = "mean"
    scheme: str = "aligned"
    eps_g: float = 1e-8
    directions: int = 16
    magnitude: str = "upwind"

    def __post_init__(self):
        if self.diffusion not in DIFFUSIONS:
            raise ValueError(f"unknown diffusion {self.diffusion!r}; expected one of {DIFFUSIONS}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.magnitude not in MAGNITUDES:
            raise ValueError(f"unknown magnitude {self.magnitude!r}")
        if not self.eps_g > 0:
            raise ValueError("eps_g must be positive")
        if self.diffusion == "p-finite" and not (1 < self.p < np.inf):
            raise ValueError("p-finite diffusion needs 1 < p < inf")
        if self.diffusion == "variable-p" and self.p_field is None:
            raise ValueError("variable-p diffusion needs p_field")
        if self.diffusion == "h-homogeneous" and not (0 <= self.homogeneity <= 2):
            raise ValueError("homogeneity h must lie in [0, 2]")
        if self.directions < 4 or self.directions % 4:
            raise ValueError("directions must be a positive multiple of 4")

    def p_values(self, points: np.ndarray) -> np.ndarray:
        """Exponent at each point for the p-type diffusions."""
        if self.diffusion == "variable-p":
            vals = evaluate_scalar(self.p_field, points)
            if not (np.all(vals > 1) and np.all(np.isfinite(vals))):
                raise ValueError("variable exponent must satisfy 1 < p(x) < inf on all nodes")
            return vals
        return np.full(points.shape[:-1], float(self.p))

    def anisotropy(self, points: Optional[np.ndarray] = None) -> float:
        """Largest ``1 + |p - 2|`` over the domain (1 for the infinity-type diffusions)."""
        if self.diffusion == "p-finite":
            return 1.0 + abs(self.p - 2.0)
        if self.diffusion == "variable-p":
            return 1.0 + float(np.max(np.abs(self.p_values(points) - 2.0)))
        return 1.0

    def spectral_bound(self, ndim: int, points: Optional[np.ndarray] = None) -> float:
        """Upper bound, in units of ``1/h**2``, on the symbol of the discrete diffusion.

        The Laplacian stencil contributes at most ``4 n`` and the aligned or
        minmax infinity stencil at most 4, so the p-type operators are bounded
        by ``4 n + 4 max(p - 2, 0)`` (divided by ``p`` in the mean convention).
        """
        if self.diffusion in ("infinity", "h-homogeneous"):
            return 4.0
        p = np.atleast_1d(self.p_values(points) if self.diffusion == "variable-p" else self.p)
        bound = 4.0 * ndim + 4.0 * np.maximum(p - 2.0, 0.0)
        if self.convention == "mean":
            bound = bound / p
        return float(np.max(bound))


# ---------------------------------------------------------------------------
# array kernels

def laplacian_array(v: np.ndarray, h: float) -> np.ndarray:
    n = v.ndim
    out = np.zeros(v.shape)
    c = v[_inner(n)]
    acc = -2.0 * n * c
    for k in range(n):
        e = [0] * n
        e[k] = 1
        acc = acc + v[_inner(n, e)] + v[_inner(n, [-s for s in e])]
    out[_inner(n)] = acc / h ** 2
    return out


def _snap(c: float) -> float:
    r = round(c)
    return float(r) if abs(c - r) < 1e-14 else c


def minmax_samples(v: np.ndarray, directions: int) -> np.ndarray:
    """Bilinear samples of ``v`` at distance one cell along each stencil direction.

    Returns shape ``(directions,) + inner shape``.
    """
    if v.ndim == 1:
        return np.stack([v[_inner(1, (1,))], v[_inner(1, (-1,))]])
    out = []
    for k in range(directions):
        ang = 2 * np.pi * k / directions
        cx, cy = _snap(np.cos(ang)), _snap(np.sin(ang))
        ax = min(int(np.floor(cx)), 0)
        ay = min(int(np.floor(cy)), 0)
        fx, fy = cx - ax, cy - ay
        sample = np.zeros(tuple(s - 2 for s in v.shape))
        for dx, wx in ((ax, 1 - fx), (ax + 1, fx)):
            for dy, wy in ((ay, 1 - fy), (ay + 1, fy)):
                w = wx * wy
                if w != 0.0:
                    sample = sample + w * v[_inner(2, (dx, dy))]
        out.append(sample)
    return np.stack(out)


class Terms(NamedTuple):
    """Pieces of the equation on the inner region (all nodes off the bounding-box edge)."""

    grad: np.ndarray        # central gradient, shape (n,) + inner shape
    magnitude: np.ndarray   # |Du| fed to Psi and to the homogeneity factor, clamped to eps_g
    diffusion: np.ndarray   # configured diffusion operator (without Psi)
    weight: np.ndarray      # homogeneity factor multiplying the normalized operator (1 otherwise)


def inner_terms(v: np.ndarray, h: float, cfg: OperatorConfig, p_inner=None) -> Terms:
    """Gradient quantities and the diffusion on the inner region of ``v``."""
    n = v.ndim
    c = v[_inner(n)]
    fwd, bwd = [], []
    for k in range(n):
        e = [0] * n
        e[k] = 1
        fwd.append(v[_inner(n, e)])
        bwd.append(v[_inner(n, [-s for s in e])])
    grad = np.stack([(a - b) / (2 * h) for a, b in zip(fwd, bwd)])
    second = [(a - 2 * c + b) / h ** 2 for a, b in zip(fwd, bwd)]
    lap = second[0] if n == 1 else second[0] + second[1]
    if cfg.magnitude == "upwind":
        acc = 0.0
        for a, b in zip(fwd, bwd):
            acc = acc + np.maximum(np.abs(a - c), np.abs(c - b)) ** 2
        mag = np.sqrt(acc) / h
    else:
        mag = np.sqrt(np.sum(grad ** 2, axis=0))
    mag = np.maximum(mag, cfg.eps_g)
    if cfg.scheme == "minmax":
        samples = minmax_samples(v, cfg.directions)
        inf = (samples.max(axis=0) + samples.min(axis=0) - 2 * c) / h ** 2
    elif n == 1:
        inf = second[0]
    else:
        mixed = (v[_inner(2, (1, 1))] - v[_inner(2, (1, -1))]
                 - v[_inner(2, (-1, 1))] + v[_inner(2, (-1, -1))]) / (4 * h ** 2)
        gmag = np.sqrt(grad[0] ** 2 + grad[1] ** 2)
        ok = gmag >= cfg.eps_g
        safe = np.where(ok, gmag, 1.0)
        d0, d1 = grad[0] / safe, grad[1] / safe
        along = d0 * d0 * second[0] + 2 * d0 * d1 * mixed + d1 * d1 * second[1]
        inf = np.where(ok, along, 0.5 * lap)
    weight = np.ones_like(c)
    if cfg.diffusion == "infinity":
        diff = inf
    elif cfg.diffusion == "h-homogeneous":
        weight = mag ** (2.0 - cfg.homogeneity)
        diff = weight * inf
    else:
        p = cfg.p if p_inner is None else p_inner
        diff = lap + (p - 2.0) * inf
        if cfg.convention == "mean":
            diff = diff / p
    return Terms(grad, mag, diff, weight)


def inf_normalized_array(v: np.ndarray, h: float, cfg: OperatorConfig) -> np.ndarray:
    """Normalized infinity-Laplacian on all non-edge nodes (zeros on the edge)."""
    cfg_inf = OperatorConfig(**{**cfg.__dict__, "diffusion": "infinity"})
    return _embed(v, inner_terms(v, h, cfg_inf).diffusion)


def _embed(v: np.ndarray, inner: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape)
    out[_inner(v.ndim)] = inner
    return out


def _inner_of(a: Optional[np.ndarray], ndim: int):
    return None if a is None else a[_inner(ndim)]


# ---------------------------------------------------------------------------
# node / grid-function API

def _at(u: GridFunction, node, full: np.ndarray):
    if node is None:
        return np.where(u.grid.interior, full, 0.0)
    node = tuple(int(i) for i in np.atleast_1d(node))
    if u.grid.labels[node] != INTERIOR:
        raise ValueError(f"node {node} is not an interior node")
    return float(full[node])


def laplacian(u: GridFunction, node=None):
    """Standard five-point (three-point in 1D) Laplacian."""
    return _at(u, node, laplacian_array(u.values, u.grid.spacing))


def inf_laplacian_normalized(u: GridFunction, node=None, cfg: OperatorConfig = OperatorConfig()):
    """Normalized infinity-Laplacian at ``node`` (or on all interior nodes when ``node`` is None)."""
    return _at(u, node, inf_normalized_array(u.values, u.grid.spacing, cfg))


def _diffusion_full(u: GridFunction, cfg: OperatorConfig) -> np.ndarray:
    p_vals = cfg.p_values(u.grid.points) if cfg.diffusion == "variable-p" else None
    terms = inner_terms(u.values, u.grid.spacing, cfg, _inner_of(p_vals, u.grid.ndim))
    return _embed(u.values, terms.diffusion)


def p_laplacian_normalized(u: GridFunction, node=None, cfg: OperatorConfig = OperatorConfig(diffusion="p-finite")):
    """Normalized p-Laplacian in the configured convention."""
    if cfg.diffusion not in ("p-finite", "variable-p"):
        raise ValueError("p_laplacian_normalized needs a p-finite or variable-p configuration")
    return _at(u, node, _diffusion_full(u, cfg))


def inf_laplacian_h(u: GridFunction, node=None, cfg: OperatorConfig = OperatorConfig(diffusion="h-homogeneous")):
    """``|Du|**(2-h)`` times the normalized infinity-Laplacian."""
    if cfg.diffusion != "h-homogeneous":
        cfg = OperatorConfig(**{**cfg.__dict__, "diffusion": "h-homogeneous"})
    return _at(u, node, _diffusion_full(u, cfg))


def diffusion_operator(u: GridFunction, node=None, cfg: OperatorConfig = OperatorConfig()):
    """Whichever diffusion ``cfg`` selects."""
    return _at(u, node, _diffusion_full(u, cfg))


class _Layout(NamedTuple):
    inner_mask: np.ndarray   # mask restricted to the inner region
    points: np.ndarray       # coordinates of the mask nodes
    p_inner: Optional[np.ndarray]  # exponent field on the inner region (variable-p only)


_LAYOUTS: dict = {}


def _layout(ps, mask: np.ndarray) -> _Layout:
    key = (id(ps), mask.tobytes())
    hit = _LAYOUTS.get(key)
    if hit is not None and hit[0] is ps:
        return hit[1]
    grid = ps.grid
    if np.any(mask & ~grid.interior):
        raise ValueError("equation nodes must be interior nodes")
    inner_mask = mask[_inner(grid.ndim)]
    p_inner = None if ps.p_values is None else np.where(grid.closure, ps.p_values, 2.0)[_inner(grid.ndim)]
    lay = _Layout(inner_mask, grid.points[mask], p_inner)
    if len(_LAYOUTS) > 64:
        _LAYOUTS.clear()
    _LAYOUTS[key] = (ps, lay)
    return lay


def equation_parts(ps, values: np.ndarray, mask: np.ndarray):
    """Psi, diffusion, Hamiltonian and homogeneity weight at the ``mask`` nodes.

    Returns ``(psi, diffusion, ham, weight, grad)``; the first four are flat
    arrays in mask order and ``grad`` has shape ``(count, n)``.
    """
    grid = ps.grid
    lay = _layout(ps, mask)
    n = grid.ndim
    sel = lay.inner_mask
    terms = inner_terms(values, grid.spacing, ps.operator, lay.p_inner)
    diff = terms.diffusion
    grad = np.stack([terms.grad[k][sel] for k in range(n)], axis=-1)
    mag = terms.magnitude[sel]
    psi = _psi_values(ps.psi, lay.points, mag)
    ham = _ham_values(ps.hamiltonian, lay.points, grad)
    weight = terms.weight[sel] if ps.operator.diffusion == "h-homogeneous" else 1.0
    return psi, diff[sel], ham, weight, grad


def _psi_values(field, pts, mag):
    if field.kind == "constant-power" and not callable(field.p_hat) and field.p_hat == 0 \
            and field.bounds is None:
        return np.ones(mag.shape)
    return psi_eval(field, pts, mag)


def _ham_values(ham, pts, grad):
    if ham.kind == "zero":
        return np.zeros(grad.shape[0])
    return ham_eval(ham, pts, grad)


def residual(ps, u: GridFunction, node=None, f_values: Optional[np.ndarray] = None):
    """``-Psi(x,|Du|) D(u) + H(x, Du) - f`` at ``node`` or on every interior node.

    Negative values mark a discrete subsolution, positive a supersolution.
    ``f_values`` overrides the right-hand side of ``ps``.
    """
    f = ps.f_values if f_values is None else f_values
    mask = u.grid.interior
    psi, diff, ham, _, _ = equation_parts(ps, u.values, mask)
    full = np.zeros(u.grid.shape)
    full[mask] = -psi * diff + ham - f[mask]
    return _at(u, node, full)
