"""Finite differences, Jacobian blocks, fiber seminorms and Gauss-Legendre quadrature.

Evaluators are vectorized callables: they take an array of points of shape
(N, d) and return (N,) or (N, k). All results here are reduced in a fixed
order so that repeated runs give bit-identical numbers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

MAX_SEMINORM_ORDER = 3

# central stencils as {offset in steps: weight}; divide by step**order
_STENCILS = {
    0: {0: 1.0},
    1: {-1: -0.5, 1: 0.5},
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
}
_BASE_STEP = {1: 1e-5, 2: 1e-4, 3: 1e-3}


class SeminormOrderError(ValueError):
    pass


def default_step(order: int, coordinate=0.0):
    """Step used for a derivative of total ``order`` at ``coordinate``.

    Scaled by max(1, |coordinate|) so large coordinates keep relative accuracy.
    """
    if order not in _BASE_STEP:
        raise ValueError(f"unsupported derivative order {order}")
    return _BASE_STEP[order] * np.maximum(1.0, np.abs(coordinate))


def _as_2d_output(values, n):
    out = np.asarray(values, dtype=float)
    if out.ndim == 1:
        out = out.reshape(n, 1) if out.shape[0] == n else out.reshape(1, -1)
    return out.reshape(n, -1)


def derivative(f, points, alpha: Sequence[int], step=None) -> np.ndarray:
    """Mixed partial d^alpha f at every point; returns (N, k).

    ``alpha`` is a multi-index over the point's coordinates. The stencil is the
    tensor product of the 1-D central stencils; its step follows the total order
    unless ``step`` is given.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = pts.shape
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != d:
        raise ValueError(f"multi-index length {len(alpha)} != point dimension {d}")
    total = sum(alpha)
    if total == 0:
        return _as_2d_output(f(pts), n)
    if total > MAX_SEMINORM_ORDER or any(a > 3 for a in alpha):
        raise ValueError(f"derivative order {total} not supported")
    if step is not None and np.any(np.asarray(step) <= 0):
        raise ValueError("finite-difference step must be positive")

    axes = [i for i, a in enumerate(alpha) if a > 0]
    steps = {}
    for i in axes:
        steps[i] = default_step(total, pts[:, i]) if step is None else np.broadcast_to(
            np.asarray(step, dtype=float), (n,)
        )
    stencils = [list(_STENCILS[alpha[i]].items()) for i in axes]
    acc = None
    for combo in itertools.product(*stencils):
        shifted = pts.copy()
        weight = 1.0
        for i, (offset, w) in zip(axes, combo):
            shifted[:, i] += offset * steps[i]
            weight *= w
        term = weight * _as_2d_output(f(shifted), n)
        acc = term if acc is None else acc + term
    denom = np.ones(n)
    for i in axes:
        denom = denom * steps[i] ** alpha[i]
    return acc / denom[:, None]


def partial_fd(f, point, axis: int, order: int = 1, step=None):
    """Central-difference partial derivative of ``order`` along ``axis``.

    Scalar-valued f at a single point gives a float; otherwise an array.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    if step is not None and step <= 0:
        raise ValueError("finite-difference step must be positive")
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    alpha = [0] * pts.shape[1]
    alpha[axis] = order
    out = derivative(f, pts, alpha, step)
    if single:
        out = out[0]
        return float(out[0]) if out.size == 1 else out
    return out[:, 0] if out.shape[1] == 1 else out


def jacobian(f, points, step=None) -> np.ndarray:
    """Jacobian by first-order central differences; returns (N, k, d)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = pts.shape[1]
    cols = []
    for i in range(d):
        alpha = [0] * d
        alpha[i] = 1
        cols.append(derivative(f, pts, alpha, step))
    if not cols:
        k = _as_2d_output(f(pts), len(pts)).shape[1]
        return np.zeros((len(pts), k, 0))
    return np.stack(cols, axis=-1)


@dataclass
class JacobianBlocks:
    """Blocks of (P Q; R S): base->base, fiber->base, base->fiber, fiber->fiber.

    Arrays carry a leading point axis when computed on a batch.
    """

    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray

    def full(self) -> np.ndarray:
        top = np.concatenate([self.P, self.Q], axis=-1)
        bottom = np.concatenate([self.R, self.S], axis=-1)
        return np.concatenate([top, bottom], axis=-2)

    def __getitem__(self, i) -> "JacobianBlocks":
        return JacobianBlocks(self.P[i], self.Q[i], self.R[i], self.S[i])


def split_blocks(J: np.ndarray, src_base: int, tgt_base: int) -> JacobianBlocks:
    return JacobianBlocks(
        P=J[..., :tgt_base, :src_base],
        Q=J[..., :tgt_base, src_base:],
        R=J[..., tgt_base:, :src_base],
        S=J[..., tgt_base:, src_base:],
    )


def jacobian_blocks(h, x, v=None, step=None) -> JacobianBlocks:
    """P, Q, R, S blocks of a bundle map at one point or a batch.

    ``h`` needs ``source``/``target`` bundles and a ``stacked(w)`` evaluator on
    concatenated coordinates. ``x`` may be a BundlePoint, in which case the
    blocks are returned without the batch axis.
    """
    from .bundle import BundlePoint, as_points

    single = isinstance(x, BundlePoint) or (v is not None and np.ndim(v) == 1)
    xs, vs = as_points(x, v, h.source.base_dim, h.source.fiber_dim)
    J = jacobian(h.stacked, np.hstack([xs, vs]), step)
    blocks = split_blocks(J, h.source.base_dim, h.target.base_dim)
    return blocks[0] if single else blocks


# --- compact sets and seminorms ------------------------------------------


@dataclass(frozen=True)
class SampleGrid:
    """Tensor grid over a box; stands in for a compact set K.

    Points are enumerated row-major (last axis fastest).
    """

    ranges: tuple
    counts: tuple

    def __post_init__(self):
        ranges = tuple((float(lo), float(hi)) for lo, hi in self.ranges)
        counts = tuple(int(c) for c in self.counts)
        if len(ranges) != len(counts):
            raise ValueError("ranges and counts differ in length")
        if any(c < 2 for c in counts):
            raise ValueError("each axis needs at least 2 points")
        if any(lo > hi for lo, hi in ranges):
            raise ValueError("empty range")
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "counts", counts)

    @property
    def dim(self) -> int:
        return len(self.ranges)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts)) if self.counts else 1

    @property
    def spacing(self) -> tuple:
        return tuple((hi - lo) / (c - 1) for (lo, hi), c in zip(self.ranges, self.counts))

    def axes(self):
        return [np.linspace(lo, hi, c) for (lo, hi), c in zip(self.ranges, self.counts)]

    def points(self) -> np.ndarray:
        if not self.ranges:
            return np.zeros((1, 0))
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dim)

    def refined(self, factor: int = 2) -> "SampleGrid":
        return SampleGrid(self.ranges, tuple((c - 1) * factor + 1 for c in self.counts))

    def to_json(self) -> dict:
        return {"ranges": [list(r) for r in self.ranges], "counts": list(self.counts)}


def _grid_points(K) -> np.ndarray:
    if isinstance(K, SampleGrid):
        return K.points()
    return np.atleast_2d(np.asarray(K, dtype=float))


def multi_indices(axes: Sequence[int], order: int, dim: int):
    """Distinct multi-indices of total ``order`` over ``axes``, lexicographic."""
    out = []
    for combo in itertools.combinations_with_replacement(sorted(axes), order):
        alpha = [0] * dim
        for i in combo:
            alpha[i] += 1
        out.append(tuple(alpha))
    return out


def seminorm(f, r: int, K, fiber_axes_only: bool = True, base_dim: int = 0) -> float:
    """Sum over |alpha| = r and output components of sup_K |d^alpha f_i|.

    With ``fiber_axes_only`` the derivatives run over the coordinates after the
    first ``base_dim`` ones; otherwise over all coordinates.
    """
    if r < 0 or r > MAX_SEMINORM_ORDER:
        raise SeminormOrderError(f"seminorm order {r} unsupported (0..{MAX_SEMINORM_ORDER})")
    pts = _grid_points(K)
    d = pts.shape[1]
    axes = range(base_dim, d) if fiber_axes_only else range(d)
    total = 0.0
    for alpha in multi_indices(axes, r, d):
        vals = derivative(f, pts, alpha)
        total += float(np.sum(np.max(np.abs(vals), axis=0)))
    return total


def norm_r(f, r: int, K, fiber_axes_only: bool = True, base_dim: int = 0) -> float:
    """Sum of seminorms of orders 0..r."""
    if r < 0 or r > MAX_SEMINORM_ORDER:
        raise SeminormOrderError(f"norm order {r} unsupported (0..{MAX_SEMINORM_ORDER})")
    return sum(seminorm(f, l, K, fiber_axes_only, base_dim) for l in range(r + 1))


# --- quadrature ------------------------------------------------------------


@lru_cache(maxsize=64)
def _leggauss(n: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gl_nodes(n: int, a: float = 0.0, b: float = 1.0):
    """Gauss-Legendre nodes and weights mapped to [a, b]."""
    if n < 1:
        raise ValueError("need at least one node")
    if a > b:
        raise ValueError("integration bounds must satisfy a <= b")
    x, w = _leggauss(int(n))
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


def gauss_legendre(integrand, a: float, b: float, nodes: int = 32):
    """Integrate ``integrand`` over [a, b] with an n-node Gauss-Legendre rule.

    The integrand is called once with the array of nodes; scalar-only callables
    fall back to one call per node.
    """
    s, w = gl_nodes(nodes, a, b)
    try:
        vals = np.asarray(integrand(s), dtype=float)
    except TypeError:
        vals = None
    if vals is None or vals.shape[:1] != (len(s),):
        vals = np.array([integrand(float(si)) for si in s], dtype=float)
    out = np.tensordot(w, vals, axes=(0, 0))
    return float(out) if np.ndim(out) == 0 else out


__all__ = [
    "JacobianBlocks", "MAX_SEMINORM_ORDER", "SampleGrid", "SeminormOrderError",
    "default_step", "derivative", "gauss_legendre", "gl_nodes", "jacobian",
    "jacobian_blocks", "multi_indices", "norm_r", "partial_fd", "seminorm",
    "split_blocks",
]
