"""Homogeneous functions, grid labeling of level-set components, leaf checks.

Leaves of the partition induced by a homogeneous g are the path components
of g^{-1}(c) minus the singular set. On a grid they are approximated by the
4-connected components of a band of cells around the level set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .calculus import jacobian
from .exprlang import CompiledExpr, parse, to_string
from .hadamard import BundleMap

OUTSIDE_BAND = "outside band"
OUTSIDE_WINDOW = "outside window"
INVARIANCE_PRECONDITION_TOL = 1e-9


class EmptyBandError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class HomogeneousFn:
    """g in fiber variables with a declared degree k > 0."""

    expr: str
    degree: float
    variables: tuple = ("u", "v")

    def __post_init__(self):
        if not self.degree > 0:
            raise ValueError("degree must be positive")
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "_compiled", CompiledExpr(self.expr, self.variables))

    @property
    def dim(self) -> int:
        return len(self.variables)

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        out = self._compiled(np.atleast_2d(pts))
        return float(out[0]) if single else out

    def gradient(self, points) -> np.ndarray:
        return jacobian(lambda p: self(p), np.atleast_2d(points))[:, 0, :]

    def canonical(self) -> str:
        return to_string(parse(self.expr))

    @classmethod
    def from_config(cls, cfg: dict) -> "HomogeneousFn":
        return cls(cfg["g"], float(cfg["k"]), tuple(cfg.get("vars", ("u", "v"))))


def _as_samples(samples) -> np.ndarray:
    return np.atleast_2d(np.asarray(samples, dtype=float))


def default_samples(dim: int = 2, n: int = 64) -> np.ndarray:
    """Points on the unit circle (or coordinate sphere samples) avoiding the origin."""
    if dim == 2:
        ang = 2 * np.pi * (np.arange(n) + 0.37) / n
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    rng = np.random.default_rng(0)
    p = rng.normal(size=(n, dim))
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def check_homogeneity(f: HomogeneousFn, samples, taus: Sequence[float] = (0.25, 0.5, 2.0, 3.0)) -> float:
    """max |f(tau v) - tau^k f(v)| / (1 + |f(v)|) over samples and taus."""
    pts = _as_samples(samples)
    base = f(pts)
    worst = 0.0
    for tau in taus:
        if not tau > 0:
            raise ValueError("tau must be positive")
        res = np.abs(f(tau * pts) - tau ** f.degree * base) / (1 + np.abs(base))
        worst = max(worst, float(np.max(res)))
    return worst


def estimate_degree(f, samples, tau_pair=(2.0, 0.5)) -> float:
    """Median over samples of log(f(t1 v) / f(t2 v)) / log(t1 / t2)."""
    t1, t2 = (float(t) for t in tau_pair)
    if t1 == t2 or t1 <= 0 or t2 <= 0:
        raise ValueError("need two distinct positive scales")
    pts = _as_samples(samples)
    f1, f2 = np.asarray(f(t1 * pts)), np.asarray(f(t2 * pts))
    if np.any(f1 == 0) or np.any(f2 == 0):
        raise ValueError("f vanishes at a sample point")
    if np.any(np.sign(f1) != np.sign(f2)):
        raise ValueError("sign change between scales: f is not homogeneous")
    return float(np.median(np.log(f1 / f2) / np.log(t1 / t2)))


# --- union-find labeling ---------------------------------------------------------


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # keep the smaller index as root so labels come out in scan order
            if ri < rj:
                self.parent[rj] = ri
            else:
                self.parent[ri] = rj


def label_components(mask: np.ndarray) -> np.ndarray:
    """4-connected components of a boolean grid; -1 off the mask, 0.. in scan order."""
    mask = np.asarray(mask, dtype=bool)
    rows, cols = mask.shape
    uf = UnionFind(mask.size)
    for i in range(rows):
        for j in range(cols):
            if not mask[i, j]:
                continue
            k = i * cols + j
            if j > 0 and mask[i, j - 1]:
                uf.union(k, k - 1)
            if i > 0 and mask[i - 1, j]:
                uf.union(k, k - cols)
    labels = -np.ones(mask.shape, dtype=int)
    names = {}
    for i in range(rows):
        for j in range(cols):
            if mask[i, j]:
                root = uf.find(i * cols + j)
                labels[i, j] = names.setdefault(root, len(names))
    return labels


@dataclass
class LeafLabeling:
    """Component labels of the band around f = c on a cell grid.

    ``labels[i, j]`` refers to the cell with center (us[i], vs[j]); -1 marks
    cells outside the band or in the singular mask.
    """

    window: tuple
    resolution: int
    level: float
    labels: np.ndarray
    tol_rule: str
    representatives: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return int(self.labels.max() + 1) if self.labels.size else 0

    @property
    def cell(self) -> tuple:
        (u0, u1), (v0, v1) = self.window
        return (u1 - u0) / self.resolution, (v1 - v0) / self.resolution

    def centers(self):
        (u0, u1), (v0, v1) = self.window
        hu, hv = self.cell
        us = u0 + hu * (np.arange(self.resolution) + 0.5)
        vs = v0 + hv * (np.arange(self.resolution) + 0.5)
        return us, vs

    def to_json(self) -> dict:
        idx = np.argwhere(self.labels >= 0)
        return {
            "window": [list(w) for w in self.window],
            "resolution": self.resolution,
            "level": self.level,
            "tol_rule": self.tol_rule,
            "count": self.count,
            "cells": idx.tolist(),
            "labels": self.labels[self.labels >= 0].tolist(),
            "representatives": {
                str(k): [list(map(float, p)) for p in pts] for k, pts in sorted(self.representatives.items())
            },
        }


def _origin_mask(UU, VV, hu, hv):
    return np.hypot(UU, VV) <= np.hypot(hu, hv) * (1 + 1e-12)


def _project(f, p, c, steps: int = 3):
    """A few Newton steps along the gradient toward f = c."""
    q = np.array(p, dtype=float)
    for _ in range(steps):
        g = f.gradient(q[None, :])[0]
        gg = float(g @ g)
        if gg == 0:
            break
        q = q - (f(q) - c) * g / gg
    return q


def level_components(
    f: HomogeneousFn,
    c: float,
    window=((-2.0, 2.0), (-2.0, 2.0)),
    resolution: int = 200,
    tol: Optional[float] = None,
    singular: Optional[Callable] = None,
    reps_per_leaf: int = 4,
) -> LeafLabeling:
    """Label the 4-connected components of the band around f = c.

    A cell is in the band if f changes sign across its corners relative to c
    or if |f(center) - c| <= tol, where by default
    tol = max(1e-3 |c|, 1e-2 |grad f| h) per cell. Cells selected by ``singular``
    (default: those within one cell diagonal of the origin) are removed.
    """
    if f.dim != 2:
        raise ValueError("leaf labeling is implemented for planar fibers only")
    (u0, u1), (v0, v1) = ((float(a), float(b)) for a, b in window)
    n = int(resolution)
    hu, hv = (u1 - u0) / n, (v1 - v0) / n
    us = u0 + hu * (np.arange(n) + 0.5)
    vs = v0 + hv * (np.arange(n) + 0.5)
    UU, VV = np.meshgrid(us, vs, indexing="ij")
    centers = np.stack([UU.ravel(), VV.ravel()], axis=1)
    F = f(centers).reshape(n, n)
    cu = np.linspace(u0, u1, n + 1)
    cv = np.linspace(v0, v1, n + 1)
    CU, CV = np.meshgrid(cu, cv, indexing="ij")
    Fc = f(np.stack([CU.ravel(), CV.ravel()], axis=1)).reshape(n + 1, n + 1) - c
    corners = np.stack([Fc[:-1, :-1], Fc[1:, :-1], Fc[:-1, 1:], Fc[1:, 1:]])
    straddle = (corners.min(axis=0) <= 0) & (corners.max(axis=0) >= 0)
    if tol is None:
        grad = np.linalg.norm(f.gradient(centers), axis=1).reshape(n, n)
        # the absolute floor scales with |c| so a c = 0 band does not swell
        # into a blob around the singular point, where grad f is small
        tol_arr = np.maximum(1e-3 * abs(c), 1e-2 * grad * max(hu, hv))
        rule = "max(1e-3*|c|, 1e-2*|grad f|*h)"
    else:
        tol_arr = np.full((n, n), float(tol))
        rule = f"{float(tol)!r}"
    band = straddle | (np.abs(F - c) <= tol_arr)
    mask = _origin_mask(UU, VV, hu, hv) if singular is None else np.asarray(singular(UU, VV), dtype=bool)
    band &= ~mask
    if not band.any():
        raise EmptyBandError(f"no cells within tolerance of level {c!r}")
    labels = label_components(band)
    lab = LeafLabeling(((u0, u1), (v0, v1)), n, float(c), labels, rule)
    for k in range(lab.count):
        idx = np.argwhere(labels == k)
        picks = idx[np.unique(np.linspace(0, len(idx) - 1, reps_per_leaf).round().astype(int))]
        reps = []
        for i, j in picks:
            p = np.array([us[i], vs[j]])
            q = _project(f, p, c)
            # keep the projection only when it stays within the same cell neighborhood
            if np.all(np.isfinite(q)) and leaf_label(lab, q) == k:
                p = q
            reps.append(p)
        lab.representatives[k] = reps
    return lab


def leaf_label(labeling: LeafLabeling, p):
    """Label of the nearest band cell within one cell diagonal of p."""
    (u0, u1), (v0, v1) = labeling.window
    hu, hv = labeling.cell
    p = np.asarray(p, dtype=float)
    if not (u0 <= p[0] <= u1 and v0 <= p[1] <= v1):
        return OUTSIDE_WINDOW
    n = labeling.resolution
    i = min(int((p[0] - u0) / hu), n - 1)
    j = min(int((p[1] - v0) / hv), n - 1)
    best, best_d = OUTSIDE_BAND, np.inf
    reach = np.hypot(hu, hv) * (1 + 1e-12)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            a, b = i + di, j + dj
            if not (0 <= a < n and 0 <= b < n) or labeling.labels[a, b] < 0:
                continue
            cu = u0 + hu * (a + 0.5)
            cv = v0 + hv * (b + 0.5)
            d = np.hypot(p[0] - cu, p[1] - cv)
            if d <= reach and d < best_d:
                best, best_d = int(labeling.labels[a, b]), d
    return best


@dataclass
class LeafCheck:
    passed: bool
    violations: list
    unchecked: list
    checked: int

    def to_json(self) -> dict:
        return {
            "pass": self.passed,
            "checked": self.checked,
            "violations": self.violations,
            "unchecked": self.unchecked,
        }


def _as_map(A):
    if callable(A):
        return A
    M = np.asarray(getattr(A, "matrix", A), dtype=float)
    return lambda p: M @ p


def check_leaf_preserving(A, f: HomogeneousFn, levels: Sequence[float], labelings: Sequence[LeafLabeling]) -> LeafCheck:
    """Every representative p must satisfy leaf_label(A p) == leaf_label(p).

    ``A`` is a 2x2 matrix, a PlanarLinear or a callable on 2-vectors. Images
    leaving the window are listed as unchecked, not as violations.
    """
    amap = _as_map(A)
    violations, unchecked = [], []
    checked = 0
    for c, lab in zip(levels, labelings):
        if lab.level != float(c):
            raise ValueError("labelings must match the levels")
        for k, reps in sorted(lab.representatives.items()):
            for p in reps:
                q = np.asarray(amap(np.asarray(p)), dtype=float)
                got = leaf_label(lab, q)
                rec = {"level": float(c), "leaf": int(k), "p": [float(x) for x in p], "image": [float(x) for x in q]}
                if got == OUTSIDE_WINDOW:
                    unchecked.append(rec)
                    continue
                checked += 1
                if got != k:
                    rec["image_leaf"] = got
                    violations.append(rec)
    return LeafCheck(not violations, violations, unchecked, checked)


def default_levels(f: HomogeneousFn, window=((-2.0, 2.0), (-2.0, 2.0)), resolution: int = 200) -> list:
    """c = 1, c = -1 when attained in the window, and c = 0 when its band is non-empty."""
    levels = [1.0]
    (u0, u1), (v0, v1) = window
    us = np.linspace(u0, u1, 101)
    vs = np.linspace(v0, v1, 101)
    UU, VV = np.meshgrid(us, vs, indexing="ij")
    vals = f(np.stack([UU.ravel(), VV.ravel()], axis=1))
    if vals.min() < -1:
        levels.append(-1.0)
    try:
        level_components(f, 0.0, window, resolution)
        levels.append(0.0)
    except EmptyBandError:
        pass
    return levels


def check_homotopy_leaf_invariance(h: BundleMap, f: HomogeneousFn, cfg, t_grid, samples) -> dict:
    """max |f(H(h, delta, t) w) - f(w)| / (1 + |f(w)|) over samples and t.

    Requires f o h = f on the samples (to 1e-9); f acts on fiber coordinates.
    """
    from .linearize import linhom

    pts = _as_samples(samples)
    mx = h.source.base_dim
    xs, vs = pts[:, :mx], pts[:, mx:]
    fw = f(vs)
    _, b = h(xs, vs)
    pre = float(np.max(np.abs(f(b) - fw) / (1 + np.abs(fw))))
    if pre > INVARIANCE_PRECONDITION_TOL:
        raise PreconditionError(f"f o h differs from f by {pre:.3e} (needs <= {INVARIANCE_PRECONDITION_TOL:g})")
    per_t = []
    for t in t_grid:
        out = linhom(h, cfg, t, xs, vs, check_domain=False)[:, h.target.base_dim:]
        per_t.append(float(np.max(np.abs(f(out) - fw) / (1 + np.abs(fw)))))
    return {"precondition_residual": pre, "per_t": per_t, "t_grid": [float(t) for t in t_grid], "residual": max(per_t)}


__all__ = [
    "EmptyBandError", "HomogeneousFn", "LeafCheck", "LeafLabeling", "OUTSIDE_BAND",
    "OUTSIDE_WINDOW", "PreconditionError", "UnionFind", "check_homogeneity",
    "check_homotopy_leaf_invariance", "check_leaf_preserving", "default_levels",
    "default_samples", "estimate_degree", "label_components", "leaf_label",
    "level_components",
]
