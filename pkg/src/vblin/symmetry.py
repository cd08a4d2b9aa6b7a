"""Linear symmetry groups Lin(g) and LinLP(g) of planar homogeneous functions.

The search space is O(2) together with the hyperbolic family diag(t, 1/t)
and the signed permutation matrices (which already lie in O(2)). Rotations
and reflections are swept on an angle grid; every discrete local minimum
of the residual is refined by bounded scalar minimization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .foliation import HomogeneousFn, check_leaf_preserving, default_levels, level_components

DEFAULT_TOL = 1e-8
DEFAULT_RESOLUTION = 4096
THETA_TOL = 1e-12
HYPERBOLIC_T = (0.5, 0.8, 1.25, 2.0, 5.0)
TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class PlanarLinear:
    matrix: tuple
    tag: str = "general"      # rotation, reflection, hyperbolic or general
    param: Optional[float] = None

    @classmethod
    def from_array(cls, M, tag="general", param=None) -> "PlanarLinear":
        M = np.asarray(M, dtype=float).reshape(2, 2)
        return cls(tuple(map(tuple, M.tolist())), tag, param)

    @classmethod
    def rotation(cls, theta: float) -> "PlanarLinear":
        c, s = np.cos(theta), np.sin(theta)
        return cls.from_array([[c, -s], [s, c]], "rotation", float(theta))

    @classmethod
    def reflection(cls, theta: float) -> "PlanarLinear":
        c, s = np.cos(theta), np.sin(theta)
        return cls.from_array([[c, s], [s, -c]], "reflection", float(theta))

    @classmethod
    def hyperbolic(cls, t: float) -> "PlanarLinear":
        if not t > 0:
            raise ValueError("hyperbolic parameter must be positive")
        return cls.from_array([[t, 0.0], [0.0, 1.0 / t]], "hyperbolic", float(t))

    @classmethod
    def identity(cls) -> "PlanarLinear":
        return cls.rotation(0.0)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=float)

    def __call__(self, p):
        return self.array @ np.asarray(p, dtype=float)

    def __matmul__(self, other: "PlanarLinear") -> "PlanarLinear":
        return PlanarLinear.from_array(self.array @ other.array)

    def to_json(self) -> dict:
        return {"tag": self.tag, "param": self.param, "matrix": [list(r) for r in self.matrix]}


SIGNED_PERMUTATIONS = (
    PlanarLinear.from_array([[0, 1], [1, 0]]),
    PlanarLinear.from_array([[0, -1], [-1, 0]]),
    PlanarLinear.from_array([[-1, 0], [0, 1]]),
    PlanarLinear.from_array([[1, 0], [0, -1]]),
)


def default_samples(n: int = 64) -> np.ndarray:
    """Two rings of points; enough for linear maps of homogeneous functions."""
    ang = TWO_PI * (np.arange(n) + 0.37) / n
    ring = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return np.vstack([ring, 0.5 * ring[::3]])


def residual(A, g: HomogeneousFn, samples=None) -> float:
    """max |g(A p) - g(p)| / (1 + |g(p)|)."""
    pts = default_samples() if samples is None else np.atleast_2d(np.asarray(samples, dtype=float))
    M = A.array if isinstance(A, PlanarLinear) else np.asarray(A, dtype=float)
    gp = g(pts)
    return float(np.max(np.abs(g(pts @ M.T) - gp) / (1 + np.abs(gp))))


def _family_residuals(g, thetas, samples, reflect: bool) -> np.ndarray:
    c, s = np.cos(thetas), np.sin(thetas)
    u, v = samples[:, 0], samples[:, 1]
    if reflect:
        U = c[:, None] * u + s[:, None] * v
        V = s[:, None] * u - c[:, None] * v
    else:
        U = c[:, None] * u - s[:, None] * v
        V = s[:, None] * u + c[:, None] * v
    gp = g(samples)
    img = g(np.stack([U.ravel(), V.ravel()], axis=1)).reshape(len(thetas), len(samples))
    return np.max(np.abs(img - gp) / (1 + np.abs(gp)), axis=1)


def _element(theta, reflect):
    theta = float(np.mod(theta, TWO_PI))
    if TWO_PI - theta < 1e-10:
        theta = 0.0
    return PlanarLinear.reflection(theta) if reflect else PlanarLinear.rotation(theta)


def _refine_minima(g, thetas, res, samples, reflect, tol):
    """Refine each discrete local minimum; return (theta, residual) pairs passing tol."""
    n = len(thetas)
    step = TWO_PI / n
    left, right = np.roll(res, 1), np.roll(res, -1)
    minima = np.flatnonzero((res <= left) & (res <= right))
    found, near = [], []

    for k in minima:
        th0 = thetas[k]
        if res[k] <= tol * 1e-3:
            best_th, best = th0, float(res[k])
        else:
            # optimize the offset from th0: the bounded method's stopping rule has a
            # term relative to |x|, which would cap the accuracy near 1e-8 at th0 ~ 1
            def obj(d, th0=th0):
                return _family_residuals(g, np.array([th0 + d]), samples, reflect)[0]

            out = minimize_scalar(obj, bounds=(-step, step), method="bounded",
                                  options={"xatol": THETA_TOL, "maxiter": 500})
            best_th, best = th0 + float(out.x), float(out.fun)
            if res[k] < best:
                best_th, best = th0, float(res[k])
        if best <= tol:
            found.append((float(np.mod(best_th, TWO_PI)), best))
        elif best <= 100 * tol:
            near.append((float(np.mod(best_th, TWO_PI)), best))
    # merge duplicates (adjacent grid minima converging to the same angle)
    merged = []
    for th, r in sorted(found):
        if merged and abs(th - merged[-1][0]) < 1e-8:
            if r < merged[-1][1]:
                merged[-1] = (th, r)
            continue
        merged.append((th, r))
    if len(merged) > 1 and TWO_PI - merged[-1][0] + merged[0][0] < 1e-8:
        merged.pop()
    return merged, near


@dataclass
class SymmetryGroup:
    kind: str
    elements: list
    residual: float
    order: Optional[int] = None
    structure: str = ""
    hyperbolic: bool = False
    orthogonal_part: list = field(default_factory=list)
    closure: Optional[bool] = None
    flags: list = field(default_factory=list)

    def contains_identity(self) -> bool:
        return any(np.allclose(e.array, np.eye(2), atol=1e-12) for e in self.elements)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "order": self.order,
            "structure": self.structure,
            "hyperbolic": self.hyperbolic,
            "residual": self.residual,
            "closure": self.closure,
            "flags": self.flags,
            "generators": [e.to_json() for e in self.elements],
            "orthogonal_part": [e.to_json() for e in self.orthogonal_part],
        }


def _classify_finite(rotations, reflections):
    nr, nf = len(rotations), len(reflections)
    if nf:
        return "finite_dihedral", 2 * nr, "dihedral"
    if nr > 1:
        return "finite_list", nr, "cyclic"
    return "trivial", 1, "trivial"


def find_O2_symmetries(g: HomogeneousFn, tol: float = DEFAULT_TOL, resolution: int = DEFAULT_RESOLUTION,
                       samples=None) -> SymmetryGroup:
    """Orthogonal part of Lin(g) from an angle sweep of rotations and reflections."""
    pts = default_samples() if samples is None else np.atleast_2d(np.asarray(samples, dtype=float))
    thetas = TWO_PI * np.arange(resolution) / resolution
    rot_res = _family_residuals(g, thetas, pts, False)
    ref_res = _family_residuals(g, thetas, pts, True)
    flags = []
    all_rot = bool(np.all(rot_res <= tol))
    all_ref = bool(np.all(ref_res <= tol))
    if all_rot:
        sample_el = [_element(th, False) for th in thetas[:: max(1, resolution // 8)]]
        worst = float(rot_res.max())
        if all_ref:
            sample_el += [_element(th, True) for th in thetas[:: max(1, resolution // 8)]]
            return SymmetryGroup("continuous_O2", sample_el, max(worst, float(ref_res.max())),
                                 structure="O(2)", flags=flags)
        refl, near = _refine_minima(g, thetas, ref_res, pts, True, tol)
        if near:
            flags.append("near-threshold reflection residuals")
        if refl:
            sample_el += [_element(th, True) for th, _ in refl]
            return SymmetryGroup("continuous_SO2_plus_reflections", sample_el, worst,
                                 structure="O(2)", flags=flags)
        return SymmetryGroup("continuous_SO2", sample_el, worst, structure="SO(2)", flags=flags)

    rots, near_r = _refine_minima(g, thetas, rot_res, pts, False, tol)
    refl, near_f = _refine_minima(g, thetas, ref_res, pts, True, tol)
    if near_r or near_f:
        flags.append("ambiguous: residual plateau near tol")
    # signed permutations lie in O(2); make sure none was missed by the sweep
    for P in SIGNED_PERMUTATIONS:
        r = residual(P, g, pts)
        if r <= tol:
            th = float(np.mod(np.arctan2(P.array[1, 0], P.array[0, 0]), TWO_PI))
            target = refl if np.linalg.det(P.array) < 0 else rots
            if not any(abs(np.mod(th - t0 + np.pi, TWO_PI) - np.pi) < 1e-8 for t0, _ in target):
                target.append((th, r))
    rots.sort()
    refl.sort()
    if not rots or rots[0][0] > 1e-8:
        rots.insert(0, (0.0, residual(np.eye(2), g, pts)))
    elements = [_element(th, False) for th, _ in rots] + [_element(th, True) for th, _ in refl]
    kind, order, structure = _classify_finite(rots, refl)
    worst = max(r for _, r in rots + refl)
    grp = SymmetryGroup(kind, elements, worst, order, structure, flags=flags)
    grp.orthogonal_part = list(elements)
    grp.closure = group_closure_check(elements, 1e-6)
    return grp


def detect_hyperbolic(g: HomogeneousFn, tol: float = DEFAULT_TOL, t_samples: Sequence[float] = HYPERBOLIC_T,
                      samples=None):
    """(passes, {t: residual}) for the family diag(t, 1/t)."""
    res = {float(t): residual(PlanarLinear.hyperbolic(t), g, samples) for t in t_samples}
    return all(r <= tol for r in res.values()), res


def group_closure_check(elements, tol: float = 1e-8) -> bool:
    """Every pairwise product matches some listed element entrywise within tol."""
    mats = [e.array if isinstance(e, PlanarLinear) else np.asarray(e, dtype=float) for e in elements]
    if not mats:
        return False
    stack = np.stack(mats)
    for A in mats:
        for B in mats:
            prod = A @ B
            if not np.any(np.all(np.abs(stack - prod) <= tol, axis=(1, 2))):
                return False
    return True


def lin_group(g: HomogeneousFn, tol: float = DEFAULT_TOL, resolution: int = DEFAULT_RESOLUTION) -> SymmetryGroup:
    """Orthogonal sweep merged with the hyperbolic test."""
    orth = find_O2_symmetries(g, tol, resolution)
    hyp, hres = detect_hyperbolic(g, tol)
    if not hyp:
        return orth
    elements = list(orth.elements) + [PlanarLinear.hyperbolic(t) for t in HYPERBOLIC_T]
    return SymmetryGroup(
        "one_param_hyperbolic", elements, max(orth.residual, max(hres.values())),
        order=None, structure=f"diag(t,1/t) x {orth.kind}", hyperbolic=True,
        orthogonal_part=list(orth.orthogonal_part or orth.elements), closure=orth.closure, flags=orth.flags,
    )


def default_labelings(g: HomogeneousFn, window=((-2.0, 2.0), (-2.0, 2.0)), resolution: int = 200):
    levels = default_levels(g, window, resolution)
    return levels, [level_components(g, c, window, resolution) for c in levels]


def linlp_group(lin: SymmetryGroup, g: HomogeneousFn, labelings=None, levels=None) -> SymmetryGroup:
    """Filter Lin(g) by the leaf-preservation check on the given labelings."""
    if labelings is None:
        levels, labelings = default_labelings(g)
    elif levels is None:
        levels = [lab.level for lab in labelings]

    def keeps(e):
        return check_leaf_preserving(e, g, levels, labelings).passed

    kept = [e for e in lin.elements if keeps(e)]
    if lin.kind in ("continuous_O2", "continuous_SO2", "continuous_SO2_plus_reflections"):
        if len(kept) == len(lin.elements):
            return SymmetryGroup(lin.kind, kept, lin.residual, structure=lin.structure, flags=lin.flags)
    hyp = [e for e in kept if e.tag == "hyperbolic"]
    finite = [e for e in kept if e.tag in ("rotation", "reflection")]
    rots = [(e.param, 0.0) for e in finite if e.tag == "rotation"]
    refl = [(e.param, 0.0) for e in finite if e.tag == "reflection"]
    kind, order, structure = _classify_finite(rots, refl)
    closure = group_closure_check(finite, 1e-6) if finite else False
    hyperbolic = lin.hyperbolic and len(hyp) == sum(1 for e in lin.elements if e.tag == "hyperbolic")
    if hyperbolic:
        return SymmetryGroup("one_param_hyperbolic", kept, lin.residual, None,
                             f"diag(t,1/t) x {kind}", True, finite, closure, lin.flags)
    return SymmetryGroup(kind, finite, lin.residual, order, structure, False, finite, closure, lin.flags)


__all__ = [
    "DEFAULT_RESOLUTION", "DEFAULT_TOL", "HYPERBOLIC_T", "PlanarLinear",
    "SIGNED_PERMUTATIONS", "SymmetryGroup", "default_labelings",
    "detect_hyperbolic", "find_O2_symmetries", "group_closure_check",
    "lin_group", "linlp_group", "residual",
]
