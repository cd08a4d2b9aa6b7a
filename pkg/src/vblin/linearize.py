"""The delta-linearizing homotopy and its numerical admissibility certificates.

With a bump mu (0 on [0, a], 1 on [b, inf)) and

    phi(t, w) = t + (1 - t) mu(|v| / delta)

the homotopy is H(h, delta, t)(w) = g(phi(t, w), w), g the Hadamard homotopy.
It equals h for t = 1 and outside the tube |v| >= b delta, and equals the
fiberwise tangent map on |v| <= a delta when t = 0.

Certificates here are grid evidence, not proofs. Every report records the
grids and thresholds it used.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .bundle import BundlePoint, as_points, fiber_norms
from .calculus import jacobian, split_blocks
from .hadamard import DEFAULT_QUAD_NODES, BundleMap, hadamard_homotopy

A_CONST = 1.0
B_CONST = 2.0
DEFAULT_T_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
DELTA_GRID_STEPS = 20
RANK_REL_THRESHOLD = 1e-8
DEFAULT_SEP_RATIO = 1e-3
MAX_INJECTIVITY_POINTS = 4096


class DomainEscape(ValueError):
    """phi(w) w left the domain of the map."""


# --- bump and cutoff -------------------------------------------------------


def _e(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _sigma(t):
    """Smooth step on [0, 1]: 0 for t <= 0, 1 for t >= 1, sigma(1/2) = 1/2."""
    t = np.asarray(t, dtype=float)
    num = _e(t)
    return num / (num + _e(1.0 - t))


def _sigma_prime(t):
    t = np.asarray(t, dtype=float)
    e0, e1 = _e(t), _e(1.0 - t)
    de0 = np.zeros_like(t)
    de1 = np.zeros_like(t)
    inside = (t > 0) & (t < 1)
    de0[inside] = e0[inside] / t[inside] ** 2
    de1[inside] = e1[inside] / (1.0 - t[inside]) ** 2
    return (de0 * e1 + e0 * de1) / (e0 + e1) ** 2


def _scalar_or_array(value, like):
    return float(value) if np.ndim(like) == 0 else value


@dataclass(frozen=True)
class BumpFn:
    """mu = 0 on [0, a] and 1 on [b, inf), smooth and non-decreasing between."""

    a: float = A_CONST
    b: float = B_CONST

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise ValueError("bump needs 0 < a < b")

    def __call__(self, s):
        arr = np.asarray(s, dtype=float)
        if np.any(arr < 0):
            raise ValueError("mu is defined for s >= 0 only")
        return _scalar_or_array(_sigma((arr - self.a) / (self.b - self.a)), s)

    def derivative(self, s):
        arr = np.asarray(s, dtype=float)
        if np.any(arr < 0):
            raise ValueError("mu is defined for s >= 0 only")
        width = self.b - self.a
        return _scalar_or_array(_sigma_prime((arr - self.a) / width) / width, s)

    def lipschitz(self, points: int = 10_000) -> float:
        """|mu|_1 = sup |mu'| as a grid max over [a, b]."""
        return _bump_lipschitz(self.a, self.b, points)


@lru_cache(maxsize=8)
def _bump_lipschitz(a, b, points):
    s = np.linspace(a, b, points)
    return float(np.max(np.abs(BumpFn(a, b).derivative(s))))


DEFAULT_BUMP = BumpFn()


def mu(s):
    return DEFAULT_BUMP(s)


def mu_prime(s):
    return DEFAULT_BUMP.derivative(s)


def mu_lipschitz(points: int = 10_000) -> float:
    return DEFAULT_BUMP.lipschitz(points)


@dataclass(frozen=True)
class HomotopyConfig:
    delta: float
    bump: BumpFn = DEFAULT_BUMP
    quad_nodes: int = DEFAULT_QUAD_NODES
    t_grid: tuple = DEFAULT_T_GRID
    base_points: int = 9
    fiber_points: int = 21
    min_image_sep_ratio: float = DEFAULT_SEP_RATIO

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        t_grid = tuple(sorted(float(t) for t in self.t_grid))
        if not t_grid or t_grid[0] != 0.0 or t_grid[-1] != 1.0:
            raise ValueError("t_grid must contain 0 and 1")
        if any(t < 0 or t > 1 for t in t_grid):
            raise ValueError("t_grid values must lie in [0, 1]")
        object.__setattr__(self, "t_grid", t_grid)
        if self.quad_nodes < 1:
            raise ValueError("quad_nodes must be positive")

    def with_delta(self, delta: float) -> "HomotopyConfig":
        return HomotopyConfig(
            delta, self.bump, self.quad_nodes, self.t_grid,
            self.base_points, self.fiber_points, self.min_image_sep_ratio,
        )

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "bump": {"a": self.bump.a, "b": self.bump.b},
            "quad_nodes": self.quad_nodes,
            "t_grid": list(self.t_grid),
            "base_points": self.base_points,
            "fiber_points": self.fiber_points,
            "min_image_sep_ratio": self.min_image_sep_ratio,
        }


def phi(cfg: HomotopyConfig, t: float, p):
    """t + (1 - t) mu(|v| / delta); ``p`` is a BundlePoint or an (N, m_r) fiber array."""
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    if isinstance(p, BundlePoint):
        s = float(np.linalg.norm(p.v)) / cfg.delta
        return float(t + (1 - t) * cfg.bump(s))
    s = fiber_norms(p) / cfg.delta
    return t + (1 - t) * cfg.bump(s)


# --- the homotopy ------------------------------------------------------------


def linhom(h: BundleMap, cfg: HomotopyConfig, t: float, x, v=None, check_domain: bool = True):
    """H(h, delta, t) at one point (BundlePoint or 1-D v) or a batch, stacked."""
    single = isinstance(x, BundlePoint) or (v is not None and np.ndim(v) == 1)
    xs, vs = as_points(x, v, h.source.base_dim, h.source.fiber_dim)
    tau = phi(cfg, t, vs)
    if check_domain:
        inside = h.domain.contains(xs, tau[:, None] * vs)
        if not np.all(inside):
            bad = int(np.argmin(inside))
            raise DomainEscape(f"phi * v leaves the domain at point index {bad}")
    out = hadamard_homotopy(h, tau, xs, vs, cfg.quad_nodes)
    return out[0] if single else out


def linhom_map(h: BundleMap, cfg: HomotopyConfig, t: float) -> BundleMap:
    """H(h, delta, t) packaged as a BundleMap."""
    nx = h.target.base_dim

    def func(x, v):
        out = linhom(h, cfg, t, x, v, check_domain=False)
        return out[:, :nx], out[:, nx:]

    return BundleMap(h.source, h.target, func, h.domain, name=f"H[{cfg.delta:g},{t:g}]({h.name})", check=False)


def homotopy_blocks(h: BundleMap, cfg: HomotopyConfig, t: float, x, v=None):
    """Finite-difference Jacobian blocks of w -> H(h, delta, t)(w)."""
    single = isinstance(x, BundlePoint) or (v is not None and np.ndim(v) == 1)
    xs, vs = as_points(x, v, h.source.base_dim, h.source.fiber_dim)
    mx = h.source.base_dim

    def F(w):
        return linhom(h, cfg, t, w[:, :mx], w[:, mx:], check_domain=False)

    J = jacobian(F, np.hstack([xs, vs]))
    blocks = split_blocks(J, mx, h.target.base_dim)
    return blocks[0] if single else blocks


def _cube_to_ball(u):
    """Radial map of [-1, 1]^m onto the unit ball (continuous, onto)."""
    inf = np.max(np.abs(u), axis=1, keepdims=True)
    two = np.linalg.norm(u, axis=1, keepdims=True)
    scale = np.divide(inf, two, out=np.zeros_like(two), where=two > 0)
    return u * scale


def tube_samples(h: BundleMap, n: int, r_max: float, r_min: float = 0.0):
    """Deterministic low-discrepancy samples with r_min <= |v| <= r_max.

    Base coordinates fill the domain box; fiber coordinates come from an
    unscrambled Halton sequence mapped onto the annulus (or ball).
    """
    from scipy.stats import qmc

    mx, m = h.source.base_dim, h.source.fiber_dim
    q = qmc.Halton(d=mx + m, scramble=False).random(n + 1)[1:]
    lo = np.array([b[0] for b in h.domain.base_box])
    hi = np.array([b[1] for b in h.domain.base_box])
    xs = lo + (hi - lo) * q[:, :mx] if mx else np.zeros((n, 0))
    u = _cube_to_ball(2 * q[:, mx:] - 1)
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    dirs = np.divide(u, norms, out=np.zeros_like(u), where=norms > 0)
    radius = r_min + (r_max - r_min) * norms
    vs = dirs * radius
    if h.domain.fiber_shape == "box":
        keep = h.domain.fiber_contains(vs)
        xs, vs = xs[keep], vs[keep]
    return xs, vs


# --- certificates --------------------------------------------------------------


def _kth_singular(block: np.ndarray, k: int):
    """k-th largest singular value (1-based) per matrix, and the rank threshold."""
    sv = np.linalg.svd(block, compute_uv=False)
    inf_norm = np.max(np.sum(np.abs(block), axis=-1), axis=-1) if block.size else np.zeros(len(block))
    return sv[:, k - 1], RANK_REL_THRESHOLD * (1 + inf_norm)


@dataclass
class RankReport:
    a_rank: int
    b_rank: int
    passed: bool
    sigma_P: list = field(default_factory=list)  # per t: min k-th singular value
    sigma_S: list = field(default_factory=list)
    margin: float = 0.0
    t_grid: tuple = ()
    base_points: int = 0

    def to_json(self) -> dict:
        return {
            "a_rank": self.a_rank,
            "b_rank": self.b_rank,
            "pass": self.passed,
            "sigma_min_P": self.sigma_P,
            "sigma_min_S": self.sigma_S,
            "margin": self.margin,
            "t_grid": list(self.t_grid),
            "base_points": self.base_points,
            "threshold_rule": f"{RANK_REL_THRESHOLD:g}*(1+|block|_inf)",
        }


def rank_certificate(
    h: BundleMap,
    cfg: HomotopyConfig,
    a_rank: int,
    b_rank: int,
    base_grid=None,
    t_grid: Optional[Sequence[float]] = None,
) -> RankReport:
    """Check that P has rank a_rank and S has rank b_rank along the zero section.

    For each t the blocks of H(h, delta, t) are computed at every base grid
    point on the zero section; the relevant singular value must exceed
    1e-8 (1 + |block|_inf) everywhere.
    """
    if a_rank < 0 or b_rank < 0:
        raise ValueError("ranks must be non-negative")
    if a_rank > min(h.source.base_dim, h.target.base_dim):
        raise ValueError(f"a_rank {a_rank} exceeds the P block size")
    if b_rank > min(h.source.fiber_dim, h.target.fiber_dim):
        raise ValueError(f"b_rank {b_rank} exceeds the S block size")
    xs = h.domain.base_grid(cfg.base_points) if base_grid is None else np.asarray(base_grid, dtype=float)
    xs = xs.reshape(-1, h.source.base_dim) if h.source.base_dim else np.zeros((1, 0))
    zeros = np.zeros((len(xs), h.source.fiber_dim))
    ts = cfg.t_grid if t_grid is None else tuple(t_grid)
    report = RankReport(a_rank, b_rank, True, t_grid=ts, base_points=len(xs))
    margin = np.inf
    for t in ts:
        blocks = homotopy_blocks(h, cfg, t, xs, zeros)
        for k, block, store in ((a_rank, blocks.P, report.sigma_P), (b_rank, blocks.S, report.sigma_S)):
            if k == 0:
                store.append(None)
                continue
            sig, thr = _kth_singular(block, k)
            store.append(float(np.min(sig)))
            margin = min(margin, float(np.min(sig - thr)))
    report.margin = float(margin) if np.isfinite(margin) else 0.0
    report.passed = bool(margin > 0) if np.isfinite(margin) else True
    return report


@dataclass
class InjectivityReport:
    passed: bool
    min_ratio: float
    required_ratio: float
    points: int
    spacing: float
    worst_pair: tuple = ()

    def to_json(self) -> dict:
        return {
            "pass": self.passed,
            "min_ratio": self.min_ratio,
            "required_ratio": self.required_ratio,
            "points": self.points,
            "spacing": self.spacing,
            "worst_pair": list(self.worst_pair),
        }


def injectivity_certificate(
    map_eval,
    grid,
    min_image_sep_ratio: float = DEFAULT_SEP_RATIO,
    spacing: Optional[float] = None,
    chunk: int = 512,
) -> InjectivityReport:
    """Pairwise separation test: |F(p) - F(q)| >= ratio |p - q| for |p - q| >= spacing.

    ``map_eval`` takes (N, d) points and returns (N, k). ``spacing`` defaults
    to the smallest nonzero distance in the grid.
    """
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    n = len(pts)
    if n > MAX_INJECTIVITY_POINTS:
        raise ValueError(f"{n} points exceed the pair budget ({MAX_INJECTIVITY_POINTS})")
    img = np.atleast_2d(np.asarray(map_eval(pts), dtype=float)).reshape(n, -1)
    if spacing is None:
        spacing = np.inf
        for s in range(0, n, chunk):
            d = np.linalg.norm(pts[s:s + chunk, None, :] - pts[None, :, :], axis=-1)
            d = d[d > 0]
            if d.size:
                spacing = min(spacing, float(d.min()))
        spacing = spacing * (1 - 1e-9) if np.isfinite(spacing) else 0.0
    best = np.inf
    worst = ()
    for s in range(0, n, chunk):
        d = np.linalg.norm(pts[s:s + chunk, None, :] - pts[None, :, :], axis=-1)
        di = np.linalg.norm(img[s:s + chunk, None, :] - img[None, :, :], axis=-1)
        valid = (d >= spacing) & (d > 0)
        if not np.any(valid):
            continue
        ratio = np.where(valid, di / np.where(valid, d, 1.0), np.inf)
        k = int(np.argmin(ratio))
        i, j = divmod(k, n)
        if ratio[i, j] < best:
            best = float(ratio[i, j])
            worst = (s + i, j)
    best = best if np.isfinite(best) else 0.0
    return InjectivityReport(bool(best >= min_image_sep_ratio), best, min_image_sep_ratio, n, float(spacing), worst)


def support_check(h: BundleMap, cfg: HomotopyConfig, t_grid, outer_x, outer_v=None) -> float:
    """max |H(h, delta, t) - h| over points with |v| >= b delta."""
    xs, vs = as_points(outer_x, outer_v, h.source.base_dim, h.source.fiber_dim)
    if len(vs) == 0:
        return 0.0
    if np.any(fiber_norms(vs) < cfg.bump.b * cfg.delta * (1 - 1e-12)):
        raise ValueError("support_check needs points with |v| >= b*delta")
    ref = np.hstack(h(xs, vs))
    worst = 0.0
    for t in t_grid:
        out = linhom(h, cfg, t, xs, vs, check_domain=False)
        worst = max(worst, float(np.max(np.abs(out - ref))))
    return worst


# --- delta search --------------------------------------------------------------


@dataclass(frozen=True)
class Kind:
    """Either rank(a, b) or embedding."""

    name: str
    a_rank: int = 0
    b_rank: int = 0

    @classmethod
    def rank(cls, a: int, b: int) -> "Kind":
        return cls("rank", int(a), int(b))

    @classmethod
    def embedding(cls) -> "Kind":
        return cls("embedding")

    @classmethod
    def parse(cls, spec) -> "Kind":
        if isinstance(spec, Kind):
            return spec
        if isinstance(spec, dict):
            if spec.get("type") == "embedding":
                return cls.embedding()
            return cls.rank(spec["a"], spec["b"])
        text = str(spec).replace(" ", "")
        if text == "embedding":
            return cls.embedding()
        if text.startswith("rank(") and text.endswith(")"):
            a, b = text[5:-1].split(",")
            return cls.rank(int(a), int(b))
        raise ValueError(f"unknown kind {spec!r}")

    def ranks_for(self, h: BundleMap):
        if self.name == "embedding":
            return h.source.base_dim, h.source.fiber_dim
        return self.a_rank, self.b_rank

    def __str__(self):
        return "embedding" if self.name == "embedding" else f"rank({self.a_rank},{self.b_rank})"


def _kind_certificates(h, cfg, kind: Kind, t, grid_x, grid_v):
    a_rank, b_rank = kind.ranks_for(h)
    out = {"rank": rank_certificate(h, cfg, a_rank, b_rank, t_grid=(t,))}
    if kind.name == "embedding":
        mx = h.source.base_dim

        def F(w):
            return linhom(h, cfg, t, w[:, :mx], w[:, mx:], check_domain=False)

        out["injectivity"] = injectivity_certificate(
            F, np.hstack([grid_x, grid_v]), cfg.min_image_sep_ratio
        )
    return out


def _fiber_inside(h, out, slack=1e-12):
    return h.domain.fiber_contains(out[:, h.target.base_dim:], slack)


@dataclass
class DeltaSearchResult:
    kind: str
    epsilon: float
    delta: Optional[float]
    diagnostics: list

    @property
    def passed(self) -> bool:
        return self.delta is not None

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "pass": self.passed,
            "candidates": self.diagnostics,
        }


def _candidate_report(h, cfg, kind, grid_x, grid_v):
    """Evaluate conditions (i)-(iii) for one delta; returns (ok, record)."""
    delta = cfg.delta
    record = {"delta": delta, "per_t": []}
    ok = True
    tube_x, tube_v = h.domain.grid(cfg.base_points, cfg.fiber_points, fiber_radius=min(delta, h.domain.fiber_radius))
    keep = fiber_norms(tube_v) <= delta * (1 + 1e-12)
    tube_x, tube_v = tube_x[keep], tube_v[keep]
    outer = fiber_norms(grid_v) >= cfg.bump.b * delta
    for t in cfg.t_grid:
        entry = {"t": t}
        if h.is_self_map:
            img = linhom(h, cfg, t, tube_x, tube_v, check_domain=False)
            entry["image_in_domain"] = bool(np.all(_fiber_inside(h, img)))
        else:
            entry["image_in_domain"] = None
        certs = _kind_certificates(h, cfg, kind, t, grid_x, grid_v)
        entry.update({name: rep.to_json() for name, rep in certs.items()})
        res = support_check(h, cfg, (t,), grid_x[outer], grid_v[outer]) if np.any(outer) else 0.0
        entry["support_residual"] = res
        entry_ok = (
            entry["image_in_domain"] is not False
            and all(rep.passed for rep in certs.values())
            and res <= 1e-12
        )
        entry["pass"] = bool(entry_ok)
        record["per_t"].append(entry)
        ok = ok and entry_ok
        if not ok:
            break
    record["pass"] = bool(ok)
    return ok, record


def admissible_delta(h: BundleMap, kind, epsilon: float, template: Optional[HomotopyConfig] = None) -> DeltaSearchResult:
    """Largest delta in {epsilon 2^-k : k = 0..20} passing every check for all t.

    Returns a result with ``delta=None`` and per-candidate diagnostics when the
    map itself fails the kind's certificate or no candidate passes.
    """
    kind = Kind.parse(kind)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if epsilon > h.domain.tube_radius * (1 + 1e-12):
        raise ValueError(f"epsilon {epsilon} exceeds the domain tube radius {h.domain.tube_radius}")
    template = template or HomotopyConfig(delta=epsilon)
    grid_x, grid_v = h.domain.grid(template.base_points, template.fiber_points)
    diagnostics = []

    base_cfg = template.with_delta(epsilon)
    certs = _kind_certificates(h, base_cfg, kind, 1.0, grid_x, grid_v)
    if not all(rep.passed for rep in certs.values()):
        diagnostics.append({
            "delta": None,
            "note": "the map itself fails the certificate at t=1",
            **{name: rep.to_json() for name, rep in certs.items()},
        })
        return DeltaSearchResult(str(kind), epsilon, None, diagnostics)

    for k in range(DELTA_GRID_STEPS + 1):
        cfg = template.with_delta(epsilon * 2.0 ** (-k))
        ok, record = _candidate_report(h, cfg, kind, grid_x, grid_v)
        diagnostics.append(record)
        if ok:
            return DeltaSearchResult(str(kind), epsilon, cfg.delta, diagnostics)
    return DeltaSearchResult(str(kind), epsilon, None, diagnostics)


__all__ = [
    "A_CONST", "B_CONST", "BumpFn", "DeltaSearchResult", "DomainEscape",
    "HomotopyConfig", "InjectivityReport", "Kind", "RankReport",
    "admissible_delta", "homotopy_blocks", "injectivity_certificate", "linhom",
    "linhom_map", "mu", "mu_lipschitz", "mu_prime", "phi", "rank_certificate",
    "support_check", "tube_samples",
]
