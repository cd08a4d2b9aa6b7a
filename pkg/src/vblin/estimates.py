"""Numerical checks of the deviation estimates for the delta-linearizing homotopy.

For h = (a, b) and H = H(h, delta, t) write x_t = a - (base part of H) and
r_t = b - (fiber part of H). The inequalities checked on a compact sample K:

    |x_t|_0           <= delta |a|_{1,m,K}
    |r_t|_0           <= delta^2 |b|_{2,m,K}
    |P^H - P_h|_0     <= delta |a|_{2,K}
    |R^H - R_h|_0     <= delta^2 |b|_{3,K}
    |S^H - S_h|_0     <= delta (2 |b|_{2,m,K} + delta |b|_{3,m,K} + m |mu|_1 |b|_{2,m,K})

|.|_0 of a vector or matrix valued function is the sum over entries of the
sup over K of the absolute value. Seminorms with an ``m`` only differentiate
along fiber coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bundle import BundlePoint, as_points
from .calculus import SampleGrid, jacobian_blocks, seminorm
from .hadamard import BundleMap
from .linearize import HomotopyConfig, homotopy_blocks, linhom

SLACK = 1e-6
THIRD_ORDER_ALLOWANCE = 1e-4
# first and second order inequalities get a small floor for FD rounding
FD_NOISE_FLOOR = 1e-8
INEQUALITIES = ("x", "r", "P", "R", "S")


def deviation_x(h: BundleMap, cfg: HomotopyConfig, t: float, x, v=None) -> np.ndarray:
    """a(x, v) - a(x, phi v); (N, n_x) for a batch, (n_x,) for one point."""
    single = isinstance(x, BundlePoint) or (v is not None and np.ndim(v) == 1)
    xs, vs = as_points(x, v, h.source.base_dim, h.source.fiber_dim)
    a, _ = h(xs, vs)
    H = linhom(h, cfg, t, xs, vs, check_domain=False)
    out = a - H[:, : h.target.base_dim]
    return out[0] if single else out


def deviation_r(h: BundleMap, cfg: HomotopyConfig, t: float, x, v=None) -> np.ndarray:
    """b(x, v) minus the fiber part of H(h, delta, t)(x, v)."""
    single = isinstance(x, BundlePoint) or (v is not None and np.ndim(v) == 1)
    xs, vs = as_points(x, v, h.source.base_dim, h.source.fiber_dim)
    _, b = h(xs, vs)
    H = linhom(h, cfg, t, xs, vs, check_domain=False)
    out = b - H[:, h.target.base_dim:]
    return out[0] if single else out


def _entry_sup_sum(values: np.ndarray) -> float:
    """Sum over entries of the sup over points (axis 0)."""
    if values.size == 0:
        return 0.0
    flat = np.abs(values).reshape(len(values), -1)
    return float(np.sum(np.max(flat, axis=0)))


def estimate_points(h: BundleMap, delta: float, base_points: int = 5, fiber_points: int = 9,
                    tube_points: int = 9) -> np.ndarray:
    """Stacked sample points: a coarse domain grid plus a grid of the tube |v| <= b delta.

    The tube part is what resolves the deviations for small delta.
    """
    x1, v1 = h.domain.grid(base_points, fiber_points)
    r = min(2.0 * delta, h.domain.fiber_radius)
    x2, v2 = h.domain.grid(base_points, tube_points, fiber_radius=r)
    pts = np.vstack([np.hstack([x1, v1]), np.hstack([x2, v2])])
    return np.unique(pts, axis=0)


@dataclass
class EstimateRecord:
    name: str
    lhs: float
    rhs: float
    allowance: float
    passed: bool
    t: float
    delta: float
    grid_id: str

    @property
    def margin(self) -> float:
        return self.rhs * (1 + SLACK) + self.allowance - self.lhs

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "allowance": self.allowance,
            "margin": self.margin,
            "pass": self.passed,
            "t": self.t,
            "delta": self.delta,
            "grid_id": self.grid_id,
        }


@dataclass
class EstimateReport:
    records: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def by_name(self, name: str) -> EstimateRecord:
        return next(r for r in self.records if r.name == name)

    def extend(self, other: "EstimateReport"):
        self.records.extend(other.records)

    def to_json(self) -> dict:
        return {
            "pass": self.passed,
            "slack": SLACK,
            "third_order_allowance": THIRD_ORDER_ALLOWANCE,
            "fd_noise_floor": FD_NOISE_FLOOR,
            "records": [r.to_json() for r in self.records],
        }

    def table(self) -> str:
        lines = [f"{'ineq':<5}{'delta':>9}{'t':>6}{'lhs':>13}{'rhs':>13}{'margin':>13}  ok"]
        for r in self.records:
            lines.append(
                f"{r.name:<5}{r.delta:>9.4g}{r.t:>6.2f}{r.lhs:>13.4e}{r.rhs:>13.4e}{r.margin:>13.4e}  "
                + ("yes" if r.passed else "NO")
            )
        return "\n".join(lines)


def rhs_values(h: BundleMap, delta: float, K: np.ndarray, mu_lip: float) -> dict:
    """Right-hand sides of the five inequalities on the sample K."""
    mx = h.source.base_dim
    m = h.source.fiber_dim
    nx = h.target.base_dim

    def a_fn(w):
        return h.stacked(w)[:, :nx]

    def b_fn(w):
        return h.stacked(w)[:, nx:]

    a1m = seminorm(a_fn, 1, K, True, mx) if nx else 0.0
    a2 = seminorm(a_fn, 2, K, False) if nx else 0.0
    b2m = seminorm(b_fn, 2, K, True, mx)
    b3m = seminorm(b_fn, 3, K, True, mx)
    b3 = seminorm(b_fn, 3, K, False)
    return {
        "x": delta * a1m,
        "r": delta ** 2 * b2m,
        "P": delta * a2,
        "R": delta ** 2 * b3,
        "S": delta * (2 * b2m + delta * b3m + m * mu_lip * b2m),
    }


def verify_estimates(h: BundleMap, cfg: HomotopyConfig, t: float, K=None, grid_id: str = "") -> EstimateReport:
    """Measure both sides of every inequality on K and record pass/fail."""
    if K is None:
        K = estimate_points(h, cfg.delta)
        grid_id = grid_id or f"domain+tube({len(K)})"
    elif isinstance(K, SampleGrid):
        grid_id = grid_id or f"grid{list(K.counts)}"
        K = K.points()
    K = np.atleast_2d(np.asarray(K, dtype=float))
    grid_id = grid_id or f"points({len(K)})"
    mx = h.source.base_dim
    xs, vs = K[:, :mx], K[:, mx:]

    lhs = {
        "x": _entry_sup_sum(deviation_x(h, cfg, t, xs, vs)),
        "r": _entry_sup_sum(deviation_r(h, cfg, t, xs, vs)),
    }
    bh = homotopy_blocks(h, cfg, t, xs, vs)
    b0 = jacobian_blocks(h, xs, vs)
    for name in ("P", "R", "S"):
        lhs[name] = _entry_sup_sum(getattr(bh, name) - getattr(b0, name))
    rhs = rhs_values(h, cfg.delta, K, cfg.bump.lipschitz())

    report = EstimateReport()
    for name in INEQUALITIES:
        allowance = THIRD_ORDER_ALLOWANCE if name in ("R", "S") else FD_NOISE_FLOOR
        ok = lhs[name] <= rhs[name] * (1 + SLACK) + allowance
        report.records.append(
            EstimateRecord(name, lhs[name], rhs[name], allowance, bool(ok), float(t), float(cfg.delta), grid_id)
        )
    return report


def sweep_estimates(h: BundleMap, deltas: Sequence[float], t_grid: Sequence[float],
                    template: Optional[HomotopyConfig] = None) -> EstimateReport:
    template = template or HomotopyConfig(delta=max(deltas))
    report = EstimateReport()
    for d in deltas:
        cfg = template.with_delta(d)
        K = estimate_points(h, d)
        for t in t_grid:
            report.extend(verify_estimates(h, cfg, t, K, grid_id=f"domain+tube({len(K)})"))
    return report


# --- block continuity ----------------------------------------------------------


def probe_points(h: BundleMap, delta: float, base_grid=None, radial: int = 9, directions: int = 8) -> np.ndarray:
    """Zero-section base points combined with fiber samples of the tube |v| <= b delta."""
    mx, m = h.source.base_dim, h.source.fiber_dim
    if mx == 0:
        xs = np.zeros((1, 0))
    elif base_grid is None:
        xs = h.domain.base_grid(5)
    else:
        xs = np.asarray(base_grid, dtype=float).reshape(-1, mx)
    radii = np.linspace(0.0, 2.0 * delta, radial)
    if m == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        ang = 2 * np.pi * np.arange(directions) / directions
        dirs = np.zeros((directions, m))
        dirs[:, 0], dirs[:, 1] = np.cos(ang), np.sin(ang)
    vs = np.unique(np.vstack([r * dirs for r in radii]), axis=0)
    vs = vs[h.domain.fiber_contains(vs)]
    X = np.repeat(xs, len(vs), axis=0)
    V = np.tile(vs, (len(xs), 1))
    return np.hstack([X, V])


@dataclass
class ContinuityReport:
    t: float
    deltas: list
    gaps: dict              # block name -> list of gaps, one per delta
    q_gap_zero_section: list
    fd_tol: float
    ratio_required: float
    shrink_pass: dict

    @property
    def passed(self) -> bool:
        return all(self.shrink_pass.values())

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "deltas": self.deltas,
            "gaps": self.gaps,
            "q_gap_zero_section": self.q_gap_zero_section,
            "fd_tol": self.fd_tol,
            "ratio_required": self.ratio_required,
            "shrink_pass": self.shrink_pass,
            "pass": self.passed,
        }


def block_continuity_probe(
    h: BundleMap,
    cfg: HomotopyConfig,
    t: float,
    deltas: Sequence[float],
    zero_section_grid=None,
    fd_tol: float = 1e-5,
    ratio_required: float = 3.5,
) -> ContinuityReport:
    """Track the P, R, S and Q gaps between H(h, delta, t) and h as delta -> 0.

    P, R, S gaps are measured over the tube around the zero-section grid (on
    the zero section itself they vanish for every delta). For consecutive
    deltas with ratio q the gap must fall by at least ratio_required * q / 4,
    unless the smaller gap is already below ``fd_tol``. The Q gap is taken on
    the zero section and is not expected to shrink.
    """
    deltas = [float(d) for d in deltas]
    if any(d <= 0 for d in deltas) or any(d1 <= d2 for d1, d2 in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be positive and strictly decreasing")
    mx, m = h.source.base_dim, h.source.fiber_dim
    if mx == 0:
        zs = np.zeros((1, 0))
    elif zero_section_grid is None:
        zs = h.domain.base_grid(5)
    else:
        zs = np.asarray(zero_section_grid, dtype=float).reshape(-1, mx)
    gaps = {"P": [], "R": [], "S": []}
    qgaps = []
    for d in deltas:
        c = cfg.with_delta(d)
        pts = probe_points(h, d, zs)
        bh = homotopy_blocks(h, c, t, pts[:, :mx], pts[:, mx:])
        b0 = jacobian_blocks(h, pts[:, :mx], pts[:, mx:])
        for name in gaps:
            diff = getattr(bh, name) - getattr(b0, name)
            gaps[name].append(float(np.max(np.sum(np.abs(diff), axis=(1, 2)))) if diff.size else 0.0)
        zeros = np.zeros((len(zs), m))
        qh = homotopy_blocks(h, c, t, zs, zeros).Q
        q0 = jacobian_blocks(h, zs, zeros).Q
        qgaps.append([float(g) for g in np.sum(np.abs(qh - q0), axis=(1, 2))] if q0.size else [0.0] * len(zs))
    shrink = {}
    for name, seq in gaps.items():
        ok = True
        for (d1, g1), (d2, g2) in zip(zip(deltas, seq), zip(deltas[1:], seq[1:])):
            if g2 <= fd_tol:
                continue
            need = ratio_required * (d1 / d2) / 4.0
            ok = ok and g1 / g2 >= need
        shrink[name] = bool(ok)
    return ContinuityReport(float(t), deltas, gaps, qgaps, fd_tol, ratio_required, shrink)


__all__ = [
    "ContinuityReport", "EstimateRecord", "EstimateReport", "FD_NOISE_FLOOR",
    "INEQUALITIES", "SLACK", "THIRD_ORDER_ALLOWANCE", "block_continuity_probe",
    "deviation_r", "deviation_x", "estimate_points", "probe_points",
    "rhs_values", "sweep_estimates", "verify_estimates",
]
