"""Bundle maps, the fiberwise tangent map and the Hadamard homotopy.

For a map h = (a, b) sending the zero section into the zero section the
Hadamard homotopy is

    g(tau, x, v) = (a(x, tau v), b(x, tau v) / tau)                 tau > 0
                 = (a(x, tau v), sum_i v_i int_0^1 db/dv_i(x, s tau v) ds)

and the second form extends it smoothly to tau = 0, where it becomes the
fiberwise tangent map (x, v) -> (a(x, 0), S(x, 0) v).
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .bundle import BundlePoint, Domain, TrivialBundle, as_points
from .calculus import derivative, gl_nodes, jacobian_blocks
from .exprlang import CompiledExpr, parse, to_string

ZERO_SECTION_TOL = 1e-10
DIRECT_TAU_THRESHOLD = 1e-6
DEFAULT_QUAD_NODES = 32
DEFAULT_LIMIT_TS = (1e-3, 5e-4, 2.5e-4, 1.25e-4)


class NotZeroSectionPreserving(ValueError):
    """b(x, 0) != 0 somewhere: the map does not send zero section to zero section."""


class LimitNotConverged(ArithmeticError):
    def __init__(self, message, estimate, spread):
        super().__init__(message)
        self.estimate = estimate
        self.spread = spread


def default_var_names(base_dim: int, fiber_dim: int):
    base = ["x"] if base_dim == 1 else [f"x{i + 1}" for i in range(base_dim)]
    fiber = ["v"] if fiber_dim == 1 else [f"v{i + 1}" for i in range(fiber_dim)]
    return base, fiber


class BundleMap:
    """A smooth map h = (a, b) between trivial bundles with b(x, 0) = 0.

    ``func(x, v)`` takes arrays (N, m_x), (N, m_r) and returns (a, b) with
    shapes (N, n_x), (N, n_r). Use :meth:`from_expressions` to build one from
    strings of the expression language.
    """

    def __init__(
        self,
        source: TrivialBundle,
        target: TrivialBundle,
        func: Callable,
        domain: Optional[Domain] = None,
        name: str = "",
        expressions: Optional[dict] = None,
        check: bool = True,
    ):
        self.source = source
        self.target = target
        self.func = func
        if domain is None:
            domain = Domain(((-1.0, 1.0),) * source.base_dim, 1.0, "ball", source.fiber_dim)
        if domain.base_dim != source.base_dim or domain.fiber_dim != source.fiber_dim:
            raise ValueError("domain dimensions do not match the source bundle")
        self.domain = domain
        self.name = name
        self.expressions = expressions
        if check:
            self.check_zero_section()

    @classmethod
    def from_expressions(
        cls,
        a: Sequence[str],
        b: Sequence[str],
        base_dim: int,
        fiber_dim: int,
        domain: Optional[Domain] = None,
        base_vars: Optional[Sequence[str]] = None,
        fiber_vars: Optional[Sequence[str]] = None,
        name: str = "",
    ) -> "BundleMap":
        dbase, dfiber = default_var_names(base_dim, fiber_dim)
        base_vars = list(base_vars or dbase)
        fiber_vars = list(fiber_vars or dfiber)
        if len(base_vars) != base_dim or len(fiber_vars) != fiber_dim:
            raise ValueError("variable name lists do not match bundle dimensions")
        names = base_vars + fiber_vars
        a_fns = [CompiledExpr(s, names) for s in a]
        b_fns = [CompiledExpr(s, names) for s in b]
        if not b_fns:
            raise ValueError("target fiber dimension must be positive")

        def func(x, v):
            w = np.hstack([x, v])
            av = np.stack([f(w) for f in a_fns], axis=1) if a_fns else np.zeros((len(w), 0))
            bv = np.stack([f(w) for f in b_fns], axis=1)
            return av, bv

        exprs = {
            "a": [to_string(parse(s)) for s in a],
            "b": [to_string(parse(s)) for s in b],
            "base_vars": base_vars,
            "fiber_vars": fiber_vars,
        }
        return cls(
            TrivialBundle(base_dim, fiber_dim),
            TrivialBundle(len(a), len(b)),
            func,
            domain,
            name=name,
            expressions=exprs,
        )

    @classmethod
    def from_config(cls, cfg: dict, domain_cfg: Optional[dict] = None) -> "BundleMap":
        base_dim = int(cfg["base_dim"])
        fiber_dim = int(cfg["fiber_dim"])
        domain = Domain.from_config(domain_cfg, fiber_dim) if domain_cfg else None
        return cls.from_expressions(
            cfg.get("a", []),
            cfg["b"],
            base_dim,
            fiber_dim,
            domain=domain,
            base_vars=cfg.get("base_vars"),
            fiber_vars=cfg.get("fiber_vars"),
            name=cfg.get("name", ""),
        )

    # evaluation ------------------------------------------------------------

    def __call__(self, x, v=None):
        single = isinstance(x, BundlePoint) or (v is not None and np.ndim(v) == 1)
        xs, vs = as_points(x, v, self.source.base_dim, self.source.fiber_dim)
        a, b = self.func(xs, vs)
        a = np.asarray(a, dtype=float).reshape(len(vs), self.target.base_dim)
        b = np.asarray(b, dtype=float).reshape(len(vs), self.target.fiber_dim)
        if single:
            return a[0], b[0]
        return a, b

    def stacked(self, w) -> np.ndarray:
        """Evaluate on concatenated source coordinates, return concatenated target ones."""
        w = np.atleast_2d(np.asarray(w, dtype=float))
        a, b = self(w[:, : self.source.base_dim], w[:, self.source.base_dim:])
        return np.hstack([a, b])

    def fiber_part(self, w) -> np.ndarray:
        return self.stacked(w)[:, self.target.base_dim:]

    @property
    def is_self_map(self) -> bool:
        return self.source == self.target

    def check_zero_section(self, base_points: int = 9) -> float:
        xs = self.domain.base_grid(base_points)
        _, b = self(xs, np.zeros((len(xs), self.source.fiber_dim)))
        worst = float(np.max(np.abs(b))) if b.size else 0.0
        if worst > ZERO_SECTION_TOL:
            raise NotZeroSectionPreserving(
                f"b(x, 0) reaches {worst:.3e} > {ZERO_SECTION_TOL:g}; map is not in C(D;F)"
            )
        return worst

    def describe(self) -> dict:
        out = {
            "name": self.name,
            "source": [self.source.base_dim, self.source.fiber_dim],
            "target": [self.target.base_dim, self.target.fiber_dim],
        }
        if self.expressions:
            out["expressions"] = self.expressions
        return out

    def __repr__(self):
        return f"BundleMap({self.name or '<anonymous>'}, {self.source} -> {self.target})"


def fiber_matrix_at_zero(h: BundleMap, x) -> np.ndarray:
    """S(x, 0) for each base point; shape (N, n_r, m_r)."""
    if h.source.base_dim == 0:
        xs = np.zeros((1, 0))
    else:
        xs = np.asarray(x, dtype=float).reshape(-1, h.source.base_dim)
    zeros = np.zeros((len(xs), h.source.fiber_dim))
    return jacobian_blocks(h, xs, zeros).S


def fiber_tangent(h: BundleMap) -> BundleMap:
    """The vector bundle morphism (x, v) -> (a(x, 0), S(x, 0) v)."""

    def func(x, v):
        a0, _ = h(x, np.zeros_like(v))
        S = fiber_matrix_at_zero(h, x)
        if len(S) != len(v):
            S = np.broadcast_to(S[:1], (len(v),) + S.shape[1:])
        return a0, np.einsum("nij,nj->ni", S, v)

    return BundleMap(h.source, h.target, func, h.domain, name=f"Tfib({h.name})", check=False)


def fiber_tangent_limit(h: BundleMap, p, t_sequence: Sequence[float] = DEFAULT_LIMIT_TS, tol: float = 1e-6):
    """lim_{t->0} b(x, t v) / t by two-level Richardson (Neville) extrapolation.

    Serves as an independent check on :func:`fiber_tangent`. Raises
    LimitNotConverged when the last two extrapolants differ by more than ``tol``.
    """
    ts = [float(t) for t in t_sequence]
    if len(ts) < 3:
        raise ValueError("need at least three t values for two-level extrapolation")
    if any(t <= 0 for t in ts) or any(t1 <= t2 for t1, t2 in zip(ts, ts[1:])):
        raise ValueError("t_sequence must be positive and strictly decreasing")
    if isinstance(p, BundlePoint):
        x, v = p.x, p.v
    else:
        x, v = p
    xs, vs = as_points(x, v, h.source.base_dim, h.source.fiber_dim)
    F = []
    for t in ts:
        _, b = h(xs, t * vs)
        F.append(b[0] / t)
    level1 = [(ts[i] * F[i + 1] - ts[i + 1] * F[i]) / (ts[i] - ts[i + 1]) for i in range(len(ts) - 1)]
    level2 = [
        (ts[i] * level1[i + 1] - ts[i + 2] * level1[i]) / (ts[i] - ts[i + 2])
        for i in range(len(ts) - 2)
    ]
    estimate = level2[-1]
    spread = float(np.max(np.abs(level2[-1] - level2[-2]))) if len(level2) > 1 else 0.0
    if spread > tol:
        raise LimitNotConverged(
            f"extrapolants differ by {spread:.3e} > {tol:g}", estimate, spread
        )
    return estimate


def _g(h: BundleMap, tau, x, v, quad_nodes: int = DEFAULT_QUAD_NODES):
    """Hadamard homotopy on a batch; tau may vary per point. Returns (a, b)."""
    n = len(v)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (n,))
    tv = tau[:, None] * v
    a, b_direct = h(x, tv)
    b = np.empty_like(b_direct)
    direct = tau > DIRECT_TAU_THRESHOLD
    b[direct] = b_direct[direct] / tau[direct, None]
    small = ~direct
    if np.any(small):
        b[small] = _quadrature_fiber(h, tau[small], x[small], v[small], quad_nodes)
    return a, b


def _quadrature_fiber(h, tau, x, v, quad_nodes):
    """sum_i v_i int_0^1 db/dv_i(x, s tau v) ds with FD partials at each node."""
    s, w = gl_nodes(quad_nodes, 0.0, 1.0)
    m, mx, mr = len(v), h.source.base_dim, h.source.fiber_dim
    # points ordered (point, node)
    xs = np.repeat(x, len(s), axis=0)
    vs = (np.repeat(tau[:, None] * v, len(s), axis=0)) * np.tile(s, m)[:, None]
    pts = np.hstack([xs, vs])
    integrand = np.zeros((len(pts), h.target.fiber_dim))
    vrep = np.repeat(v, len(s), axis=0)
    for i in range(mr):
        alpha = [0] * (mx + mr)
        alpha[mx + i] = 1
        integrand += vrep[:, i:i + 1] * derivative(h.fiber_part, pts, alpha)
    integrand = integrand.reshape(m, len(s), -1)
    return np.einsum("k,mkj->mj", w, integrand)


def hadamard_homotopy(h: BundleMap, tau, x, v=None, quad_nodes: int = DEFAULT_QUAD_NODES):
    """g(tau, p) as stacked target coordinates.

    A single BundlePoint (or 1-D ``v``) gives a 1-D vector; a batch gives (N, n).
    """
    if np.any(np.asarray(tau) < 0) or np.any(np.asarray(tau) > 1):
        raise ValueError("tau must lie in [0, 1]")
    single = isinstance(x, BundlePoint) or (v is not None and np.ndim(v) == 1)
    xs, vs = as_points(x, v, h.source.base_dim, h.source.fiber_dim)
    a, b = _g(h, tau, xs, vs, quad_nodes)
    out = np.hstack([a, b])
    return out[0] if single else out


def check_hadamard_identity(h: BundleMap, tau, x, v=None, quad_nodes: int = DEFAULT_QUAD_NODES):
    """Residual of h(tau p) = tau g(tau, p); base parts are compared directly.

    Returns a float for a single point, else one residual per point. tau = 0
    gives 0 by convention.
    """
    single = isinstance(x, BundlePoint) or (v is not None and np.ndim(v) == 1)
    xs, vs = as_points(x, v, h.source.base_dim, h.source.fiber_dim)
    tau_arr = np.broadcast_to(np.asarray(tau, dtype=float), (len(vs),))
    a_h, b_h = h(xs, tau_arr[:, None] * vs)
    a_g, b_g = _g(h, tau_arr, xs, vs, quad_nodes)
    diff = np.hstack([a_h - a_g, b_h - tau_arr[:, None] * b_g])
    res = np.sqrt(np.sum(diff * diff, axis=1))
    res[tau_arr == 0] = 0.0
    return float(res[0]) if single else res


def hadamard_map(h: BundleMap, tau: float, quad_nodes: int = DEFAULT_QUAD_NODES) -> BundleMap:
    """g_tau as a BundleMap of its own (for Jacobian and zero-section checks)."""

    def func(x, v):
        return _g(h, tau, x, v, quad_nodes)

    return BundleMap(h.source, h.target, func, h.domain, name=f"g[{tau:g}]({h.name})", check=False)


__all__ = [
    "BundleMap", "DEFAULT_QUAD_NODES", "DIRECT_TAU_THRESHOLD", "LimitNotConverged",
    "NotZeroSectionPreserving", "check_hadamard_identity", "fiber_matrix_at_zero",
    "fiber_tangent", "fiber_tangent_limit", "hadamard_homotopy", "hadamard_map",
]
