"""Trivialized vector bundles B x R^r -> B and their neighborhoods.

Points are stored as a base part ``x`` and a fiber part ``v``. Everything
that operates on many points takes arrays ``x`` of shape (N, m_x) and
``v`` of shape (N, m_r).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class TrivialBundle:
    base_dim: int
    fiber_dim: int

    def __post_init__(self):
        if self.base_dim < 0:
            raise ValueError("base_dim must be non-negative")
        if self.fiber_dim < 1:
            raise ValueError("fiber_dim must be positive")

    @property
    def dim(self) -> int:
        return self.base_dim + self.fiber_dim

    def point(self, x=(), v=()) -> "BundlePoint":
        p = BundlePoint(x, v)
        if p.x.size != self.base_dim or p.v.size != self.fiber_dim:
            raise ValueError(
                f"point dims ({p.x.size}, {p.v.size}) do not match bundle "
                f"({self.base_dim}, {self.fiber_dim})"
            )
        return p

    def split(self, w):
        """Split stacked coordinates (N, m_x + m_r) into (x, v)."""
        w = np.atleast_2d(np.asarray(w, dtype=float))
        return w[:, : self.base_dim], w[:, self.base_dim:]

    @classmethod
    def from_config(cls, cfg: dict) -> "TrivialBundle":
        return cls(int(cfg["base_dim"]), int(cfg["fiber_dim"]))


@dataclass(frozen=True)
class BundlePoint:
    x: np.ndarray
    v: np.ndarray

    def __init__(self, x=(), v=()):
        object.__setattr__(self, "x", np.array(x, dtype=float).reshape(-1))
        object.__setattr__(self, "v", np.array(v, dtype=float).reshape(-1))

    def __eq__(self, other):
        if not isinstance(other, BundlePoint):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.v, other.v)

    def __hash__(self):
        return hash((self.x.tobytes(), self.v.tobytes()))

    @property
    def w(self) -> np.ndarray:
        return np.concatenate([self.x, self.v])

    def on_zero_section(self) -> bool:
        return not np.any(self.v)


def scale(t: float, p: BundlePoint) -> BundlePoint:
    """Fiberwise scalar multiplication (x, v) -> (x, t v)."""
    return BundlePoint(p.x, t * p.v)


def norm(p: BundlePoint) -> float:
    return float(np.sqrt(np.sum(p.v * p.v)))


def fiber_norms(v) -> np.ndarray:
    v = np.atleast_2d(np.asarray(v, dtype=float))
    return np.sqrt(np.sum(v * v, axis=1))


def in_tube(p: BundlePoint, eps: float) -> bool:
    """Membership in the closed tube R_eps = {||v|| <= eps}."""
    if not eps > 0:
        raise ValueError(f"tube radius must be positive, got {eps!r}")
    return norm(p) <= eps


@dataclass(frozen=True)
class Domain:
    """Star-like neighborhood of the zero section: base box times fiber ball or box.

    ``base_box`` is a sequence of (lo, hi) pairs, one per base axis. The fiber
    part is either a ball of ``fiber_radius`` or the box [-r, r]^m_r.
    """

    base_box: tuple = ()
    fiber_radius: float = 1.0
    fiber_shape: str = "ball"
    fiber_dim: int = 1

    def __post_init__(self):
        if self.fiber_shape not in ("ball", "box"):
            raise ValueError(f"unknown fiber shape {self.fiber_shape!r}")
        if not self.fiber_radius > 0:
            raise ValueError("fiber_radius must be positive")
        box = tuple((float(lo), float(hi)) for lo, hi in self.base_box)
        for lo, hi in box:
            if lo > hi:
                raise ValueError(f"empty base interval [{lo}, {hi}]")
        object.__setattr__(self, "base_box", box)

    @property
    def base_dim(self) -> int:
        return len(self.base_box)

    @property
    def tube_radius(self) -> float:
        """Largest eps with R_eps (over the base box) inside the domain."""
        return self.fiber_radius

    def contains(self, x, v, slack: float = 1e-12) -> np.ndarray:
        v = np.asarray(v, dtype=float).reshape(-1, self.fiber_dim)
        x = np.asarray(x, dtype=float).reshape(len(v), self.base_dim)
        ok = np.ones(len(v), dtype=bool)
        for i, (lo, hi) in enumerate(self.base_box):
            ok &= (x[:, i] >= lo - slack) & (x[:, i] <= hi + slack)
        ok &= self.fiber_contains(v, slack)
        return ok

    def fiber_contains(self, v, slack: float = 1e-12) -> np.ndarray:
        v = np.asarray(v, dtype=float).reshape(-1, self.fiber_dim)
        if self.fiber_shape == "ball":
            return fiber_norms(v) <= self.fiber_radius * (1 + slack)
        return np.all(np.abs(v) <= self.fiber_radius * (1 + slack), axis=1)

    def grid(self, base_points: int, fiber_points: int, fiber_radius: Optional[float] = None):
        """Tensor grid (x, v) covering the domain, clipped to the fiber shape."""
        r = self.fiber_radius if fiber_radius is None else fiber_radius
        axes = [np.linspace(lo, hi, base_points) for lo, hi in self.base_box]
        axes += [np.linspace(-r, r, fiber_points)] * self.fiber_dim
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
        x, v = mesh[:, : self.base_dim], mesh[:, self.base_dim:]
        keep = self.fiber_contains(v) & (fiber_norms(v) <= r * (1 + 1e-12))
        return x[keep], v[keep]

    def base_grid(self, base_points: int) -> np.ndarray:
        if self.base_dim == 0:
            return np.zeros((1, 0))
        axes = [np.linspace(lo, hi, base_points) for lo, hi in self.base_box]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))

    @classmethod
    def from_config(cls, cfg: dict, fiber_dim: int) -> "Domain":
        fiber = cfg.get("fiber", {})
        return cls(
            base_box=tuple(tuple(b) for b in cfg.get("base_box", [])),
            fiber_radius=float(fiber.get("radius", 1.0)),
            fiber_shape=fiber.get("shape", "ball"),
            fiber_dim=fiber_dim,
        )


def as_points(x, v, base_dim: int, fiber_dim: int):
    """Normalize (x, v) inputs (BundlePoint or arrays) to 2-D arrays."""
    if isinstance(x, BundlePoint):
        x, v = x.x, x.v
    v = np.asarray(v, dtype=float).reshape(-1, fiber_dim)
    if base_dim == 0:
        return np.zeros((len(v), 0)), v
    x = np.asarray(x, dtype=float).reshape(-1, base_dim)
    if len(x) == 1 and len(v) > 1:
        x = np.repeat(x, len(v), axis=0)
    return x, v


__all__ = [
    "BundlePoint", "Domain", "TrivialBundle", "as_points", "fiber_norms",
    "in_tube", "norm", "scale",
]
