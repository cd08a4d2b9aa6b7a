"""Linearizing homotopies for smooth maps between trivialized vector bundles."""

__version__ = "0.1.0"

from .bundle import BundlePoint, Domain, TrivialBundle
from .hadamard import BundleMap, fiber_tangent, hadamard_homotopy
from .linearize import HomotopyConfig, admissible_delta, linhom, mu, phi

__all__ = [
    "BundleMap", "BundlePoint", "Domain", "HomotopyConfig", "TrivialBundle",
    "__version__", "admissible_delta", "fiber_tangent", "hadamard_homotopy",
    "linhom", "mu", "phi",
]
