"""Path norms over grids and power-law distortion functions.

Two norm families are supported on a grid restriction of a field:

* ``sup``: the maximum absolute value over grid points, and
* ``lp(p)``: a trapezoid-weighted discrete L^p norm, the tensor product
  of the one-dimensional trapezoid rule on each axis, so that it is a
  Riemann approximation of the continuum L^p([0,1]^d) norm.

Distortion is measured by ``rho(x) = x^r`` with ``r > 0`` applied to
the distance between a path and its reproduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _accel
from .errors import ConfigError, DimensionMismatch
from .gaussian import GridSpec

__all__ = [
    "NormSpec",
    "sup_norm",
    "lp_norm",
    "trapezoid_weights",
    "path_norm",
    "ensemble_norms",
    "Distortion",
]


@dataclass(frozen=True)
class NormSpec:
    """Norm selector: ``kind`` is ``"sup"`` or ``"lp"`` (with exponent)."""

    kind: str
    p: Optional[float] = None

    def __post_init__(self):
        if self.kind == "sup":
            if self.p is not None:
                raise ConfigError("sup norm takes no exponent")
        elif self.kind == "lp":
            if self.p is None or not (self.p >= 1.0) or math.isinf(self.p):
                raise ConfigError(f"lp norm needs a finite exponent >= 1, got {self.p}")
        else:
            raise ConfigError(f"unknown norm kind {self.kind!r}")

    def token(self) -> str:
        return "sup" if self.kind == "sup" else f"l{self.p:.17g}"


def sup_norm() -> NormSpec:
    return NormSpec("sup")


def lp_norm(p: float) -> NormSpec:
    return NormSpec("lp", float(p))


def trapezoid_weights(grid: GridSpec) -> np.ndarray:
    """Flattened tensor-product trapezoid weights over the grid.

    Each axis contributes ``h * [1/2, 1, ..., 1, 1/2]`` with
    ``h = 1/(n-1)``; a one-point axis contributes the single weight 1.
    The weights sum to 1, the volume of the cube.
    """
    n = grid.points_per_axis
    if n == 1:
        axis = np.array([1.0])
    else:
        h = 1.0 / (n - 1)
        axis = np.full(n, h)
        axis[0] *= 0.5
        axis[-1] *= 0.5
    w = axis
    for _ in range(grid.dim - 1):
        w = np.kron(w, axis)
    return w


def _as_block(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    a = np.ascontiguousarray(values, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != grid.size:
        raise DimensionMismatch(
            f"expected {grid.size} grid values per path, got shape {values.shape}"
        )
    return a


def ensemble_norms(values: np.ndarray, norm: NormSpec, grid: GridSpec) -> np.ndarray:
    """Norm of every row of ``values`` (paths restricted to the grid)."""
    block = _as_block(values, grid)
    if norm.kind == "sup":
        return _accel.sup_norms(block)
    return _accel.lp_norms(block, trapezoid_weights(grid), float(norm.p))


def path_norm(values: np.ndarray, norm: NormSpec, grid: GridSpec) -> float:
    """Norm of a single path given as its vector of grid values."""
    return float(ensemble_norms(values, norm, grid)[0])


@dataclass(frozen=True)
class Distortion:
    """Power distortion ``rho(x) = x^r`` on distances ``x >= 0``."""

    r: float

    def __post_init__(self):
        if not (self.r > 0.0) or math.isinf(self.r):
            raise ConfigError(f"distortion exponent must be finite and positive, got {self.r}")

    def __call__(self, x):
        arr = np.asarray(x, dtype=np.float64)
        if np.any(arr < 0.0):
            raise ConfigError("distortion argument must be nonnegative")
        out = arr ** self.r
        return float(out) if np.isscalar(x) else out

    def token(self) -> str:
        return f"r{self.r:.17g}"
