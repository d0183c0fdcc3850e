"""Centered Gaussian fields on the unit cube: kernels, grids, sampling.

A model is a covariance kernel together with a finite evaluation grid
``linspace(0, 1, n)^d``.  The covariance matrix over the grid is built
exactly (separable kernels assemble per-axis factors with Kronecker
products; integrated kernels use an adaptive trapezoid quadrature) and
factored through a symmetric eigendecomposition, which handles the
rank-deficient matrices that arise from pinned-to-zero processes.

Sampling is blocked and counter-based: sample ``i`` lives in block
``i // 1024``, and block ``b`` draws from ``Philox(key=(seed, tag),
counter=b << 128)``.  Identical ``(kernel, grid, n_samples, seed)``
therefore yield bit-identical paths regardless of how many blocks are
consumed, in which order, or how many threads the caller uses.

Standard Brownian motion (the d = 1 fractional sheet at H = 1/2) takes
an exact shortcut: its covariance ``min(s, t)`` factors as the
lower-triangular cumulative-sum operator on independent increments, so
paths are built in O(grid) per sample instead of O(grid^2).  The law is
identical; only the PSD factor differs, and the empirical-covariance
tests cover both routes.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatch,
    FactorizationFailure,
    GridTooLarge,
    KernelParameterOutOfRange,
    QuadratureResolutionTooCoarse,
)

__all__ = [
    "GRID_POINT_CAP",
    "GridSpec",
    "FractionalBrownianSheet",
    "LevyFractionalBrownianMotion",
    "IntegratedBrownianMotion",
    "IntegratedBrownianSheet",
    "FractionalOrnsteinUhlenbeck",
    "SlepianField",
    "StandardNormal1D",
    "KERNEL_FAMILIES",
    "build_kernel",
    "covariance_matrix",
    "psd_factor",
    "PathEnsemble",
    "sample_paths",
    "iter_path_blocks",
    "write_array",
    "read_array",
    "cache_path",
]

GRID_POINT_CAP = 16384
BLOCK_SAMPLES = 1024
STREAM_PATHS = 1  # Philox key tag for path sampling


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridSpec:
    """Regular grid ``linspace(0, 1, points_per_axis)^dim``.

    The total point count ``points_per_axis ** dim`` must not exceed
    ``cap`` (default 16384); larger requests raise ``GridTooLarge``
    before any allocation happens.
    """

    dim: int
    points_per_axis: int
    cap: int = GRID_POINT_CAP

    def __post_init__(self):
        if self.dim < 1 or self.points_per_axis < 1:
            raise ConfigError("grid dim and points_per_axis must be >= 1")
        if self.points_per_axis ** self.dim > self.cap:
            raise GridTooLarge(
                f"{self.points_per_axis}^{self.dim} grid points exceed cap {self.cap}"
            )

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dim

    def axis(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.points_per_axis)

    def points(self) -> np.ndarray:
        """All grid points as an ``(size, dim)`` array in C order."""
        axes = [self.axis()] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def token(self) -> str:
        return f"grid{self.dim}x{self.points_per_axis}"


# ---------------------------------------------------------------------------
# kernels


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise KernelParameterOutOfRange(msg)


def _as_tuple(value, dim_hint=None) -> Tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),) * (dim_hint or 1)
    return tuple(float(v) for v in value)


@dataclass(frozen=True)
class FractionalBrownianSheet:
    """Tensor fractional Brownian sheet on ``[0, 1]^d``.

    Covariance factors per axis as
    ``(s^(2H_j) + t^(2H_j) - |s - t|^(2H_j)) / 2`` with Hurst indices
    ``H_j`` in ]0, 1[.  With ``d = 1`` and ``H = 1/2`` this is standard
    Brownian motion.
    """

    hurst: Tuple[float, ...]

    def __post_init__(self):
        h = _as_tuple(self.hurst)
        object.__setattr__(self, "hurst", h)
        for v in h:
            _check(0.0 < v < 1.0, f"sheet Hurst index must lie in ]0,1[, got {v}")

    @property
    def dim(self) -> int:
        return len(self.hurst)

    def token(self) -> str:
        return "fbs(" + ",".join(f"{v:.17g}" for v in self.hurst) + ")"

    def _axis_cov(self, t: np.ndarray, h: float) -> np.ndarray:
        s = t[:, None]
        u = t[None, :]
        return 0.5 * (s ** (2 * h) + u ** (2 * h) - np.abs(s - u) ** (2 * h))

    def covariance(self, grid: GridSpec) -> np.ndarray:
        if grid.dim != self.dim:
            raise DimensionMismatch(
                f"sheet has {self.dim} Hurst indices but grid dim is {grid.dim}"
            )
        t = grid.axis()
        cov = self._axis_cov(t, self.hurst[0])
        for h in self.hurst[1:]:
            cov = np.kron(cov, self._axis_cov(t, h))
        return cov


@dataclass(frozen=True)
class LevyFractionalBrownianMotion:
    """Isotropic Levy fractional Brownian motion on ``[0, 1]^d``.

    ``E (X_s - X_t)^2 = |s - t|^(2H)`` with ``X_0 = 0``; polarization
    gives the covariance ``(|s|^(2H) + |t|^(2H) - |s - t|^(2H)) / 2``.
    """

    hurst: float

    def __post_init__(self):
        _check(0.0 < self.hurst < 1.0, f"Levy Hurst index must lie in ]0,1[, got {self.hurst}")

    def token(self) -> str:
        return f"levy({self.hurst:.17g})"

    def covariance(self, grid: GridSpec) -> np.ndarray:
        pts = grid.points()
        nrm = np.linalg.norm(pts, axis=1)
        diff = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        h2 = 2.0 * self.hurst
        return 0.5 * (nrm[:, None] ** h2 + nrm[None, :] ** h2 - diff ** h2)


def _riemann_liouville_axis(t: np.ndarray, beta: float, refine: int = 4,
                            tol: float = 1e-6, max_doublings: int = 10) -> np.ndarray:
    """Axis covariance of the order-``beta`` integrated Brownian motion.

    Writing the process in integrated form against white noise gives
    ``K(s, t) = int_0^1 (s-u)_+^beta (t-u)_+^beta du / Gamma(beta+1)^2``,
    evaluated by trapezoid quadrature on a grid ``refine`` times finer
    than the evaluation axis, doubling the resolution until successive
    matrices agree to ``tol`` (relative, in max norm).
    """
    n = len(t)
    scale = 1.0 / math.gamma(beta + 1.0) ** 2
    prev = None
    m = max(refine * max(n - 1, 1), 4)
    for _ in range(max_doublings + 1):
        u = np.linspace(0.0, 1.0, m + 1)
        w = np.full(m + 1, u[1] - u[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        a = np.clip(t[:, None] - u[None, :], 0.0, None) ** beta
        cov = scale * ((a * w) @ a.T)
        if prev is not None:
            denom = max(np.max(np.abs(cov)), 1e-300)
            if np.max(np.abs(cov - prev)) / denom < tol:
                return cov
        prev = cov
        m *= 2
    raise QuadratureResolutionTooCoarse(
        f"axis quadrature did not converge to {tol} within {max_doublings} doublings"
    )


@dataclass(frozen=True)
class IntegratedBrownianMotion:
    """Riemann-Liouville integral of Brownian motion, order ``beta > 0``.

    ``X_t = Gamma(beta)^{-1} int_0^t (t-s)^(beta-1) B_s ds``, which by
    parts equals ``Gamma(beta+1)^{-1} int_0^t (t-u)^beta dB_u``; the
    covariance is computed from the second form, whose integrand is
    bounded for every ``beta > 0``.
    """

    beta: float

    def __post_init__(self):
        _check(self.beta > 0.0, f"integration order must be positive, got {self.beta}")

    def token(self) -> str:
        return f"ibm({self.beta:.17g})"

    def covariance(self, grid: GridSpec) -> np.ndarray:
        if grid.dim != 1:
            raise DimensionMismatch("integrated Brownian motion is one-dimensional")
        return _riemann_liouville_axis(grid.axis(), self.beta)


@dataclass(frozen=True)
class IntegratedBrownianSheet:
    """``m``-fold integrated Brownian sheet on ``[0, 1]^d``.

    ``X_t = int prod_j (t_j - u_j)_+^m / m!  B(du)``; the covariance is
    the d-fold Kronecker product of the order-``m`` axis factor.
    """

    m: int
    dim: int = 1

    def __post_init__(self):
        _check(isinstance(self.m, int) and self.m >= 1, f"integration count must be an integer >= 1, got {self.m}")
        _check(self.dim >= 1, "dim must be >= 1")

    def token(self) -> str:
        return f"isheet({self.m},{self.dim})"

    def covariance(self, grid: GridSpec) -> np.ndarray:
        if grid.dim != self.dim:
            raise DimensionMismatch(f"sheet dim {self.dim} does not match grid dim {grid.dim}")
        axis = _riemann_liouville_axis(grid.axis(), float(self.m))
        cov = axis
        for _ in range(self.dim - 1):
            cov = np.kron(cov, axis)
        return cov


@dataclass(frozen=True)
class FractionalOrnsteinUhlenbeck:
    """Stationary field on ``[0, 1]`` with ``K(s, t) = exp(-gamma |s-t|^H)``."""

    gamma: float
    hurst: float

    def __post_init__(self):
        _check(self.gamma > 0.0, f"gamma must be positive, got {self.gamma}")
        _check(0.0 < self.hurst <= 2.0, f"exponent must lie in ]0,2], got {self.hurst}")

    def token(self) -> str:
        return f"fou({self.gamma:.17g},{self.hurst:.17g})"

    def covariance(self, grid: GridSpec) -> np.ndarray:
        if grid.dim != 1:
            raise DimensionMismatch("fractional Ornstein-Uhlenbeck is one-dimensional")
        t = grid.axis()
        return np.exp(-self.gamma * np.abs(t[:, None] - t[None, :]) ** self.hurst)


@dataclass(frozen=True)
class SlepianField:
    """Moving-average field with triangular covariance factors.

    ``K(s, t) = prod_j max(0, a_j - |s_j - t_j|)`` with ``a_j > 0``.
    """

    a: Tuple[float, ...]

    def __post_init__(self):
        a = _as_tuple(self.a)
        object.__setattr__(self, "a", a)
        for v in a:
            _check(v > 0.0, f"Slepian width must be positive, got {v}")

    @property
    def dim(self) -> int:
        return len(self.a)

    def token(self) -> str:
        return "slepian(" + ",".join(f"{v:.17g}" for v in self.a) + ")"

    def covariance(self, grid: GridSpec) -> np.ndarray:
        if grid.dim != self.dim:
            raise DimensionMismatch(f"Slepian field dim {self.dim} does not match grid dim {grid.dim}")
        t = grid.axis()
        cov = None
        for v in self.a:
            axis = np.maximum(0.0, v - np.abs(t[:, None] - t[None, :]))
            cov = axis if cov is None else np.kron(cov, axis)
        return cov


@dataclass(frozen=True)
class StandardNormal1D:
    """Constant-in-time field whose value is a single standard normal.

    ``K(s, t) = 1`` on any grid; with a one-point grid this is the
    scalar standard Gaussian, the exactly solvable reference model.
    """

    def token(self) -> str:
        return "stdnormal()"

    def covariance(self, grid: GridSpec) -> np.ndarray:
        return np.ones((grid.size, grid.size))


KERNEL_FAMILIES = {
    "fbm": FractionalBrownianSheet,
    "levy": LevyFractionalBrownianMotion,
    "ibm": IntegratedBrownianMotion,
    "isheet": IntegratedBrownianSheet,
    "fou": FractionalOrnsteinUhlenbeck,
    "slepian": SlepianField,
    "stdnormal": StandardNormal1D,
}


def build_kernel(family: str, **params):
    """Construct a kernel by family name; see ``KERNEL_FAMILIES``."""
    try:
        cls = KERNEL_FAMILIES[family]
    except KeyError:
        raise ConfigError(
            f"unknown kernel family {family!r}; choose from {sorted(KERNEL_FAMILIES)}"
        ) from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for kernel family {family!r}: {exc}") from None


# ---------------------------------------------------------------------------
# covariance assembly and factorization


def covariance_matrix(kernel, grid: GridSpec) -> np.ndarray:
    """Exact covariance of ``kernel`` over the grid, bitwise symmetric."""
    cov = np.asarray(kernel.covariance(grid), dtype=np.float64)
    if cov.shape != (grid.size, grid.size):
        raise DimensionMismatch(
            f"kernel produced shape {cov.shape}, expected {(grid.size, grid.size)}"
        )
    if not np.all(np.isfinite(cov)):
        raise FactorizationFailure("covariance contains non-finite entries")
    upper = np.triu(cov)
    return upper + np.triu(cov, 1).T


def psd_factor(cov: np.ndarray, rel_tol: float = 1e-8) -> np.ndarray:
    """Symmetric PSD square root ``S`` with ``S @ S = cov``.

    Eigenvalues more negative than ``-rel_tol * max_eigenvalue`` mean
    the matrix is not a covariance and raise ``FactorizationFailure``;
    mild negative round-off is clipped to zero.  A symmetric factor is
    used instead of Cholesky so rank-deficient kernels (anything pinned
    to zero at the origin) factor cleanly.
    """
    vals, vecs = np.linalg.eigh(cov)
    top = max(vals[-1], 0.0)
    if vals[0] < -rel_tol * max(top, 1.0):
        raise FactorizationFailure(
            f"covariance has eigenvalue {vals[0]:.3e} below -{rel_tol} * {max(top, 1.0):.3e}"
        )
    vals = np.clip(vals, 0.0, None)
    s = (vecs * np.sqrt(vals)) @ vecs.T
    return (s + s.T) * 0.5


# ---------------------------------------------------------------------------
# sampling


def _is_brownian_motion(kernel, grid: GridSpec) -> bool:
    return (
        isinstance(kernel, FractionalBrownianSheet)
        and kernel.dim == 1
        and grid.dim == 1
        and kernel.hurst[0] == 0.5
        and grid.points_per_axis >= 2
    )


def _block_rng(seed: int, block: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(STREAM_PATHS)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=block << 128))


def iter_path_blocks(kernel, grid: GridSpec, n_samples: int, seed: int,
                     block_size: int = BLOCK_SAMPLES) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield ``(start_index, paths_block)`` deterministically.

    Blocks are keyed by their index through the Philox counter, so the
    stream for block ``b`` never depends on how many earlier blocks
    were generated or consumed.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    n_grid = grid.size
    if isinstance(kernel, StandardNormal1D):
        mode = "constant"
    elif _is_brownian_motion(kernel, grid):
        mode = "bm"
        dt = np.sqrt(np.diff(grid.axis()))
    else:
        mode = "dense"
        factor = psd_factor(covariance_matrix(kernel, grid))
    for block in range(0, -(-n_samples // block_size)):
        start = block * block_size
        rows = min(block_size, n_samples - start)
        rng = _block_rng(seed, block)
        if mode == "constant":
            z = rng.standard_normal((rows, 1))
            paths = np.broadcast_to(z, (rows, n_grid)).copy()
        elif mode == "bm":
            z = rng.standard_normal((rows, n_grid - 1))
            paths = np.empty((rows, n_grid))
            paths[:, 0] = 0.0
            np.cumsum(z * dt, axis=1, out=paths[:, 1:])
        else:
            z = rng.standard_normal((rows, n_grid))
            paths = z @ factor
        yield start, paths


@dataclass(frozen=True)
class PathEnsemble:
    """Materialized sample of paths, one row per sample."""

    kernel: object
    grid: GridSpec
    seed: int
    paths: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.paths.shape[0]


def sample_paths(kernel, grid: GridSpec, n_samples: int, seed: int,
                 threads: Optional[int] = None) -> PathEnsemble:
    """Draw ``n_samples`` paths of the field restricted to the grid.

    ``threads`` is accepted for interface symmetry with the command
    line tool; generation is blocked and counter-keyed, so the result
    is bit-identical for any thread count.
    """
    if threads is not None and threads < 1:
        raise ConfigError("threads must be >= 1")
    out = np.empty((n_samples, grid.size))
    for start, block in iter_path_blocks(kernel, grid, n_samples, seed):
        out[start:start + block.shape[0]] = block
    out.flags.writeable = False
    return PathEnsemble(kernel=kernel, grid=grid, seed=seed, paths=out)


# ---------------------------------------------------------------------------
# binary cache

_MAGIC = b"QGAUSSv1"
_DTYPE_F64 = 1
KIND_ENSEMBLE = 1
KIND_MATRIX = 2
KIND_VECTOR = 3
_HEADER = struct.Struct("<8sIIQQ")  # magic, kind, dtype tag, rows, cols


def write_array(path, arr: np.ndarray, kind: int) -> None:
    """Write a float64 array with the 32-byte ``QGAUSSv1`` header."""
    a = np.ascontiguousarray(arr, dtype="<f8")
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionMismatch("cache arrays must be 1-d or 2-d")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, kind, _DTYPE_F64, a.shape[0], a.shape[1]))
        fh.write(a.tobytes())


def read_array(path, expect_kind: Optional[int] = None) -> np.ndarray:
    """Read an array written by ``write_array``; validates the header."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ConfigError(f"{path}: truncated header")
        magic, kind, dtype_tag, rows, cols = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ConfigError(f"{path}: bad magic {magic!r}")
        if dtype_tag != _DTYPE_F64:
            raise ConfigError(f"{path}: unsupported dtype tag {dtype_tag}")
        if expect_kind is not None and kind != expect_kind:
            raise ConfigError(f"{path}: kind {kind}, expected {expect_kind}")
        data = np.fromfile(fh, dtype="<f8", count=rows * cols)
    if data.size != rows * cols:
        raise ConfigError(f"{path}: truncated payload")
    out = data.reshape(rows, cols)
    return out[:, 0] if cols == 1 and kind != KIND_MATRIX else out


def cache_path(cache_dir, *key_parts) -> str:
    """Stable cache file path for a tuple of key parts."""
    text = "|".join(str(k) for k in key_parts)
    digest = hashlib.blake2b(text.encode(), digest_size=8).hexdigest()
    safe = "".join(c if c.isalnum() or c in ".,=-" else "_" for c in text)[:80]
    import os

    return os.path.join(str(cache_dir), f"{safe}-{digest}.qg")
