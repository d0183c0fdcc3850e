"""Brute-force verification of the structural lemmas, desk scale.

Two inequalities carry the upper-bound side of the theory and are
checked here by exhaustive summation over a discrete stand-in measure
and randomized search over constraint sets:

* the rearrangement inequality: for any set ``A`` and center ``a``,
  ``int_A rho(|x - a|) dmu >= int_{B(0,s)} rho(|x|) dmu`` once the
  centered ball is matched in mass (a consequence of Anderson's
  inequality, so valid for any centered Gaussian, including the
  one-dimensional discretization used here);
* the extreme-point inequality: ``f(x0) <= inf { sum f(x_i) }`` over
  probability vectors with entries in ``[0, x0]`` and
  ``sum x_i^alpha >= x0^alpha``, for ``f`` with ``x^{1-alpha} f'(x)``
  decreasing.

The module also builds the constructive ball-plus-net quantizers that
realize the achievability bounds, with empirical entropy accounting.

Randomized oracles draw per-trial randomness from counter-keyed
streams, so reports are reproducible for a given seed and independent
of batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from . import _accel
from .entropy import ProbVector, renyi_entropy
from .errors import (
    ConfigError,
    DegenerateEnsemble,
    DomainError,
    InfeasibleConstraints,
    MassUnreachable,
)
from .gaussian import PathEnsemble
from .norms import Distortion, NormSpec, ensemble_norms, trapezoid_weights

__all__ = [
    "DiscreteGaussian1D",
    "rearrangement_deficit",
    "oracle_ball_rearrangement",
    "LemmaFunctionParams",
    "lemma_function",
    "check_monotone_F",
    "oracle_extreme_point",
    "Quantizer",
    "build_ball_net_quantizer",
    "empirical_entropy",
]

DEFICIT_TOLERANCE = 1e-9
_STREAM_TRIALS = 11
_STREAM_CANDIDATES = 12


def _stream(seed: int, tag: int, block: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(tag)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=block << 128))


# ---------------------------------------------------------------------------
# discrete stand-in measure


@dataclass(frozen=True)
class DiscreteGaussian1D:
    """Standard normal density discretized on a symmetric atom grid.

    Atoms are ``n_atoms`` equispaced points on ``[-half_width,
    half_width]``; masses are the density values renormalized to sum
    to one, symmetrized exactly about zero.
    """

    n_atoms: int
    half_width: float
    atoms: np.ndarray = field(init=False, repr=False)
    masses: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_atoms < 3:
            raise ConfigError("need at least 3 atoms")
        if not (self.half_width > 0.0):
            raise ConfigError("half_width must be positive")
        atoms = np.linspace(-self.half_width, self.half_width, self.n_atoms)
        dens = np.exp(-0.5 * atoms * atoms)
        masses = dens / math.fsum(dens.tolist())
        masses = 0.5 * (masses + masses[::-1])  # exact symmetry
        atoms.flags.writeable = False
        masses.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)

    def interval_mass(self, lo: float, hi: float) -> float:
        sel = (self.atoms >= lo) & (self.atoms <= hi)
        return float(np.sum(self.masses[sel]))


def rearrangement_deficit(mu: DiscreteGaussian1D, subset: np.ndarray,
                          center: float, rho: Distortion) -> float:
    """``int_A rho(|x-a|) dmu`` minus the matched centered-ball value.

    The comparator ball is the largest prefix of atoms in increasing
    ``|x|`` order whose mass does not exceed the subset's mass, so the
    inequality is exact (dropping a fractional atom only lowers the
    right-hand side).
    """
    subset = np.asarray(subset, dtype=np.int64)
    if subset.size == 0:
        raise MassUnreachable("subset is empty")
    lhs_mass = float(np.sum(mu.masses[subset]))
    lhs = float(np.sum(mu.masses[subset] * rho(np.abs(mu.atoms[subset] - center))))
    order = np.argsort(np.abs(mu.atoms), kind="stable")
    cum = np.cumsum(mu.masses[order])
    vals = np.cumsum(mu.masses[order] * rho(np.abs(mu.atoms[order])))
    j = int(np.searchsorted(cum, lhs_mass * (1.0 + 1e-12), side="right"))
    rhs = float(vals[j - 1]) if j > 0 else 0.0
    return lhs - rhs


def oracle_ball_rearrangement(mu: DiscreteGaussian1D, target_mass: float,
                              rho: Distortion, n_trials: int, seed: int,
                              tolerance: float = DEFICIT_TOLERANCE) -> dict:
    """Randomized check of the rearrangement inequality.

    Each trial draws a random atom subset of mass at least
    ``target_mass`` (greedy fill from a random permutation, overshoot
    at most one atom) and a uniform center on the inner half of the
    support, then compares against the mass-matched centered ball.
    """
    if not (0.0 < target_mass < 1.0):
        raise MassUnreachable(f"target mass must lie in ]0,1[, got {target_mass}")
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    block_size = 256
    worst = math.inf
    done = 0
    block = 0
    while done < n_trials:
        rng = _stream(seed, _STREAM_TRIALS, block)
        todo = min(block_size, n_trials - done)
        for _ in range(todo):
            perm = rng.permutation(mu.n_atoms)
            cum = np.cumsum(mu.masses[perm])
            k = int(np.searchsorted(cum, target_mass, side="left")) + 1
            subset = perm[:k]
            center = float(rng.uniform(-0.5 * mu.half_width, 0.5 * mu.half_width))
            d = rearrangement_deficit(mu, subset, center, rho)
            if d < worst:
                worst = d
        done += todo
        block += 1
    return {
        "lemma": "ball-rearrangement",
        "trials": int(n_trials),
        "min_deficit": worst,
        "tolerance": tolerance,
        "pass": bool(worst >= -tolerance),
        "detail": {"target_mass": target_mass, "r": rho.r, "seed": seed,
                   "n_atoms": mu.n_atoms, "half_width": mu.half_width},
    }


# ---------------------------------------------------------------------------
# the technical function and the extreme-point inequality


@dataclass(frozen=True)
class LemmaFunctionParams:
    """Parameters of ``f(x) = x (log 1/x)^{-A} (log log 1/x)^{B}``."""

    A: float
    B: float
    alpha: float
    x0: float

    def __post_init__(self):
        if not (self.A > 0.0):
            raise ConfigError(f"A must be positive, got {self.A}")
        if not (self.B >= 0.0):
            raise ConfigError(f"B must be nonnegative, got {self.B}")
        if not (self.alpha > 1.0):
            raise ConfigError(f"alpha must exceed 1, got {self.alpha}")
        if not (0.0 < self.x0 < 1.0 / math.e):
            raise ConfigError(f"x0 must lie in ]0, 1/e[, got {self.x0}")


def lemma_function(params: LemmaFunctionParams) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized ``f`` on ``[0, 1/e[`` with ``f(0) = 0``."""

    def f(x):
        arr = np.asarray(x, dtype=np.float64)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        if np.any((arr < 0.0) | (arr >= 1.0 / math.e)):
            raise DomainError("arguments must lie in [0, 1/e[")
        out = np.zeros_like(arr)
        pos = arr > 0.0
        if np.any(pos):
            big_l = np.log(1.0 / arr[pos])
            big_m = np.log(big_l)
            out[pos] = arr[pos] * big_l ** (-params.A) * big_m ** params.B
        return float(out[0]) if scalar else out

    return f


def check_monotone_F(params: LemmaFunctionParams,
                     grid: Optional[np.ndarray] = None) -> Tuple[float, dict]:
    """Probe the monotonicity hypotheses of the technical lemma.

    Differentiates ``f`` numerically on a probe grid in ``]0, 1/e[``,
    verifies that ``f`` is increasing on the small-argument region
    ``[0, e^{-e})`` and returns the largest prefix endpoint ``x_star``
    on which ``F(x) = x^{1-alpha} f'(x)`` is nonincreasing.
    """
    if grid is None:
        grid = np.geomspace(1e-9, (1.0 / math.e) * (1.0 - 1e-9), 10000)
    grid = np.asarray(grid, dtype=np.float64)
    if np.any(grid <= 0.0) or np.any(grid >= 1.0 / math.e):
        raise ConfigError("probe grid must lie in ]0, 1/e[")
    f = lemma_function(params)
    h = grid * 1e-6
    upper = np.minimum(grid + h, (1.0 / math.e) * (1.0 - 1e-12))
    lower = grid - h
    deriv = (f(upper) - f(lower)) / (upper - lower)
    big_f = grid ** (1.0 - params.alpha) * deriv

    small = grid < math.exp(-math.e)
    fv = f(grid[small])
    incr_viol = [float(grid[small][i]) for i in np.flatnonzero(np.diff(fv) <= 0.0)]

    scale = np.abs(big_f[:-1]) + np.abs(big_f[1:])
    rising = np.diff(big_f) > 1e-9 * scale
    first_bad = int(np.argmax(rising)) if np.any(rising) else big_f.size - 1
    x_star = float(grid[first_bad])
    report = {
        "f_increasing_on_small_region": not incr_viol,
        "increase_violations": incr_viol,
        "x_star": x_star,
        "n_grid": int(grid.size),
        "F_head": float(big_f[0]),
        "F_at_x_star": float(big_f[first_bad]),
    }
    return x_star, report


def _structured_candidates(x0: float, n: int, alpha: float) -> list:
    """Boundary candidates: k coordinates at x0, remainder in one slot or
    spread evenly, zeros elsewhere; filtered on the power constraint."""
    raw = []
    for k in range(n + 1):
        rem = 1.0 - k * x0
        if rem < -1e-15:
            break
        rem = max(rem, 0.0)
        if rem <= x0 * (1.0 + 1e-12) and (k < n or rem == 0.0):
            vec = np.zeros(n)
            vec[:k] = x0
            if rem > 0.0:
                vec[k] = min(rem, x0)
            raw.append(vec)
        if k < n and rem > 0.0:
            spread = rem / (n - k)
            if spread <= x0:
                vec = np.zeros(n)
                vec[:k] = x0
                vec[k:] = spread
                raw.append(vec)
    floor = x0 ** alpha
    return [v for v in raw if np.sum(v ** alpha) >= floor * (1.0 - 1e-12)]


def oracle_extreme_point(f: Callable, alpha: float, x0: float, n_max: int,
                         n_trials: int, seed: int,
                         tolerance: float = DEFICIT_TOLERANCE) -> dict:
    """Randomized check of the extreme-point lower-bound inequality.

    Searches probability vectors ``(x_1..x_n)``, ``n <= n_max``, with
    entries in ``[0, x0]`` and ``sum x_i^alpha >= x0^alpha``, mixing
    uniform-simplex draws (rejection sampled on both constraints) with
    boundary-structured vectors, and reports the minimum of
    ``sum f(x_i) - f(x0)``.
    """
    if not (0.0 < x0 <= 1.0):
        raise ConfigError(f"x0 must lie in ]0, 1], got {x0}")
    if alpha <= 1.0:
        raise ConfigError(f"alpha must exceed 1, got {alpha}")
    if n_max < 1:
        raise ConfigError("n_max must be >= 1")
    if n_max * x0 < 1.0 - 1e-12:
        raise InfeasibleConstraints(
            f"sum of {n_max} entries capped at {x0} cannot reach 1"
        )
    n_min = max(1, int(math.ceil(1.0 / x0 - 1e-12)))
    feasible_n = list(range(n_min, n_max + 1))
    f_x0 = float(np.asarray(f(np.array([x0])))[0])
    power_floor = x0 ** alpha

    worst = math.inf
    accepted = 0
    per_n = max(n_trials // len(feasible_n), 1)
    for n in feasible_n:
        for vec in _structured_candidates(x0, n, alpha):
            total = float(np.sum(np.asarray(f(vec))))
            accepted += 1
            worst = min(worst, total - f_x0)
        if n == 1:
            continue  # only the structured vector (1.0 <= x0) exists
        done = 0
        block = 0
        while done < per_n:
            rng = _stream(seed, _STREAM_CANDIDATES, (n << 32) | block)
            m = min(4096, per_n - done)
            g = rng.standard_gamma(1.0, size=(m, n))
            cand = g / g.sum(axis=1, keepdims=True)
            ok = np.max(cand, axis=1) <= x0
            if np.any(ok):
                cand = cand[ok]
                ok2 = np.sum(cand ** alpha, axis=1) >= power_floor
                cand = cand[ok2]
                if cand.size:
                    totals = np.sum(f(cand.ravel()).reshape(cand.shape), axis=1)
                    accepted += cand.shape[0]
                    worst = min(worst, float(np.min(totals)) - f_x0)
            done += m
            block += 1
    return {
        "lemma": "extreme-point",
        "trials": int(n_trials),
        "min_deficit": worst,
        "tolerance": tolerance,
        "pass": bool(worst >= -tolerance),
        "detail": {"alpha": alpha, "x0": x0, "n_max": n_max,
                   "candidates_evaluated": int(accepted), "seed": seed,
                   "f_x0": f_x0},
    }


# ---------------------------------------------------------------------------
# constructive ball + net quantizers


@dataclass(frozen=True)
class Quantizer:
    """Finite codebook plus an assignment of every sample to a cell.

    Cell 0 is the zero path covering the central ball; the remaining
    codepoints are sample paths promoted to net points.  Net points
    are pairwise farther than ``delta`` apart, so codepoints are
    distinct by construction.
    """

    codebook: np.ndarray
    assignment: np.ndarray
    radius: float
    delta: float

    def __post_init__(self):
        if self.assignment.min() < 0 or self.assignment.max() >= self.codebook.shape[0]:
            raise ConfigError("assignment indexes outside the codebook")

    @property
    def n_cells(self) -> int:
        return int(self.codebook.shape[0])

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_cells)


def empirical_entropy(quantizer: Quantizer, alpha: float) -> float:
    """Renyi entropy of the quantizer's empirical cell masses."""
    counts = quantizer.counts
    if counts.sum() == 0:
        raise DegenerateEnsemble("quantizer has no assigned samples")
    return renyi_entropy(ProbVector.from_counts(counts), alpha)


def build_ball_net_quantizer(ensemble: PathEnsemble, norm: NormSpec,
                             center_radius: float, delta: float,
                             rho: Distortion,
                             alphas: Sequence[float] = (2.0,)):
    """Ball-plus-net quantizer realizing the achievability bound.

    Paths inside ``B(0, center_radius)`` map to the zero path; paths
    outside are covered greedily first-fit by a ``delta``-net whose
    points are themselves sample paths.  Returns the quantizer, the
    empirical Renyi entropies for each requested order, and the
    empirical distortion ``(mean, stderr)`` of ``rho(residual norm)``.
    """
    if ensemble.n_samples < 2:
        raise DegenerateEnsemble("need at least 2 paths")
    if not (center_radius > 0.0 and delta > 0.0):
        raise ConfigError("center_radius and delta must be positive")
    paths = ensemble.paths
    grid = ensemble.grid
    norms = ensemble_norms(paths, norm, grid)
    inside = norms <= center_radius
    out_idx = np.flatnonzero(~inside)
    n = ensemble.n_samples

    residual = np.empty(n)
    residual[inside] = norms[inside]
    assignment = np.zeros(n, dtype=np.int64)
    if out_idx.size:
        outside = np.ascontiguousarray(paths[out_idx])
        if norm.kind == "sup":
            assign_out, net_rows, dists = _accel.greedy_net_sup(outside, float(delta))
        else:
            assign_out, net_rows, dists = _accel.greedy_net_lp(
                outside, trapezoid_weights(grid), float(norm.p), float(delta))
        assignment[out_idx] = assign_out + 1
        residual[out_idx] = dists
        codebook = np.vstack([np.zeros((1, grid.size)), outside[net_rows]])
    else:
        codebook = np.zeros((1, grid.size))
    quant = Quantizer(codebook=codebook, assignment=assignment,
                      radius=float(center_radius), delta=float(delta))
    losses = rho(residual)
    value = float(np.mean(losses))
    stderr = float(np.std(losses) / math.sqrt(n))
    entropies: Dict[float, float] = {
        float(a): empirical_entropy(quant, float(a)) for a in alphas
    }
    return quant, entropies, (value, stderr)
