"""Renyi entropy of discrete probability vectors.

The order-``alpha`` entropy of ``p = (p_1, ..., p_n)`` is

* ``alpha = 1``: Shannon entropy ``-sum p_i log p_i``,
* ``alpha = inf``: min-entropy ``-log max_i p_i``,
* ``alpha = 0``: ``log card{i : p_i > 0}``,
* otherwise: ``log(sum_i p_i^alpha) / (1 - alpha)``.

Logarithms are natural throughout; rates are measured in nats.  The
conventions ``0 * log 0 = 0`` and ``0^x = 0`` for ``x > 0`` apply, and
the map ``alpha -> H^alpha(p)`` is nonincreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch

__all__ = ["ProbVector", "renyi_entropy"]

_SUM_TOL = 1e-12
_ZERO_FLOOR = 1e-300  # weights below this are treated as exact zeros


@dataclass(frozen=True)
class ProbVector:
    """A validated discrete probability vector.

    Weights must be finite, nonnegative and sum to 1 within 1e-12.
    Entries below 1e-300 are canonicalized to exact zeros so downstream
    logarithms never see denormal noise.
    """

    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise DimensionMismatch("probability vector must be 1-d and nonempty")
        if not np.all(np.isfinite(w)):
            raise ConfigError("probability weights must be finite")
        if np.any(w < 0.0):
            raise ConfigError("probability weights must be nonnegative")
        total = math.fsum(w.tolist())
        if abs(total - 1.0) > _SUM_TOL:
            raise ConfigError(
                f"probability weights sum to {total!r}, expected 1 within {_SUM_TOL}"
            )
        w = w.copy()
        w[w < _ZERO_FLOOR] = 0.0
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_counts(cls, counts) -> "ProbVector":
        c = np.asarray(counts, dtype=np.float64)
        s = c.sum()
        if s <= 0:
            raise ConfigError("counts must have positive total")
        return cls(c / s)

    def __len__(self) -> int:
        return self.weights.size

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.weights))


def _as_prob(p) -> ProbVector:
    return p if isinstance(p, ProbVector) else ProbVector(np.asarray(p, dtype=np.float64))


def renyi_entropy(p, alpha: float) -> float:
    """Order-``alpha`` Renyi entropy of ``p``, in nats.

    Parameters
    ----------
    p : ProbVector or array-like
        Probability weights; validated if not already a ProbVector.
    alpha : float
        Entropy order in ``[0, inf]``.  Values within 1e-9 of 1 use the
        Shannon limit.

    Returns
    -------
    float
        Entropy value in ``[0, log len(p)]``.
    """
    pv = _as_prob(p)
    if isinstance(alpha, bool) or not isinstance(alpha, (int, float, np.floating, np.integer)):
        raise ConfigError(f"alpha must be a real number, got {alpha!r}")
    alpha = float(alpha)
    if math.isnan(alpha) or alpha < 0.0:
        raise ConfigError(f"alpha must lie in [0, inf], got {alpha!r}")

    w = pv.weights
    support = np.sort(w[w > 0.0])[::-1]  # descending, for compensated sums

    if math.isinf(alpha):
        return -math.log(support[0])
    if abs(alpha - 1.0) < 1e-9:
        # Shannon limit; fsum gives an exactly rounded compensated sum
        return -math.fsum((x * math.log(x) for x in support))
    if alpha == 0.0:
        return math.log(support.size)
    s = math.fsum(np.power(support, alpha).tolist())
    return math.log(s) / (1.0 - alpha)
