"""Entropy-constrained quantization error via the ball representation.

For a centered Gaussian field with norm ``|.|`` and distortion
``rho(x) = x^r``, the mass-constrained (alpha = inf) optimal error at
entropy bound ``R`` equals a truncated moment:

    D_inf(R) = E[ |X|^r ; |X| <= s ]   where  P(|X| <= s) = e^{-R},

so it is estimated by inverting a small-ball table for ``s`` and
averaging over the same shared path ensemble.  Two companions bound
and approximate it:

* ``upper_bound_mass``: ``(b^{-1}(R))^r e^{-R}``, always an upper
  bound for the truncated moment;
* ``asymptotic_error``: the closed high-rate formula obtained by
  substituting the inverse of a fitted small-ball law.

For finite ``alpha > 1`` the rate reduction ``R -> (alpha-1)/alpha R``
turns the alpha-constrained error into an inf-constrained one; only
the upper bound and the asymptotic formula are reported at finite
alpha because no exact finite-rate solver exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import kendalltau

from .errors import ConfigError, DomainError, ResolutionExceeded
from .gaussian import GridSpec
from .norms import Distortion, NormSpec
from .smallball import (
    MIN_HITS,
    AsymptoticLaw,
    SmallBallTable,
    ensemble_norm_sample,
    invert_asymptotic,
    invert_b,
)

__all__ = [
    "METHOD_BALL_MOMENT",
    "METHOD_UPPER_BOUND",
    "METHOD_ASYMPTOTIC",
    "ErrorQuery",
    "ErrorEstimate",
    "BallMomentSampler",
    "ball_moment_error",
    "upper_bound_mass",
    "effective_rate",
    "alpha_upper_bound",
    "asymptotic_error",
    "RatioReport",
    "ratio_report",
]

METHOD_BALL_MOMENT = "BALL_MOMENT_MC"
METHOD_UPPER_BOUND = "UPPER_BOUND"
METHOD_ASYMPTOTIC = "ASYMPTOTIC"


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if math.isnan(alpha) or alpha <= 1.0:
        raise ConfigError(f"entropy order must lie in ]1, inf], got {alpha}")
    return alpha


def effective_rate(alpha: float, rate: float) -> float:
    """Reduced rate ``(alpha-1)/alpha * rate``; equals ``rate`` at inf."""
    alpha = _check_alpha(alpha)
    if rate <= 0.0:
        raise ConfigError(f"rate must be positive, got {rate}")
    if math.isinf(alpha):
        return float(rate)
    return (alpha - 1.0) / alpha * float(rate)


@dataclass(frozen=True)
class ErrorQuery:
    """A single error request: rate ``R`` (nats), order ``alpha``, distortion."""

    rate: float
    alpha: float
    rho: Distortion

    def __post_init__(self):
        if not (self.rate > 0.0) or math.isinf(self.rate):
            raise ConfigError(f"rate must be finite and positive, got {self.rate}")
        _check_alpha(self.alpha)


@dataclass(frozen=True)
class ErrorEstimate:
    """A value with provenance: MC mean, bound, or formula."""

    value: float
    stderr: float
    radius_used: float
    method: str

    def __post_init__(self):
        if self.value < 0.0 or self.stderr < 0.0:
            raise ConfigError("estimate value and stderr must be nonnegative")


class BallMomentSampler:
    """Truncated-moment estimator over one shared norm sample.

    Sorts the norms once and keeps prefix sums of ``|X|^r`` and
    ``|X|^{2r}``, so evaluating many rates against the same ensemble is
    O(log n) each and exactly monotone: a smaller ball is a prefix of a
    larger one.
    """

    def __init__(self, norms: np.ndarray, rho: Distortion):
        self.rho = rho
        self.n = int(norms.size)
        self._sorted = np.sort(np.asarray(norms, dtype=np.float64))
        powers = self._sorted ** rho.r
        self._prefix = np.concatenate(([0.0], np.cumsum(powers)))
        self._prefix2 = np.concatenate(([0.0], np.cumsum(powers * powers)))

    def truncated_moment(self, radius: float) -> Tuple[float, float]:
        """Mean and standard error of ``|X|^r 1{|X| <= radius}``."""
        idx = int(np.searchsorted(self._sorted, radius, side="right"))
        m1 = self._prefix[idx] / self.n
        m2 = self._prefix2[idx] / self.n
        var = max(m2 - m1 * m1, 0.0)
        return m1, math.sqrt(var / self.n)

    def full_moment(self) -> float:
        return float(self._prefix[-1] / self.n)


def _resolvable(table: SmallBallTable, rate: float) -> None:
    if table.n_samples > 0 and math.exp(-rate) * table.n_samples < MIN_HITS:
        raise ResolutionExceeded(
            f"rate {rate:.4g} targets mass below {MIN_HITS}/{table.n_samples}; "
            f"need about {int(math.ceil(MIN_HITS * math.exp(rate)))} samples"
        )


def ball_moment_error(kernel, grid: GridSpec, norm: NormSpec, rho: Distortion,
                      rate: float, n_samples: int, seed: int,
                      table: SmallBallTable,
                      cache_dir: Optional[str] = None) -> ErrorEstimate:
    """Exact-representation MC estimate of the alpha = inf error.

    The radius comes from inverting the supplied table (not a fitted
    law); the moment is averaged over the ``(kernel, grid, norm,
    n_samples, seed)`` ensemble, which the table normally shares.
    """
    _resolvable(table, rate)
    s = invert_b(table, rate)
    norms = ensemble_norm_sample(kernel, grid, norm, n_samples, seed,
                                 cache_dir=cache_dir)
    value, stderr = BallMomentSampler(norms, rho).truncated_moment(s)
    return ErrorEstimate(value=value, stderr=stderr, radius_used=s,
                         method=METHOD_BALL_MOMENT)


def upper_bound_mass(table_or_law, rho: Distortion, rate: float) -> float:
    """Radius-times-mass upper bound ``(b^{-1}(R))^r e^{-R}``."""
    if isinstance(table_or_law, AsymptoticLaw):
        s = invert_asymptotic(table_or_law, rate)
    else:
        s = invert_b(table_or_law, rate)
    return rho(s) * math.exp(-rate)


def alpha_upper_bound(alpha: float, kernel, grid: GridSpec, norm: NormSpec,
                      rho: Distortion, rate: float, n_samples: int, seed: int,
                      table: SmallBallTable,
                      cache_dir: Optional[str] = None) -> ErrorEstimate:
    """Upper bound on the order-``alpha`` error by rate reduction.

    Delegates to ``ball_moment_error`` at ``(alpha-1)/alpha * rate``:
    the reduced-rate inf-error dominates the alpha-error.
    """
    reduced = effective_rate(alpha, rate)
    return ball_moment_error(kernel, grid, norm, rho, reduced, n_samples,
                             seed, table, cache_dir=cache_dir)


def asymptotic_error(law: AsymptoticLaw, rho: Distortion, alpha: float,
                     rate: float) -> float:
    """Closed-form high-rate error for a fitted small-ball law.

    ``[c^{1/a} a^{-b/a} R_eff^{-1/a} (log R_eff)^{b/a}]^r e^{-R_eff}``
    with ``R_eff = (alpha-1)/alpha * R``: the inverse law is evaluated
    at the effective rate first, then raised to the distortion power.
    """
    reduced = effective_rate(alpha, rate)
    if law.b != 0.0 and reduced <= 1.0:
        raise DomainError(
            f"effective rate {reduced:.4g} must exceed 1 for a law with a log factor"
        )
    return rho(invert_asymptotic(law, reduced)) * math.exp(-reduced)


@dataclass(frozen=True)
class RatioReport:
    """Estimates against a reference formula over a rate grid.

    ``kendall_tau`` is the rank correlation of ``|ratio - 1|`` with the
    rate; a non-positive value means the estimates are (weakly)
    approaching the formula as the rate grows.
    """

    rates: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray
    formulas: np.ndarray
    ratios: np.ndarray
    stderr_ratios: np.ndarray
    kendall_tau: float

    def to_csv_rows(self) -> list:
        header = ["R", "value", "formula", "ratio", "stderr_ratio"]
        fmt = lambda x: format(float(x), ".17g")
        rows = [header]
        for i in range(self.rates.size):
            rows.append([fmt(self.rates[i]), fmt(self.values[i]),
                         fmt(self.formulas[i]), fmt(self.ratios[i]),
                         fmt(self.stderr_ratios[i])])
        return rows


def ratio_report(rates: Sequence[float], values: Sequence[float],
                 stderrs: Sequence[float],
                 formulas: Sequence[float]) -> RatioReport:
    """Ratio table ``value / formula`` with a monotone-trend statistic."""
    rates = np.asarray(rates, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    stderrs = np.asarray(stderrs, dtype=np.float64)
    formulas = np.asarray(formulas, dtype=np.float64)
    if not (rates.shape == values.shape == stderrs.shape == formulas.shape):
        raise ConfigError("rate, value, stderr and formula arrays must align")
    if rates.size < 3:
        raise ConfigError("ratio report needs at least 3 grid points")
    if np.any(formulas <= 0.0):
        raise ConfigError("reference formula values must be positive")
    ratios = values / formulas
    stderr_ratios = stderrs / formulas
    tau, _ = kendalltau(rates, np.abs(ratios - 1.0))
    if math.isnan(tau):
        tau = 0.0
    return RatioReport(rates=rates, values=values, stderrs=stderrs,
                       formulas=formulas, ratios=ratios,
                       stderr_ratios=stderr_ratios, kendall_tau=float(tau))
