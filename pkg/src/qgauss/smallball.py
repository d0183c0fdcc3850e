"""Small-ball probabilities: estimation, inversion, asymptotic fits.

For a centered Gaussian field with law ``mu`` and a norm, the small
ball function is ``b(s) = -log mu({x : |x| <= s})``.  This module
estimates ``b`` by Monte Carlo on a shared path ensemble, interpolates
it monotonically, inverts it to the radius achieving a prescribed rate
``R``, and fits the three-parameter asymptotic law

    b(s) ~ c * (1/s)^a * (log 1/s)^b        (s -> 0)

whose exact inverse-asymptotics ``b^{-1}(R) ~ c^{1/a} a^{-b/a} R^{-1/a}
(log R)^{b/a}`` drive the closed-form error formulas.

Estimation notes
----------------
* All radii are evaluated on one shared ensemble (common random
  numbers), so estimated probabilities are nondecreasing in the radius
  by construction and differences across radii are low-variance.
* A pool-adjacent-violators pass is applied anyway at table build time
  so that externally supplied tables gain the same monotonicity.
* An entry is usable once it has at least 30 hits; rarer events need a
  larger sample (``required_samples``) rather than a longer tail fight.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from . import _accel
from .errors import (
    ConfigError,
    DegenerateEnsemble,
    DomainError,
    IllConditionedFit,
    InsufficientData,
    NoUsableEntries,
    OutOfTableRange,
)
from .gaussian import (
    KIND_VECTOR,
    GridSpec,
    cache_path,
    iter_path_blocks,
    read_array,
    write_array,
)
from .norms import NormSpec, ensemble_norms

__all__ = [
    "MIN_HITS",
    "SmallBallTable",
    "ensemble_norm_sample",
    "estimate_small_ball",
    "required_samples",
    "BFunction",
    "b_function",
    "invert_b",
    "AsymptoticLaw",
    "fit_asymptotic",
    "invert_asymptotic",
    "ratio_condition_report",
]

MIN_HITS = 30
_CSV_HEADER = ["s", "n_samples", "p_hat", "stderr", "b_hat"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def required_samples(rate: float, min_hits: int = MIN_HITS) -> int:
    """Sample count needed so the ball of rate ``rate`` is not rare.

    The target probability is ``exp(-rate)``; the estimator wants at
    least ``min_hits`` expected hits.
    """
    if rate < 0:
        raise ConfigError("rate must be nonnegative")
    return int(math.ceil(min_hits * math.exp(rate)))


# ---------------------------------------------------------------------------
# tables


@dataclass(frozen=True)
class SmallBallTable:
    """Monotone table of small-ball estimates at increasing radii.

    ``p_hat`` is nondecreasing (isotonic-repaired on construction),
    ``b_hat = -log p_hat`` where positive mass was seen and ``nan``
    otherwise, ``stderr`` is the binomial standard error.  Synthetic
    tables built from an exact law carry ``n_samples = 0`` and zero
    standard errors.
    """

    radii: np.ndarray = field(repr=False)
    p_hat: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)
    b_hat: np.ndarray = field(repr=False)
    n_samples: int
    label: str = ""

    def __post_init__(self):
        for name in ("radii", "p_hat", "stderr", "b_hat"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (self.radii.shape == self.p_hat.shape == self.stderr.shape == self.b_hat.shape):
            raise ConfigError("table columns must share one shape")
        if self.radii.ndim != 1 or self.radii.size == 0:
            raise ConfigError("table must have at least one row")
        if np.any(np.diff(self.radii) <= 0):
            raise ConfigError("radii must be strictly increasing")

    # -- construction -----------------------------------------------------

    @classmethod
    def from_probabilities(cls, radii, p_raw, n_samples: int, label: str = "") -> "SmallBallTable":
        radii = np.asarray(radii, dtype=np.float64)
        p = np.asarray(p_raw, dtype=np.float64)
        if np.any((p < 0) | (p > 1)):
            raise ConfigError("probabilities must lie in [0, 1]")
        # isotonic repair: probabilities must grow with the radius
        p = _accel.isotonic_nondecreasing(p, np.ones_like(p))
        p = np.clip(p, 0.0, 1.0)
        if n_samples > 0:
            stderr = np.sqrt(p * (1.0 - p) / n_samples)
        else:
            stderr = np.zeros_like(p)
        with np.errstate(divide="ignore"):
            b = np.where(p > 0.0, -np.log(p), np.nan)
        return cls(radii=radii, p_hat=p, stderr=stderr, b_hat=b,
                   n_samples=int(n_samples), label=label)

    @classmethod
    def from_norm_sample(cls, norms: np.ndarray, radii, label: str = "") -> "SmallBallTable":
        """Evaluate all radii against one shared sample of path norms."""
        radii = np.sort(np.asarray(radii, dtype=np.float64))
        sorted_norms = np.sort(np.asarray(norms, dtype=np.float64))
        counts = np.searchsorted(sorted_norms, radii, side="right")
        return cls.from_probabilities(radii, counts / sorted_norms.size,
                                      sorted_norms.size, label=label)

    @classmethod
    def from_law(cls, law: "AsymptoticLaw", radii, label: str = "") -> "SmallBallTable":
        """Exact synthetic table: ``p = exp(-law.b_of(s))``, zero stderr."""
        radii = np.asarray(radii, dtype=np.float64)
        p = np.exp(-np.array([law.b_of(s) for s in radii]))
        return cls.from_probabilities(radii, p, 0, label=label)

    # -- views -------------------------------------------------------------

    @property
    def hits(self) -> np.ndarray:
        return np.rint(self.p_hat * max(self.n_samples, 1)).astype(np.int64)

    @property
    def all_zero(self) -> bool:
        """True when no radius captured any sample (degenerate table)."""
        return bool(np.all(self.p_hat == 0.0))

    def usable(self, min_hits: int = MIN_HITS) -> np.ndarray:
        """Entries trustworthy for inversion: positive, non-rare mass."""
        ok = self.p_hat > 0.0
        if self.n_samples > 0:
            ok &= self.hits >= min_hits
        return ok

    def fit_usable(self, min_hits: int = MIN_HITS) -> np.ndarray:
        """Entries usable for log-log fitting: additionally p < 1."""
        return self.usable(min_hits) & (self.p_hat < 1.0) & (self.b_hat > 0.0)

    # -- serialization -----------------------------------------------------

    def to_csv(self, path_or_buf) -> None:
        own = isinstance(path_or_buf, (str, os.PathLike))
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(_CSV_HEADER)
            for i in range(self.radii.size):
                b = "" if math.isnan(self.b_hat[i]) else _fmt(self.b_hat[i])
                w.writerow([_fmt(self.radii[i]), self.n_samples,
                            _fmt(self.p_hat[i]), _fmt(self.stderr[i]), b])
        finally:
            if own:
                fh.close()

    @classmethod
    def from_csv(cls, path_or_buf, label: str = "") -> "SmallBallTable":
        own = isinstance(path_or_buf, (str, os.PathLike))
        fh = open(path_or_buf, "r", newline="") if own else path_or_buf
        try:
            rows = list(csv.reader(fh))
        finally:
            if own:
                fh.close()
        if not rows or rows[0] != _CSV_HEADER:
            raise ConfigError(f"expected header {','.join(_CSV_HEADER)}")
        radii, p, n_list = [], [], []
        for row in rows[1:]:
            if not row:
                continue
            radii.append(float(row[0]))
            n_list.append(int(row[1]))
            p.append(float(row[2]))
        if not radii:
            raise ConfigError("table file has no data rows")
        n = max(n_list)
        return cls.from_probabilities(np.asarray(radii), np.asarray(p), n, label=label)

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


# ---------------------------------------------------------------------------
# estimation


def ensemble_norm_sample(kernel, grid: GridSpec, norm: NormSpec, n_samples: int,
                         seed: int, cache_dir: Optional[str] = None,
                         threads: Optional[int] = None) -> np.ndarray:
    """Norms of ``n_samples`` freshly sampled paths, optionally cached.

    The cache key is ``(kernel, grid, norm, n_samples, seed)``; cached
    files are written atomically so concurrent runs cannot observe a
    torn file.  ``threads`` only hints the BLAS; the result is
    bit-identical for any value.
    """
    del threads  # blocked, counter-keyed generation is order-invariant
    target = None
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        target = cache_path(cache_dir, kernel.token(), grid.token(), norm.token(),
                            n_samples, seed, "norms")
        if os.path.exists(target):
            cached = read_array(target, expect_kind=KIND_VECTOR)
            if cached.size == n_samples:
                return cached
    out = np.empty(n_samples)
    for start, block in iter_path_blocks(kernel, grid, n_samples, seed):
        out[start:start + block.shape[0]] = ensemble_norms(block, norm, grid)
    if target:
        fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
        os.close(fd)
        try:
            write_array(tmp, out, KIND_VECTOR)
            os.replace(tmp, target)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
    return out


def estimate_small_ball(kernel, grid: GridSpec, norm: NormSpec, radii,
                        n_samples: int, seed: int,
                        cache_dir: Optional[str] = None,
                        threads: Optional[int] = None) -> SmallBallTable:
    """Monte Carlo small-ball table over one shared path ensemble."""
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    norms = ensemble_norm_sample(kernel, grid, norm, n_samples, seed,
                                 cache_dir=cache_dir, threads=threads)
    label = f"{kernel.token()}|{grid.token()}|{norm.token()}|seed={seed}"
    table = SmallBallTable.from_norm_sample(norms, radii, label=label)
    return table


# ---------------------------------------------------------------------------
# the b function and its inverse


class BFunction:
    """Monotone interpolant of ``b(s) = -log p(s)`` over table knots.

    Built on the usable entries of a table with duplicate probability
    runs collapsed to their smallest radius, so the knot values are
    strictly decreasing and the shape-preserving cubic through them is
    strictly decreasing too.
    """

    def __init__(self, radii: np.ndarray, b_values: np.ndarray):
        if radii.size < 2:
            raise NoUsableEntries("need at least two distinct usable entries")
        self.radii = radii
        self.b_values = b_values
        self._interp = PchipInterpolator(radii, b_values, extrapolate=False)

    def __call__(self, s):
        out = self._interp(s)
        if np.any(np.isnan(out)):
            raise OutOfTableRange(
                f"radius outside table range [{self.radii[0]:.6g}, {self.radii[-1]:.6g}]"
            )
        return float(out) if np.isscalar(s) else out

    @property
    def b_range(self) -> Tuple[float, float]:
        """(smallest, largest) reachable rate."""
        return float(self.b_values[-1]), float(self.b_values[0])

    def invert(self, rate: float, tol: float = 1e-9) -> float:
        lo_rate, hi_rate = self.b_range
        if not (lo_rate <= rate <= hi_rate):
            raise OutOfTableRange(
                f"rate {rate:.6g} outside invertible range [{lo_rate:.6g}, {hi_rate:.6g}]"
            )
        # bracket between neighbouring knots, then polish the root
        idx = int(np.searchsorted(-self.b_values, -rate, side="left"))
        idx = min(max(idx, 1), self.radii.size - 1)
        lo, hi = self.radii[idx - 1], self.radii[idx]
        f = lambda s: float(self._interp(s)) - rate
        flo, fhi = f(lo), f(hi)
        if flo == 0.0:
            root = float(lo)
        elif fhi == 0.0:
            root = float(hi)
        else:
            root = float(brentq(f, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200))
        if abs(f(root)) > tol:
            raise OutOfTableRange(f"inversion residual {abs(f(root)):.3e} exceeds {tol}")
        return root


def b_function(table: SmallBallTable, min_hits: int = MIN_HITS) -> BFunction:
    """Monotone ``b(s)`` interpolant from a table's usable entries."""
    if table.all_zero:
        raise DegenerateEnsemble("every radius has zero estimated mass")
    mask = table.usable(min_hits)
    if not np.any(mask):
        raise NoUsableEntries("no table entries with enough positive mass")
    radii = table.radii[mask]
    b = table.b_hat[mask]
    # collapse equal-probability runs, keeping the smallest radius
    keep = np.concatenate(([True], np.diff(b) != 0.0))
    return BFunction(radii[keep], b[keep])


def invert_b(table: SmallBallTable, rate: float, min_hits: int = MIN_HITS,
             tol: float = 1e-9) -> float:
    """Radius ``s`` with ``b(s) = rate``, accurate to ``tol`` in rate."""
    if not (rate >= 0.0) or math.isinf(rate):
        raise DomainError(f"rate must be finite and nonnegative, got {rate}")
    return b_function(table, min_hits).invert(rate, tol=tol)


# ---------------------------------------------------------------------------
# asymptotic laws


@dataclass(frozen=True)
class AsymptoticLaw:
    """Small-ball law ``b(s) = c (1/s)^a (log 1/s)^b`` near zero."""

    c: float
    a: float
    b: float = 0.0
    stderr_c: float = 0.0
    stderr_a: float = 0.0
    stderr_b: float = 0.0
    window: Tuple[float, float] = (0.0, 0.0)
    n_used: int = 0

    def __post_init__(self):
        if not (self.c > 0.0 and self.a > 0.0):
            raise ConfigError(f"law needs c > 0 and a > 0, got c={self.c}, a={self.a}")

    def b_of(self, s: float) -> float:
        """Evaluate the law at radius ``s``."""
        if s <= 0.0:
            raise DomainError("radius must be positive")
        if self.b == 0.0:
            return self.c * s ** (-self.a)
        if s >= 1.0:
            raise DomainError("law with a log factor is defined for s < 1")
        return self.c * s ** (-self.a) * math.log(1.0 / s) ** self.b

    def to_json(self) -> str:
        payload = {
            "c": self.c, "a": self.a, "b": self.b,
            "stderr_c": self.stderr_c, "stderr_a": self.stderr_a,
            "stderr_b": self.stderr_b,
            "window": list(self.window), "n_used": self.n_used,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AsymptoticLaw":
        try:
            d = json.loads(text)
            c, a, b = float(d["c"]), float(d["a"]), float(d.get("b", 0.0))
            extras = dict(
                stderr_c=float(d.get("stderr_c", 0.0)),
                stderr_a=float(d.get("stderr_a", 0.0)),
                stderr_b=float(d.get("stderr_b", 0.0)),
                window=tuple(d.get("window", (0.0, 0.0))),
                n_used=int(d.get("n_used", 0)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed law JSON: {exc}") from None
        return cls(c=c, a=a, b=b, **extras)


def fit_asymptotic(table: SmallBallTable, window: Tuple[float, float],
                   force_b: Optional[float] = None,
                   min_hits: int = MIN_HITS) -> AsymptoticLaw:
    """Weighted log-log fit of the asymptotic law over a radius window.

    The model is ``log b = log c + a log(1/s) + b log log(1/s)``; the
    log-factor exponent can be pinned with ``force_b``.  Weights are
    the inverse variances of ``log b_hat`` propagated from the binomial
    errors; synthetic exact tables get uniform weights.  The free
    three-parameter fit only uses radii below ``1/e`` where the second
    regressor is defined.
    """
    lo, hi = window
    if not (0.0 < lo < hi):
        raise ConfigError(f"window must satisfy 0 < lo < hi, got {window}")
    mask = table.fit_usable(min_hits) & (table.radii >= lo) & (table.radii <= hi)
    n_params = 2 if force_b is not None else 3
    if force_b is None:
        mask &= table.radii < 1.0 / math.e
    else:
        mask &= table.radii < 1.0
    s = table.radii[mask]
    b = table.b_hat[mask]
    if s.size < n_params + 2:
        raise InsufficientData(
            f"{s.size} usable entries in window {window}, need {n_params + 2}"
        )
    y = np.log(b)
    x1 = np.log(1.0 / s)
    cols = [np.ones_like(s), x1]
    if force_b is None:
        cols.append(np.log(x1))
    design = np.stack(cols, axis=1)
    if table.n_samples > 0:
        p = table.p_hat[mask]
        var = (1.0 - p) / (table.n_samples * p * b * b)  # delta method on log(-log p)
        weights = 1.0 / var
    else:
        weights = np.ones_like(s)
    sw = np.sqrt(weights)
    a_mat = design * sw[:, None]
    y_w = y * sw
    cond = np.linalg.cond(a_mat)
    if not np.isfinite(cond) or cond > 1e10:
        raise IllConditionedFit(f"design condition number {cond:.3e}")
    coef, _, _, _ = np.linalg.lstsq(a_mat, y_w, rcond=None)
    resid = y_w - a_mat @ coef
    gram_inv = np.linalg.inv(a_mat.T @ a_mat)
    if table.n_samples > 0:
        cov = gram_inv  # weights are true inverse variances
    else:
        dof = max(s.size - n_params, 1)
        cov = gram_inv * float(resid @ resid) / dof
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    c = math.exp(coef[0])
    a = float(coef[1])
    bexp = float(force_b) if force_b is not None else float(coef[2])
    se_b = 0.0 if force_b is not None else float(se[2])
    if not (a > 0.0) or not math.isfinite(c):
        raise IllConditionedFit(f"fit produced inadmissible law c={c}, a={a}")
    return AsymptoticLaw(c=c, a=a, b=bexp,
                         stderr_c=c * float(se[0]), stderr_a=float(se[1]),
                         stderr_b=se_b, window=(float(lo), float(hi)),
                         n_used=int(s.size))


def invert_asymptotic(law: AsymptoticLaw, rate: float) -> float:
    """Leading-order inverse of the law: the radius achieving ``rate``.

    ``b^{-1}(R) ~ c^{1/a} a^{-b/a} R^{-1/a} (log R)^{b/a}``.  With a
    log factor present the expansion needs ``log R > 0``.
    """
    if law.b != 0.0:
        if rate <= 1.0:
            raise DomainError("inverse expansion with log factor needs rate > 1")
        return (law.c ** (1.0 / law.a) * law.a ** (-law.b / law.a)
                * rate ** (-1.0 / law.a) * math.log(rate) ** (law.b / law.a))
    if rate <= 0.0:
        raise DomainError("rate must be positive")
    return (law.c / rate) ** (1.0 / law.a)


def ratio_condition_report(law: AsymptoticLaw, window: Tuple[float, float],
                           eta: float = 0.5, n_points: int = 9) -> dict:
    """Check the vanishing-mass-ratio condition implied by a law.

    For the error asymptotics to be tight the mass ratio
    ``mu(B(0, eta s)) / mu(B(0, s)) = exp(b(s) - b(eta s))`` must tend
    to zero as ``s -> 0`` for every ``eta < 1``.  Reports the ratio
    over a geometric sweep of the window and whether it is shrinking.
    """
    if not (0.0 < eta < 1.0):
        raise ConfigError("eta must lie in ]0, 1[")
    lo, hi = window
    if not (0.0 < lo < hi):
        raise ConfigError(f"window must satisfy 0 < lo < hi, got {window}")
    s_vals = np.geomspace(lo, hi, n_points)
    ratios = np.array([math.exp(law.b_of(s) - law.b_of(eta * s)) for s in s_vals])
    return {
        "eta": eta,
        "s": s_vals,
        "mass_ratio": ratios,
        "vanishing": bool(np.all(np.diff(ratios) >= 0.0) and ratios[0] < ratios[-1]),
    }
