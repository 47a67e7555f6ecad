"""Monte Carlo tail estimation for restricted quadratic forms.

Each experiment draws a uniform m-subset J of the coordinates and a
Rademacher sign vector, evaluates a statistic of the restricted matrix,
and counts threshold exceedances.  Counting is exact integer work, so
partial runs merge associatively and empirical tails are nonincreasing
by construction.  Theoretical bound shapes are stored per threshold
with the leading constant left pluggable; fitting reports the largest
constant consistent with what was observed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import check_matrix, hs_norm, spectral_norm
from .randmodel import sample_subsets

__all__ = [
    "TailCurve",
    "SmallBallEstimate",
    "WILSON_Z99",
    "wilson_interval",
    "default_thresholds",
    "mc_quadratic_tail",
    "mc_small_ball",
    "mc_large_deviation",
    "merge_curves",
]

# two-sided 99% normal quantile, Phi^{-1}(0.995)
WILSON_Z99 = 2.5758293035489004

_PILOT = 1024
_DEFAULT_GRID = 32


def wilson_interval(count: int, trials: int, z: float = WILSON_Z99):
    """Wilson score interval for a binomial proportion.

    Returns (p_hat, lo, hi).  Chosen over the Wald interval because it
    stays honest when count is 0 or trials, which tail estimation hits
    constantly.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= count <= trials:
        raise ValueError(f"count {count} outside [0, {trials}]")
    p = count / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / trials + z2 / (4 * trials * trials))
    # the endpoints are exact at the boundary counts; rounding dust in
    # center - half would otherwise exclude 0 (and symmetrically 1)
    lo = 0.0 if count == 0 else max(0.0, center - half)
    hi = 1.0 if count == trials else min(1.0, center + half)
    return p, lo, hi


@dataclass
class TailCurve:
    """Empirical exceedance curve with a pluggable theoretical overlay.

    counts[k] is the exact number of trials whose statistic reached
    thresholds[k].  shape[k] is the exponent shape of the matching
    theoretical bound, so bound_values(c) = prefactor * exp(-c*shape).
    admissible marks thresholds that the bound claims to cover; the
    rest stay reported but are excluded from fitting.  raw_sum and
    raw_sq_sum carry the uncentered statistic's first two moments when
    the experiment tracks them (quadratic-form runs do).
    """

    thresholds: np.ndarray
    counts: np.ndarray
    trials: int
    shape: np.ndarray
    prefactor: float = 1.0
    admissible: np.ndarray | None = None
    raw_sum: float = 0.0
    raw_sq_sum: float = 0.0
    raw_trials: int = 0

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.shape = np.asarray(self.shape, dtype=float)
        k = self.thresholds.size
        if self.counts.shape != (k,) or self.shape.shape != (k,):
            raise ValueError("thresholds, counts and shape must align")
        if k and np.any(np.diff(self.thresholds) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if np.any(self.counts < 0) or np.any(self.counts > self.trials):
            raise ValueError("counts outside [0, trials]")
        if k and np.any(np.diff(self.counts) > 0):
            raise ValueError("exceedance counts must be nonincreasing")
        if self.admissible is None:
            self.admissible = np.ones(k, dtype=bool)
        else:
            self.admissible = np.asarray(self.admissible, dtype=bool)
            if self.admissible.shape != (k,):
                raise ValueError("admissible mask must align with thresholds")

    @property
    def p_hat(self) -> np.ndarray:
        return self.counts / self.trials

    def _wilson(self):
        rows = [wilson_interval(int(c), self.trials) for c in self.counts]
        arr = np.asarray(rows, dtype=float)
        return arr[:, 1], arr[:, 2]

    @property
    def wilson_lo(self) -> np.ndarray:
        return self._wilson()[0]

    @property
    def wilson_hi(self) -> np.ndarray:
        return self._wilson()[1]

    @property
    def half_widths(self) -> np.ndarray:
        lo, hi = self._wilson()
        return (hi - lo) / 2.0

    @property
    def raw_mean(self) -> float:
        if self.raw_trials == 0:
            return math.nan
        return self.raw_sum / self.raw_trials

    @property
    def raw_se(self) -> float:
        if self.raw_trials < 2:
            return math.nan
        mean = self.raw_mean
        var = max(0.0, self.raw_sq_sum / self.raw_trials - mean * mean)
        return math.sqrt(var / self.raw_trials)

    def bound_values(self, c: float) -> np.ndarray:
        if c < 0:
            raise ValueError("bound constant must be nonnegative")
        with np.errstate(over="ignore"):
            return self.prefactor * np.exp(-c * self.shape)

    def fitted_c(self, conservative: bool = False) -> float:
        """Largest c such that the bound still dominates the observed
        curve on admissible thresholds (infinite when nothing binds).

        conservative=True fits against the Wilson upper envelope
        instead of the point estimates.
        """
        p = self.wilson_hi if conservative else self.p_hat
        best = math.inf
        for k in range(self.thresholds.size):
            if not self.admissible[k]:
                continue
            if p[k] <= 0.0 or not math.isfinite(self.shape[k]) or self.shape[k] <= 0:
                continue
            if p[k] >= self.prefactor:
                return 0.0
            best = min(best, math.log(self.prefactor / p[k]) / self.shape[k])
        return best

    def merge(self, other: "TailCurve") -> "TailCurve":
        """Combine with an independent run over the same grid; exact
        because only integer counts and raw sums are added."""
        if not np.array_equal(self.thresholds, other.thresholds):
            raise ValueError("cannot merge curves with different thresholds")
        if not np.array_equal(self.shape, other.shape):
            raise ValueError("cannot merge curves with different bound shapes")
        if self.prefactor != other.prefactor:
            raise ValueError("cannot merge curves with different prefactors")
        if not np.array_equal(self.admissible, other.admissible):
            raise ValueError("cannot merge curves with different admissibility")
        return TailCurve(
            thresholds=self.thresholds,
            counts=self.counts + other.counts,
            trials=self.trials + other.trials,
            shape=self.shape,
            prefactor=self.prefactor,
            admissible=self.admissible,
            raw_sum=self.raw_sum + other.raw_sum,
            raw_sq_sum=self.raw_sq_sum + other.raw_sq_sum,
            raw_trials=self.raw_trials + other.raw_trials,
        )


def merge_curves(curves) -> TailCurve:
    curves = list(curves)
    if not curves:
        raise ValueError("nothing to merge")
    out = curves[0]
    for cur in curves[1:]:
        out = out.merge(cur)
    return out


@dataclass
class SmallBallEstimate:
    """Point estimate of a single small-ball event probability."""

    count: int
    trials: int
    threshold: float
    shape: float
    prefactor: float = 2.0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if not 0 <= self.count <= self.trials:
            raise ValueError("count outside [0, trials]")

    @property
    def p_hat(self) -> float:
        return self.count / self.trials

    @property
    def wilson(self):
        _, lo, hi = wilson_interval(self.count, self.trials)
        return lo, hi

    def bound_value(self, c: float) -> float:
        if c < 0:
            raise ValueError("bound constant must be nonnegative")
        return self.prefactor * math.exp(-c * self.shape)

    def fitted_c(self, conservative: bool = False) -> float:
        p = self.wilson[1] if conservative else self.p_hat
        if p <= 0.0 or self.shape <= 0 or not math.isfinite(self.shape):
            return math.inf
        if p >= self.prefactor:
            return 0.0
        return math.log(self.prefactor / p) / self.shape

    def merge(self, other: "SmallBallEstimate") -> "SmallBallEstimate":
        if (self.threshold, self.shape, self.prefactor) != (
            other.threshold,
            other.shape,
            other.prefactor,
        ):
            raise ValueError("cannot merge estimates of different events")
        return SmallBallEstimate(
            count=self.count + other.count,
            trials=self.trials + other.trials,
            threshold=self.threshold,
            shape=self.shape,
            prefactor=self.prefactor,
        )


def default_thresholds(pilot_stats, grid: int = _DEFAULT_GRID) -> np.ndarray:
    """Log-spaced grid covering [0.1, 10] times the pilot spread."""
    sigma = float(np.std(np.asarray(pilot_stats, dtype=float)))
    if not math.isfinite(sigma) or sigma <= 0.0:
        sigma = 1e-12
    return np.geomspace(0.1 * sigma, 10.0 * sigma, grid)


def _exceed_counts(stats: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """counts[k] = #{stat >= thresholds[k]}, via one sort-free pass."""
    idx = np.searchsorted(thresholds, stats, side="right")
    hist = np.bincount(idx, minlength=thresholds.size + 1)
    return np.cumsum(hist[::-1])[::-1][1:].astype(np.int64)


def _quad_stats(a, n, m, count, rng, chunk):
    """Raw restricted quadratic forms eps^T A_JJ eps, count of them."""
    out = np.empty(count)
    done = 0
    while done < count:
        c = min(chunk, count - done)
        subs = sample_subsets(n, m, c, rng)
        eps = rng.integers(0, 2, size=(c, m)).astype(float) * 2.0 - 1.0
        blocks = a[subs[:, :, None], subs[:, None, :]]
        out[done : done + c] = np.einsum("ci,cij,cj->c", eps, blocks, eps)
        done += c
    return out


def _restricted_norms(b, n, m, count, rng, chunk):
    """Euclidean norms of B R_J eps, count of them."""
    out = np.empty(count)
    done = 0
    while done < count:
        c = min(chunk, count - done)
        subs = sample_subsets(n, m, c, rng)
        eps = rng.integers(0, 2, size=(c, m)).astype(float) * 2.0 - 1.0
        cols = b[:, subs]  # (n, c, m)
        img = np.einsum("ncm,cm->cn", cols, eps)
        out[done : done + c] = np.sqrt(np.einsum("cn,cn->c", img, img))
        done += c
    return out


def _quad_chunk(m: int) -> int:
    return max(1, int(4_000_000 // max(m * m, 1)))


def _norm_chunk(n: int, m: int) -> int:
    return max(1, int(4_000_000 // max(n * m, 1)))


def mc_quadratic_tail(a, n: int, m: int, trials: int, thresholds=None, stream=None) -> TailCurve:
    """Tail of |eps^T A_JJ eps - (m/n) tr A| over random (J, eps).

    The centering constant is the exact mean of the restricted form, so
    the curve's raw moments double as a centering self-check.
    """
    a = check_matrix(np.asarray(a, dtype=float), square=True)
    if a.shape[0] != n:
        raise ValueError(f"matrix is {a.shape[0]}x{a.shape[0]}, expected {n}x{n}")
    if not 1 <= m < n:
        raise ValueError(f"subset size {m} outside [1, {n - 1}]")
    if trials < 1:
        raise ValueError("trials must be positive")
    if stream is None:
        raise ValueError("a random stream is required")
    chunk = _quad_chunk(m)
    center = (m / n) * float(np.trace(a))
    if thresholds is None:
        pilot = _quad_stats(a, n, m, min(_PILOT, trials), stream, chunk)
        thresholds = default_thresholds(np.abs(pilot - center))
    thresholds = np.asarray(thresholds, dtype=float)

    raw = _quad_stats(a, n, m, trials, stream, chunk)
    stats = np.abs(raw - center)
    counts = _exceed_counts(stats, thresholds)

    norm = spectral_norm(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        shape = np.where(
            norm > 0.0,
            np.minimum(thresholds**2 / (m * norm * norm), thresholds / norm),
            math.inf,
        )
    return TailCurve(
        thresholds=thresholds,
        counts=counts,
        trials=trials,
        shape=shape,
        prefactor=1.0,
        raw_sum=float(raw.sum()),
        raw_sq_sum=float((raw * raw).sum()),
        raw_trials=trials,
    )


def mc_small_ball(b, n: int, m: int, trials: int, stream=None) -> SmallBallEstimate:
    """P(|B R_J eps|_2 <= sqrt(m/2n) * |B|_HS) with Wilson interval."""
    b = check_matrix(np.asarray(b, dtype=float), square=True)
    if b.shape[0] != n:
        raise ValueError(f"matrix is {b.shape[0]}x{b.shape[0]}, expected {n}x{n}")
    if not 1 <= m < n:
        raise ValueError(f"subset size {m} outside [1, {n - 1}]")
    if trials < 1:
        raise ValueError("trials must be positive")
    if stream is None:
        raise ValueError("a random stream is required")
    hs = hs_norm(b)
    threshold = math.sqrt(m / (2 * n)) * hs
    stats = _restricted_norms(b, n, m, trials, stream, _norm_chunk(n, m))
    count = int(np.count_nonzero(stats <= threshold))
    norm = spectral_norm(b)
    shape = (m / n**2) * hs**4 / norm**4 if norm > 0.0 else math.inf
    return SmallBallEstimate(
        count=count, trials=trials, threshold=threshold, shape=shape
    )


def mc_large_deviation(b, n: int, m: int, trials: int, thresholds=None, stream=None) -> TailCurve:
    """Tail of |B R_J eps|_2; thresholds at or below sqrt(4m/n)*|B|_HS
    are kept in the report but flagged inadmissible for the bound."""
    b = check_matrix(np.asarray(b, dtype=float), square=True)
    if b.shape[0] != n:
        raise ValueError(f"matrix is {b.shape[0]}x{b.shape[0]}, expected {n}x{n}")
    if not 1 <= m < n:
        raise ValueError(f"subset size {m} outside [1, {n - 1}]")
    if trials < 1:
        raise ValueError("trials must be positive")
    if stream is None:
        raise ValueError("a random stream is required")
    chunk = _norm_chunk(n, m)
    if thresholds is None:
        pilot = _restricted_norms(b, n, m, min(_PILOT, trials), stream, chunk)
        thresholds = default_thresholds(pilot)
    thresholds = np.asarray(thresholds, dtype=float)

    stats = _restricted_norms(b, n, m, trials, stream, chunk)
    counts = _exceed_counts(stats, thresholds)

    hs = hs_norm(b)
    norm = spectral_norm(b)
    admissible = thresholds > math.sqrt(4 * m / n) * hs
    with np.errstate(divide="ignore"):
        shape = (
            thresholds**2 / (norm * norm)
            if norm > 0.0
            else np.full(thresholds.size, math.inf)
        )
    return TailCurve(
        thresholds=thresholds,
        counts=counts,
        trials=trials,
        shape=shape,
        prefactor=2.0,
        admissible=admissible,
    )
