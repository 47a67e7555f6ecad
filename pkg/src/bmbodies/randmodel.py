"""Seeded randomness for the subset model: named substreams, uniform
fixed-size subsets, Rademacher signs, random bodies, and probe vectors.

All sampling goes through numpy Generators backed by Philox, a
counter-based PRNG with 128-bit state.  A substream is addressed by a
master seed plus a hierarchical name such as "separate/body/3"; the name
is hashed into the seed material, so any worker can reconstruct any
stream independently of scheduling order.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GENERATOR_NAME",
    "ModelParams",
    "TestVector",
    "BodySample",
    "round_half_up",
    "substream",
    "check_index_set",
    "sample_subset",
    "sample_subsets",
    "sample_rademacher",
    "sample_body",
    "sample_test_vector",
    "theorem_subset_count",
]

GENERATOR_NAME = "philox4x64"


def round_half_up(x: float) -> int:
    """Round to nearest integer, halves away from zero toward +inf."""
    return int(math.floor(x + 0.5))


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for (seed, name).

    The name is SHA-256 hashed into 32-bit words that join the master seed
    as entropy for a SeedSequence, so distinct names give statistically
    independent Philox streams and equal names reproduce bit-identically.
    """
    if not (0 <= seed < 2**64):
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "big") for i in range(0, 32, 4)]
    ss = np.random.SeedSequence([seed] + words)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the random subset model.

    n is the ambient dimension, delta the subset density, n_subsets the
    number of subsets actually drawn (a direct input; the theorem-scale
    count exp(c*delta^2*n) is available separately as a report value).
    m = round_half_up(delta * n) is the subset size.  below_regime flags
    delta at or below regime_const * sqrt(log(n)/n); it never raises.
    """

    n: int
    delta: float
    n_subsets: int
    regime_const: float = 1.0
    m: int = field(init=False)
    below_regime: bool = field(init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not (0.0 < self.delta <= 1.0):
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.n_subsets < 1:
            raise ValueError(f"n_subsets must be >= 1, got {self.n_subsets}")
        m = round_half_up(self.delta * self.n)
        if m < 1:
            raise ValueError(
                f"delta*n rounds to {m}; subsets would be empty (n={self.n}, delta={self.delta})"
            )
        object.__setattr__(self, "m", m)
        threshold = self.regime_const * math.sqrt(math.log(max(self.n, 2)) / self.n)
        object.__setattr__(self, "below_regime", bool(self.delta <= threshold))


def theorem_subset_count(params: ModelParams, c: float = 1.0) -> float:
    """Report-only theorem scale exp(c * delta^2 * n); inf on overflow."""
    try:
        return math.exp(c * params.delta**2 * params.n)
    except OverflowError:
        return float("inf")


def check_index_set(idx, n: int) -> np.ndarray:
    """Validate a sorted array of distinct 0-based indices below n."""
    a = np.asarray(idx, dtype=np.int64)
    if a.ndim != 1:
        raise ValueError("index set must be 1-D")
    if a.size and (a[0] < 0 or a[-1] >= n):
        raise ValueError(f"indices must lie in [0, {n}), got range [{a[0]}, {a[-1]}]")
    if np.any(np.diff(a) <= 0):
        raise ValueError("indices must be strictly increasing")
    return a


def sample_subset(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random m-subset of {0..n-1}, returned sorted.

    Uses the random-keys construction (order statistics of n iid uniforms),
    which is exchangeable and hence exactly uniform over m-subsets.
    """
    return sample_subsets(n, m, 1, rng)[0]


def sample_subsets(n: int, m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """count iid uniform m-subsets as a (count, m) sorted index array."""
    if not (1 <= m <= n):
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    if count < 0:
        raise ValueError("count must be nonnegative")
    keys = rng.random((count, n))
    picked = np.argpartition(keys, m - 1, axis=1)[:, :m]
    return np.sort(picked, axis=1).astype(np.int64)


def sample_rademacher(k: int, rng: np.random.Generator) -> np.ndarray:
    """k iid signs from {-1, +1}, as int64."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return rng.integers(0, 2, size=k, dtype=np.int64) * 2 - 1


@dataclass(frozen=True)
class TestVector:
    """Probe vector y = sum_{j in subset} sign_j e_j with |y|_2^2 = m."""

    subset: np.ndarray
    signs: np.ndarray
    y: np.ndarray

    @property
    def m(self) -> int:
        return int(self.subset.size)


def sample_test_vector(n: int, m: int, rng: np.random.Generator) -> TestVector:
    """Uniform m-subset with iid Rademacher signs, materialized densely."""
    subset = sample_subset(n, m, rng)
    signs = sample_rademacher(m, rng)
    y = np.zeros(n)
    y[subset] = signs
    return TestVector(subset=subset, signs=signs, y=y)


@dataclass(frozen=True)
class BodySample:
    """A sampled hull body together with its subsets and coverage flag."""

    body: object
    subsets: np.ndarray  # (n_subsets, m) sorted indices
    covers_all: bool


def sample_body(params: ModelParams, rng: np.random.Generator) -> BodySample:
    """Draw the subset family and build the model body.

    covers_all reports whether the union of the subsets is the whole
    coordinate set; the theorem conditions on that event (failure
    probability at most n*(1-delta)^n_subsets) but sampling never rejects.
    """
    from . import bodies

    subsets = sample_subsets(params.n, params.m, params.n_subsets, rng)
    covered = np.zeros(params.n, dtype=bool)
    covered[subsets.ravel()] = True
    body = bodies.subset_body(params, subsets)
    return BodySample(body=body, subsets=subsets, covers_all=bool(covered.all()))
