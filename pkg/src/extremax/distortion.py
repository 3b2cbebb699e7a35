"""Distortion measures for estimating the max, the argmax, or both.

Users are 1-indexed throughout the public API.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import DomainError
from .sources import ContinuousSource, DiscreteSource, expected_max


@dataclass(frozen=True)
class Outcome:
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise DomainError("outcome needs at least one value")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def z_max(self) -> float:
        return max(self.values)

    @property
    def z_argmax(self) -> frozenset:
        m = self.z_max
        return frozenset(i + 1 for i, v in enumerate(self.values) if v == m)


@dataclass(frozen=True)
class Estimate:
    z_max: Optional[float] = None
    z_argmax: Optional[int] = None

    def __post_init__(self):
        if self.z_max is None and self.z_argmax is None:
            raise DomainError("estimate needs a max, an argmax, or both")


def _check_index(outcome: Outcome, i_hat: int) -> None:
    if not 1 <= i_hat <= outcome.n:
        raise DomainError(f"user index {i_hat} outside 1..{outcome.n}")


def d_max(outcome: Outcome, z_hat: float) -> float:
    if z_hat < 0:
        raise DomainError("max estimate must be nonnegative")
    zm = outcome.z_max
    return zm - z_hat if z_hat <= zm else zm


def d_argmax(outcome: Outcome, i_hat: int) -> float:
    _check_index(outcome, i_hat)
    if i_hat in outcome.z_argmax:
        return 0.0
    return outcome.z_max - outcome.values[i_hat - 1]


def d_pair(outcome: Outcome, z_hat: float, i_hat: int) -> float:
    if z_hat < 0:
        raise DomainError("max estimate must be nonnegative")
    _check_index(outcome, i_hat)
    zm = outcome.z_max
    return zm - z_hat if z_hat <= outcome.values[i_hat - 1] else zm


def evaluate(outcome: Outcome, estimate: Estimate, target: str) -> float:
    if target == "max":
        return d_max(outcome, estimate.z_max)
    if target == "argmax":
        return d_argmax(outcome, estimate.z_argmax)
    if target == "pair":
        return d_pair(outcome, estimate.z_max, estimate.z_argmax)
    raise DomainError(f"unknown target {target!r}")


def average_distortion(outcomes: Iterable[Outcome], estimates: Iterable[Estimate], target: str) -> float:
    """Sequence average of per-sample distortions."""
    total, count = 0.0, 0
    for o, e in zip(outcomes, estimates):
        total += evaluate(o, e, target)
        count += 1
    if count == 0:
        raise DomainError("empty sequence")
    return total / count


# Vectorized forms used by the Monte-Carlo engine. x has shape (S, N);
# z_hat has shape (S,); i_hat has shape (S,) with 0-based user indices.

def d_max_batch(x: np.ndarray, z_hat: np.ndarray) -> np.ndarray:
    zm = x.max(axis=1)
    return np.where(z_hat <= zm, zm - z_hat, zm)


def d_argmax_batch(x: np.ndarray, i_hat: np.ndarray) -> np.ndarray:
    zm = x.max(axis=1)
    chosen = np.take_along_axis(x, i_hat[:, None], axis=1)[:, 0]
    return zm - chosen


def d_pair_batch(x: np.ndarray, z_hat: np.ndarray, i_hat: np.ndarray) -> np.ndarray:
    zm = x.max(axis=1)
    chosen = np.take_along_axis(x, i_hat[:, None], axis=1)[:, 0]
    return np.where(z_hat <= chosen, zm - z_hat, zm)


def discrete_expected_max(src: DiscreteSource, n: int) -> float:
    if n < 1:
        raise DomainError("n must be at least 1")
    alpha = np.asarray(src.support)
    cdf = src.cdf
    prev = np.concatenate(([0.0], cdf[:-1]))
    return float(np.sum(alpha * (cdf ** n - prev ** n)))


def normalized_distortion(d_avg: float, src, n: int) -> float:
    if d_avg < 0:
        raise DomainError("distortion must be nonnegative")
    if isinstance(src, DiscreteSource):
        em = discrete_expected_max(src, n)
    elif isinstance(src, ContinuousSource):
        em = expected_max(src, n)
    else:
        raise DomainError("unsupported source type")
    if em <= 0:
        raise DomainError("expected maximum is zero")
    return d_avg / em
