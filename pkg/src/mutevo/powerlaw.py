"""Discrete power-law distribution over mutation strengths.

A mutation strength is the number of lines to change, alpha, drawn from
{1, ..., n // 2} for a program of n lines with probability proportional to
alpha ** -beta.  Requested rates are then 100 * alpha / n percent, which
keeps every request at or below 50% of the parent program.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol


class UniformSource(Protocol):
    """Anything with random() -> float in [0, 1); random.Random qualifies."""

    def random(self) -> float: ...


@dataclass(frozen=True)
class PowerLawConfig:
    """Distribution over alpha in {1 .. n // 2} with weight alpha ** -beta."""

    beta: float
    n: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be a positive finite real, got {self.beta!r}")
        if self.n < 2:
            raise ValueError(
                f"n must be at least 2 so the support {{1 .. n // 2}} is non-empty, got {self.n}"
            )

    @property
    def support_max(self) -> int:
        return self.n // 2


@lru_cache(maxsize=None)
def normalization(config: PowerLawConfig) -> float:
    """Constant that makes the alpha ** -beta weights sum to one."""
    return 1.0 / sum(i ** -config.beta for i in range(1, config.support_max + 1))


def pmf(alpha: int, config: PowerLawConfig) -> float:
    """Probability of drawing the strength alpha."""
    if not 1 <= alpha <= config.support_max:
        raise ValueError(f"alpha must lie in [1, {config.support_max}], got {alpha}")
    return normalization(config) * alpha ** -config.beta


@lru_cache(maxsize=None)
def _cdf_table(config: PowerLawConfig) -> tuple[float, ...]:
    weights = [i ** -config.beta for i in range(1, config.support_max + 1)]
    total = sum(weights)
    table = []
    acc = 0.0
    for w in weights:
        acc += w
        table.append(acc / total)
    table[-1] = 1.0  # guard against accumulated rounding at the top end
    return tuple(table)


def sample_alpha(config: PowerLawConfig, rng: UniformSource) -> int:
    """Draw a strength by inverting the cumulative table; O(log n) per draw."""
    u = rng.random()
    return bisect.bisect_right(_cdf_table(config), u) + 1


def sample_rate_percent(config: PowerLawConfig, rng: UniformSource) -> float:
    """Draw a mutation rate in percent: 100 * alpha / n, never above 50."""
    return 100.0 * sample_alpha(config, rng) / config.n
