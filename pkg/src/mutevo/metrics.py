"""Scores: rate adherence (MSE, weighted MSE) and anytime performance (AOCC)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

# A delivered diff of exactly zero (the model changed nothing) is floored to
# this value, in percent, so the log-ratio error stays finite but large.
ZERO_DIFF_FLOOR_PERCENT = 0.01

# Default precision window for AOCC, in objective-precision units.
DEFAULT_PRECISION_BOUNDS = (1e-8, 1e2)


@dataclass(frozen=True)
class AdherenceSample:
    """Delivered diffs for children that were all asked for the same rate."""

    requested_rate: float
    delivered_diffs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not (math.isfinite(self.requested_rate) and self.requested_rate > 0):
            raise ValueError(f"requested rate must be positive, got {self.requested_rate!r}")
        for diff in self.delivered_diffs:
            if not (math.isfinite(diff) and diff >= 0):
                raise ValueError(f"delivered diffs must be finite and non-negative, got {diff!r}")


def mse(sample: AdherenceSample) -> float:
    """Mean squared natural-log ratio between delivered diffs and the request.

    A perfectly obedient backend scores 0; overshooting by a factor equals
    undershooting by the same factor.  Zero diffs are floored (see
    ZERO_DIFF_FLOOR_PERCENT) rather than crashing the log.  Note the floor is
    applied in absolute percent, so scale coherence holds only for positive
    diffs.
    """
    if not sample.delivered_diffs:
        raise ValueError("cannot score an empty collection of delivered diffs")
    x = sample.requested_rate
    total = 0.0
    for diff in sample.delivered_diffs:
        d = diff if diff > 0 else ZERO_DIFF_FLOOR_PERCENT
        total += math.log(d / x) ** 2
    return total / len(sample.delivered_diffs)


def tdw_score(per_rate: Sequence[tuple[float, float]], beta: float) -> float:
    """Average per-rate MSE, weighted by how likely each rate is when sampling.

    `per_rate` holds (rate_percent, mse) pairs.  Weights are proportional to
    rate ** -beta and normalized over the given rates, so small rates (the
    hard cases, and the common ones under a power law) dominate.  The
    reference program length cancels in the normalization.
    """
    if not per_rate:
        raise ValueError("need at least one (rate, mse) pair")
    if not (math.isfinite(beta) and beta > 0):
        raise ValueError(f"beta must be a positive finite real, got {beta!r}")
    rates = [rate for rate, _ in per_rate]
    if len(set(rates)) != len(rates):
        raise ValueError("rates must be distinct")
    for rate, value in per_rate:
        if not (math.isfinite(rate) and rate > 0):
            raise ValueError(f"rates must be positive, got {rate!r}")
        if not math.isfinite(value):
            raise ValueError(f"mse values must be finite, got {value!r}")
    weights = [rate ** -beta for rate in rates]
    total_weight = sum(weights)
    weighted = sum(w / total_weight * value for w, (_, value) in zip(weights, per_rate))
    return weighted / len(per_rate)


@dataclass(frozen=True)
class EvalTrace:
    """Best-so-far objective precision after each evaluation of one run."""

    best_so_far: tuple[float, ...]
    budget: int
    bounds: tuple[float, float] = DEFAULT_PRECISION_BOUNDS

    def __post_init__(self) -> None:
        lower, upper = self.bounds
        if not (0 < lower < upper):
            raise ValueError(f"bounds must satisfy 0 < lower < upper, got {self.bounds!r}")
        if self.budget < 1:
            raise ValueError(f"budget must be positive, got {self.budget}")
        if len(self.best_so_far) > self.budget:
            raise ValueError(
                f"trace has {len(self.best_so_far)} entries but the budget is {self.budget}"
            )
        previous = None
        for value in self.best_so_far:
            if previous is not None and value > previous:
                raise ValueError("best-so-far sequence must be non-increasing")
            previous = value


def aocc(trace: EvalTrace) -> float:
    """Area over the convergence curve on a log precision scale, in [0, 1].

    Each evaluation contributes 1 - clamp((log10(y) - log10(lb)) / span, 0, 1)
    where y is the best precision so far; traces shorter than the budget carry
    their final value forward.  Higher is better; 1 means the lower bound was
    hit immediately.
    """
    if not trace.best_so_far:
        raise ValueError("cannot score an empty trace")
    lower, upper = trace.bounds
    log_lower = math.log10(lower)
    span = math.log10(upper) - log_lower
    last = len(trace.best_so_far) - 1
    total = 0.0
    for step in range(trace.budget):
        y = trace.best_so_far[min(step, last)]
        if y <= 0:
            total += 1.0  # at or below exact precision: full credit
            continue
        fraction = (math.log10(y) - log_lower) / span
        total += 1.0 - min(1.0, max(0.0, fraction))
    return total / trace.budget


def mean_aocc(traces: Iterable[EvalTrace]) -> float:
    """Mean AOCC over runs; all traces must share the same precision bounds."""
    traces = list(traces)
    if not traces:
        raise ValueError("cannot average over zero traces")
    bounds = traces[0].bounds
    for trace in traces:
        if trace.bounds != bounds:
            raise ValueError("all traces must share the same precision bounds")
    return sum(aocc(trace) for trace in traces) / len(traces)
