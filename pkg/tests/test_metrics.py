from __future__ import annotations

import math

import pytest

from mutevo.metrics import (
    DEFAULT_PRECISION_BOUNDS,
    ZERO_DIFF_FLOOR_PERCENT,
    AdherenceSample,
    EvalTrace,
    aocc,
    mean_aocc,
    mse,
    tdw_score,
)


def test_mse_zero_for_perfect_adherence() -> None:
    assert mse(AdherenceSample(10.0, (10.0, 10.0, 10.0))) == 0.0


def test_mse_symmetric_log_ratio() -> None:
    # doubling and halving are the same error: mean of ln(2)^2 twice
    value = mse(AdherenceSample(10.0, (20.0, 5.0)))
    assert value == pytest.approx(math.log(2.0) ** 2, abs=1e-12)
    assert value == pytest.approx(0.480453, abs=1e-6)


def test_mse_scale_coherence() -> None:
    base = mse(AdherenceSample(10.0, (14.0, 3.0, 26.5)))
    for c in (0.5, 3.0):
        scaled = mse(AdherenceSample(10.0 * c, (14.0 * c, 3.0 * c, 26.5 * c)))
        assert scaled == pytest.approx(base, abs=1e-12)


def test_mse_floors_zero_diffs() -> None:
    value = mse(AdherenceSample(2.0, (0.0,)))
    expected = math.log(ZERO_DIFF_FLOOR_PERCENT / 2.0) ** 2
    assert value == pytest.approx(expected, abs=1e-12)
    assert value == pytest.approx(28.07, abs=0.01)


def test_mse_floor_applies_only_to_exact_zero() -> None:
    tiny = mse(AdherenceSample(2.0, (0.005,)))
    floored = mse(AdherenceSample(2.0, (0.0,)))
    assert tiny > floored  # 0.005 is below the floor value and scores worse


def test_mse_rejects_empty_and_bad_input() -> None:
    with pytest.raises(ValueError):
        mse(AdherenceSample(10.0, ()))
    with pytest.raises(ValueError):
        AdherenceSample(0.0, (5.0,))
    with pytest.raises(ValueError):
        AdherenceSample(10.0, (-1.0,))
    with pytest.raises(ValueError):
        AdherenceSample(10.0, (math.nan,))


def test_tdw_weights_sum_to_one_and_divide_by_count() -> None:
    rates = (2.0, 5.0, 10.0, 20.0, 40.0)
    # equal per-rate MSE m gives m / M regardless of weighting
    m = 0.7
    score = tdw_score([(r, m) for r in rates], beta=1.5)
    assert score == pytest.approx(m / len(rates), abs=1e-12)


def test_tdw_against_direct_summation() -> None:
    rates = (2.0, 5.0, 10.0, 20.0, 40.0)
    values = (0.1, 0.2, 0.3, 0.4, 0.5)
    beta = 1.5
    weights = [r ** -beta for r in rates]
    total = sum(weights)
    expected = sum(w / total * v for w, v in zip(weights, values)) / len(rates)
    assert tdw_score(list(zip(rates, values)), beta) == pytest.approx(expected, abs=1e-12)
    # the 2% rate dominates under beta = 1.5
    assert weights[0] / total == pytest.approx(0.7219, abs=1e-4)


def test_tdw_single_rate() -> None:
    assert tdw_score([(10.0, 0.4)], beta=1.5) == pytest.approx(0.4, abs=1e-12)


def test_tdw_rejects_duplicates_and_bad_beta() -> None:
    with pytest.raises(ValueError):
        tdw_score([(10.0, 0.1), (10.0, 0.2)], beta=1.5)
    with pytest.raises(ValueError):
        tdw_score([(10.0, 0.1)], beta=0.0)
    with pytest.raises(ValueError):
        tdw_score([], beta=1.5)
    with pytest.raises(ValueError):
        tdw_score([(-5.0, 0.1)], beta=1.5)


def test_trace_validation() -> None:
    with pytest.raises(ValueError):
        EvalTrace((3.0, 5.0), budget=10)  # increasing
    with pytest.raises(ValueError):
        EvalTrace((1.0,), budget=0)
    with pytest.raises(ValueError):
        EvalTrace((1.0, 1.0, 1.0), budget=2)  # longer than budget
    with pytest.raises(ValueError):
        EvalTrace((1.0,), budget=5, bounds=(0.0, 1.0))
    with pytest.raises(ValueError):
        EvalTrace((1.0,), budget=5, bounds=(1.0, 0.5))


def test_aocc_constant_at_bounds() -> None:
    lb, ub = DEFAULT_PRECISION_BOUNDS
    assert aocc(EvalTrace((ub,) * 10, budget=10)) == 0.0
    assert aocc(EvalTrace((lb,) * 10, budget=10)) == 1.0


def test_aocc_midpoint_value() -> None:
    # precision 1e-3 sits exactly halfway between 1e-8 and 1e2 in log10
    trace = EvalTrace((1e-3,) * 4, budget=4)
    assert aocc(trace) == pytest.approx(0.5, abs=1e-12)


def test_aocc_clamps_outside_bounds() -> None:
    assert aocc(EvalTrace((1e9,) * 3, budget=3)) == 0.0
    assert aocc(EvalTrace((1e-12,) * 3, budget=3)) == 1.0


def test_aocc_padding_carries_final_value() -> None:
    short = EvalTrace((1e-3, 1e-3), budget=8)
    full = EvalTrace((1e-3,) * 8, budget=8)
    assert aocc(short) == aocc(full)


def test_aocc_zero_or_negative_precision_gets_full_credit() -> None:
    assert aocc(EvalTrace((0.0,), budget=2)) == 1.0
    assert aocc(EvalTrace((1.0, -0.5), budget=2)) == pytest.approx(
        (1.0 - (0.0 - (-8.0)) / 10.0 + 1.0) / 2.0, abs=1e-12
    )


def test_aocc_rewards_earlier_progress() -> None:
    early = EvalTrace((1e-3, 1e-6, 1e-6, 1e-6), budget=4)
    late = EvalTrace((1e-3, 1e-3, 1e-3, 1e-6), budget=4)
    assert aocc(early) > aocc(late)


def test_aocc_empty_trace_is_an_error() -> None:
    with pytest.raises(ValueError):
        aocc(EvalTrace((), budget=5))


def test_mean_aocc_averages_and_checks_bounds() -> None:
    a = EvalTrace((1e-3,) * 2, budget=2)
    b = EvalTrace((1e2,) * 2, budget=2)
    assert mean_aocc([a, b]) == pytest.approx(0.25, abs=1e-12)
    with pytest.raises(ValueError):
        mean_aocc([])
    with pytest.raises(ValueError):
        mean_aocc([a, EvalTrace((1e-3,), budget=2, bounds=(1e-6, 1e2))])
