"""Bootstrap mean and CI behavior."""

from __future__ import annotations

import numpy as np
import pytest

from dxbench.errors import MetricUndefinedError, SchemaError
from dxbench.metrics import MetricValue, bootstrap_ci


def _mean(records):
    return sum(records) / len(records)


def test_constant_metric_gives_zero_width_ci():
    result = bootstrap_ci([1.0] * 25, lambda rs: 0.7, name="const", seed=3)
    assert result.mean == 0.7
    assert result.ci_low == 0.7
    assert result.ci_high == 0.7
    assert result.iterations == 200
    assert result.n == 25
    # per-item constants: zero width at the float-representable average
    from_items = bootstrap_ci([0.7] * 25, _mean, name="items", seed=3)
    assert from_items.ci_low == from_items.mean == from_items.ci_high


def test_same_records_same_seed_bitwise_identical():
    data = list(np.random.default_rng(1).random(40))
    a = bootstrap_ci(data, _mean, seed=11)
    b = bootstrap_ci(data, _mean, seed=11)
    assert a == b
    c = bootstrap_ci(data, _mean, seed=12)
    assert a != c


def test_parallel_and_serial_execution_identical():
    data = list(np.random.default_rng(2).random(60))
    serial = bootstrap_ci(data, _mean, seed=5, workers=None)
    parallel = bootstrap_ci(data, _mean, seed=5, workers=8)
    assert serial == parallel


def test_ci_contains_mean():
    data = list(np.random.default_rng(3).random(30))
    result = bootstrap_ci(data, _mean, seed=0)
    assert result.ci_low <= result.mean <= result.ci_high


def test_width_shrinks_with_sample_size():
    rng = np.random.default_rng(4)
    widths = {}
    for n in (100, 1000):
        total = 0.0
        for seed in range(10):
            data = list((rng.random(n) < 0.5).astype(float))
            value = bootstrap_ci(data, _mean, seed=seed, iterations=100)
            total += value.ci_high - value.ci_low
        widths[n] = total / 10
    assert widths[1000] < widths[100]


def test_undefined_metric_redrawn_then_error():
    calls = {"n": 0}

    def sometimes_undefined(records):
        calls["n"] += 1
        if sum(records) == 0:
            raise MetricUndefinedError("no positives drawn")
        return sum(records) / len(records)

    # heavy zero mass: redraws happen but a defined draw eventually appears
    data = [0.0] * 9 + [1.0]
    result = bootstrap_ci(data, sometimes_undefined, seed=1, iterations=50)
    assert result.iterations == 50
    assert calls["n"] >= 50

    def always_undefined(records):
        raise MetricUndefinedError("never defined")

    with pytest.raises(MetricUndefinedError, match="redraws"):
        bootstrap_ci(data, always_undefined, seed=1, iterations=5)


def test_too_few_records_rejected():
    with pytest.raises(SchemaError):
        bootstrap_ci([1.0], _mean)


def test_metric_value_invariant_enforced():
    with pytest.raises(SchemaError):
        MetricValue("m", mean=0.9, ci_low=0.1, ci_high=0.5, n=10, iterations=200)


def test_metric_value_round_trip():
    value = MetricValue("m", 0.5, 0.4, 0.6, 10, 200)
    assert MetricValue.from_dict(value.to_dict()) == value
