import numpy as np
import pytest

from cimforge.device import DeviceParams, IntegratorTier as T
from cimforge.experiments import (
    dynamic_performance,
    input_lines_sweep,
    linearity_sweep,
    mac_experiment,
    quantize_compare,
    read_resistance_experiment,
    sine_program,
)


def test_mac_experiment_golden():
    run = mac_experiment()
    assert run.result.digital[0] == 171 == run.expected_code
    assert run.ideal == 43896


def test_linearity_sweep_endpoints():
    drop, rep = linearity_sweep(T.REGULATED)
    assert drop[0] == 0 and drop[-1] == pytest.approx(0.3, abs=1e-9)
    assert rep.max_abs_inl < 1e-9


def test_linearity_tier_ordering():
    inl = {t: linearity_sweep(t)[1].max_abs_inl for t in T}
    assert inl[T.PASSIVE_NAIVE] > inl[T.ONE_R1T] > inl[T.ONE_R1T_T0] > inl[T.REGULATED]


def test_lines_sweep():
    drop, rep = input_lines_sweep(T.REGULATED)
    assert drop.size == 256 and drop[-1] == pytest.approx(0.3, rel=1e-9)
    assert np.allclose(drop, np.arange(1, 257) * drop[0], rtol=1e-9)
    _, t0 = input_lines_sweep(T.ONE_R1T_T0)
    assert t0.max_abs_inl > 3 * rep.max_abs_inl


def test_quantize_compare_rows():
    rows = quantize_compare(sigmas=(0.2,), bits=(4,), vectors=3, length=32, seed=5)
    assert [r[2] for r in rows] == ["greedy", "pseudo", "binary"]
    assert rows == quantize_compare(sigmas=(0.2,), bits=(4,), vectors=3, length=32, seed=5)


def test_read_resistance_experiment():
    rb = read_resistance_experiment(cells=16, seed=2)
    assert rb.within_bound.all()
    assert "unmeasurable" in rb.hrs_message


def test_sine_program():
    k = sine_program(1024, 31, 255)
    assert k.min() == 0 and k.max() == 255 and k.size == 1024


def test_dynamic_perf_small():
    runs = dynamic_performance(samples=256, cycles=7, lines=31, weight=255, input_value=255, seed=4)
    assert [r.label for r in runs] == ["ideal", "binary", "greedy"]
    assert all(r.metrics.fundamental_bin == 7 for r in runs)
