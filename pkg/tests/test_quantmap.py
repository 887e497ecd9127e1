import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cimforge.quantmap import (
    ResistanceMatrix,
    binary_quantize_map,
    exhaustive_bitline_map,
    greedy_bitline_map,
    greedy_order,
    pseudo_binary_map,
    pseudo_binary_quantize,
    pseudo_binary_value,
    quant_error_moments,
    quant_error_ratio,
    quant_noise_power,
    scale_to_codes,
    step_size,
    uniform_quantize,
)

R_EX = [1.05, 1.1, 1.125, 0.93]
L, H = True, False


def random_instance(rng, rows, cols, sigma=0.2):
    r = np.clip(rng.normal(1.0, sigma, (rows, cols)), 0.05, None)
    w = rng.uniform(0, 2**cols - 1, rows)
    return w, r


def test_uniform_quantize_examples():
    assert uniform_quantize(0.0, 1.0) == 0
    assert uniform_quantize(13.4, 1.0) == 13
    assert uniform_quantize(2.5, 1.0) == 3
    assert np.all(uniform_quantize(np.array([0.24, 0.26]), 0.5) == [0.0, 0.5])
    with pytest.raises(ValueError):
        uniform_quantize(1.0, 0.0)


def test_step_size_examples():
    assert step_size(1, -1, 8) == 0.0078125
    assert step_size(255, 0, 8) == 0.99609375
    assert step_size(3.7, -1.2, 6) * 2**6 == pytest.approx(4.9, abs=1e-15)
    with pytest.raises(ValueError):
        step_size(1, 1, 8)


def test_noise_power():
    assert quant_noise_power(1.0) == pytest.approx(1 / 12)
    assert quant_noise_power(2.0) == pytest.approx(1 / 3)
    rng = np.random.default_rng(0)
    x = rng.uniform(-100, 100, 10**6)
    mse = np.mean((x - uniform_quantize(x, 1.0)) ** 2)
    assert mse == pytest.approx(1 / 12, rel=0.01)


def test_error_moments_verbatim():
    assert quant_error_moments(0.0) == (1.0, 2.0)
    mean, var = quant_error_moments(1.0)
    assert mean == pytest.approx(13 / 12) and var == pytest.approx(6.0)
    d = step_size(1.0, -1.0, 8)
    assert quant_error_moments(d)[0] == pytest.approx(1 + d * d / 12)


def test_pseudo_binary_value_examples():
    assert pseudo_binary_value([H, H, H, H], R_EX) == 0
    assert pseudo_binary_value([L, L, H, L], [1, 1, 1, 1]) == 13
    assert pseudo_binary_value([L, L, H, L], R_EX) == pytest.approx(13.73, abs=1e-12)
    with pytest.raises(ValueError):
        pseudo_binary_value([L, L], R_EX)


def test_pseudo_binary_quantize_worked_example():
    q = pseudo_binary_quantize(13.4, R_EX)
    assert q.bits.tolist() == [L, L, H, L]
    assert q.residual == pytest.approx(-0.33, abs=1e-12)
    q = pseudo_binary_quantize(13.4, [1.125, 1.1, 1.05, 0.93])
    assert q.bits.tolist() == [L, L, H, H]
    assert q.residual == pytest.approx(0.0, abs=1e-12)
    q = pseudo_binary_quantize(0.0, R_EX)
    assert not q.bits.any() and q.residual == 0
    q = pseudo_binary_quantize(13.4, [1, 1, 1, 1])
    assert q.value_hat == 13 and q.residual == pytest.approx(0.4, abs=1e-12)
    with pytest.raises(ValueError):
        pseudo_binary_quantize(-1.0, R_EX)


def test_resistance_matrix():
    with pytest.raises(ValueError):
        ResistanceMatrix([[1.0, 0.0]])
    with pytest.raises(ValueError):
        ResistanceMatrix([[1.0]], "guessed")
    m = ResistanceMatrix.ideal(2, 3)
    assert m.shape == (2, 3) and m.source == "assumed-ideal"


def test_binary_map_examples():
    m = binary_quantize_map([13.4], [[1, 1, 1, 1]], 4)
    assert m.residuals[0] == pytest.approx(0.4, abs=1e-12)
    m = binary_quantize_map([13.4], [R_EX], 4)
    assert m.states[0].tolist() == [L, L, H, L]
    assert m.residuals[0] == pytest.approx(-0.33, abs=1e-12)
    m = binary_quantize_map([0, 7, 15], np.ones((3, 4)), 4)
    assert np.all(m.residuals == 0)
    with pytest.raises(ValueError):
        binary_quantize_map([16], [[1, 1, 1, 1]], 4)


def test_exhaustive_worked_example():
    m = exhaustive_bitline_map([13.4], [R_EX], 4)
    assert m.residuals[0] == pytest.approx(0.0, abs=1e-12)
    assert [R_EX[c] for c in m.perm[:3]] == [1.125, 1.1, 1.05]


def test_greedy_worked_example():
    for perm in itertools.permutations(R_EX):
        m = greedy_bitline_map([13.4], [list(perm)], 4)
        assert abs(m.residuals[0]) <= 0.33 + 1e-12


def test_greedy_symmetric_columns():
    rng = np.random.default_rng(4)
    w = rng.uniform(0, 15, 6)
    g = greedy_bitline_map(w, np.ones((6, 4)))
    b = binary_quantize_map(w, np.ones((6, 4)))
    assert np.all(np.abs(g.residuals - b.residuals) <= 0.5 + 1e-12)


def test_greedy_step_choice_is_minimum():
    rng = np.random.default_rng(9)
    w, r = random_instance(rng, 3, 4)
    perm, trace = greedy_order(w, r)
    res = w.copy()
    remaining = list(range(4))
    for pos, col in enumerate(perm):
        m = 2.0 ** (3 - pos)
        losses = []
        for c in remaining:
            lrs = ~((r[:, c] * m - res > 0.5) | (r[:, c] <= 0.5) | (r[:, c] * m > 2 * res))
            d = res - np.where(lrs, r[:, c] * m, 0)
            losses.append(abs(d.max()) * np.sum(d * d))
        assert trace[pos] == pytest.approx(min(losses))
        assert col == remaining[int(np.argmin(losses))]
        lrs = ~((r[:, col] * m - res > 0.5) | (r[:, col] <= 0.5) | (r[:, col] * m > 2 * res))
        res = res - np.where(lrs, r[:, col] * m, 0)
        remaining.remove(col)
    ex = exhaustive_bitline_map(w, r)
    assert ex.cost <= greedy_bitline_map(w, r).cost + 1e-12


def test_greedy_tie_breaks_low_index():
    perm, _ = greedy_order([3.0], [[1.0, 1.0]])
    assert perm.tolist() == [0, 1]


def test_exhaustive_against_direct_enumeration():
    rng = np.random.default_rng(12)
    w, r = random_instance(rng, 2, 3)
    ex = exhaustive_bitline_map(w, r)
    costs = {}
    for perm in itertools.permutations(range(3)):
        res = [pseudo_binary_quantize(wi, ri[list(perm)]).residual for wi, ri in zip(w, r)]
        costs[perm] = sum(x * x for x in res)
    best = min(costs.values())
    assert ex.cost == pytest.approx(best, abs=1e-12)
    first = next(p for p, c in sorted(costs.items()) if c == best)
    assert tuple(ex.perm) == first


def test_exhaustive_single_column_and_guard():
    m = exhaustive_bitline_map([0.9], [[1.1]])
    assert m.perm.tolist() == [0]
    with pytest.raises(ValueError):
        exhaustive_bitline_map([1.0], np.ones((1, 9)))
    with pytest.raises(ValueError):
        greedy_bitline_map([1.0], np.ones((1, 0)))


def test_shape_errors():
    with pytest.raises(ValueError, match="shape mismatch"):
        greedy_bitline_map([1.0, 2.0], np.ones((3, 4)))
    with pytest.raises(ValueError):
        pseudo_binary_map([1.0], np.ones((1, 4)), n=5)
    with pytest.raises(ValueError):
        pseudo_binary_map([-1.0], np.ones((1, 4)))


def test_quant_error_ratio_examples():
    m = binary_quantize_map([13.4], [[1, 1, 1, 1]])
    assert quant_error_ratio([13.4], m) == pytest.approx(0.4 / 13.4, abs=1e-12)
    m = binary_quantize_map([3, 5], np.ones((2, 4)))
    assert quant_error_ratio([3, 5], m) == 0
    w = np.array([3.3, 5.6, 9.1])
    m = pseudo_binary_map(w, np.full((3, 4), 1.07))
    ratio = quant_error_ratio(w, m)
    assert ratio == pytest.approx(np.mean(np.abs(m.residuals)) / np.mean(w))
    with pytest.raises(ValueError):
        quant_error_ratio([0.0], binary_quantize_map([0.0], [[1, 1]]))


def test_ratio_reevaluated_on_other_resistances():
    w = [13.4]
    m = binary_quantize_map(w, [[1, 1, 1, 1]])
    assert quant_error_ratio(w, m, [R_EX]) == pytest.approx(0.33 / 13.4, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rows=st.integers(1, 4), cols=st.integers(1, 5))
def test_faithfulness_all_methods(seed, rows, cols):
    rng = np.random.default_rng(seed)
    w, r = random_instance(rng, rows, cols)
    for method in (binary_quantize_map, pseudo_binary_map, greedy_bitline_map, exhaustive_bitline_map):
        m = method(w, r)
        assert np.allclose(m.values(r) + m.residuals, w, atol=1e-12, rtol=0)
        assert sorted(m.perm.tolist()) == list(range(cols))
        assert m.states.shape == (rows, cols)


def test_near_optimal_rounding_ideal_cells():
    for n in (4, 6, 8):
        w = np.linspace(0, 2**n - 1, 4001)
        m = pseudo_binary_map(w, np.ones((w.size, n)))
        assert np.max(np.abs(m.residuals)) <= 0.5 + 1e-12


def test_greedy_dominance():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        rows, cols = int(rng.integers(1, 5)), int(rng.integers(1, 7))
        w, r = random_instance(rng, rows, cols)
        g = greedy_bitline_map(w, r)
        assert exhaustive_bitline_map(w, r).cost <= g.cost + 1e-12
        assert g.cost <= pseudo_binary_map(w, r).cost + 1e-12


def test_scale_to_codes():
    codes, delta = scale_to_codes([-2.0, 1.0, 0.5], 4)
    assert codes.max() == 15 and delta == pytest.approx(2 / 15)
    assert codes[1] == pytest.approx(7.5)
    with pytest.raises(ValueError):
        scale_to_codes([0.0, 0.0], 4)
