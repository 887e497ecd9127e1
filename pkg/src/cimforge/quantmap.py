"""Pseudo-binary weight quantization onto measured cells and bit-line mapping.

Conventions: resistance rows and cell-state rows are ordered MSB -> LSB, so
logical position ``p`` of an ``n``-cell weight has importance ``2**(n-1-p)``.
Physical column ``perm[p]`` serves logical position ``p``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

MAX_EXHAUSTIVE_COLS = 8


@dataclass
class ResistanceMatrix:
    values: np.ndarray
    source: str = "sampled"
    flags: np.ndarray | None = None

    SOURCES = ("assumed-ideal", "sampled", "adc-measured")

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float, ndmin=2)
        if self.source not in self.SOURCES:
            raise ValueError(f"unknown resistance source {self.source!r}")
        if np.any(~(self.values > 0)):
            raise ValueError("normalized resistances must be > 0")
        if self.flags is None:
            self.flags = np.zeros(self.values.shape, dtype=bool)

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def ideal(cls, rows: int, cols: int) -> "ResistanceMatrix":
        return cls(np.ones((rows, cols)), "assumed-ideal")


@dataclass
class QuantResult:
    bits: np.ndarray
    value_hat: float
    residual: float


@dataclass
class WeightMapping:
    perm: np.ndarray
    states: np.ndarray
    residuals: np.ndarray
    loss_trace: np.ndarray
    n: int
    method: str
    # greedy only: the greedy order lost to the identity order and was replaced
    fallback: bool = False

    def __post_init__(self):
        self.perm = np.asarray(self.perm, dtype=int)
        if sorted(self.perm.tolist()) != list(range(self.n)):
            raise ValueError("perm must be a permutation of the bit lines")

    @property
    def logical_states(self) -> np.ndarray:
        """Cell states per row in logical order, MSB first."""
        return self.states[:, self.perm]

    def values(self, r) -> np.ndarray:
        r = _as_array(r)
        return pseudo_binary_value(self.logical_states, r[:, self.perm])

    @property
    def cost(self) -> float:
        return float(np.sum(self.residuals**2))


def _as_array(r) -> np.ndarray:
    if isinstance(r, ResistanceMatrix):
        return r.values
    return np.array(r, dtype=float, ndmin=2)


def uniform_quantize(x, delta: float):
    if not delta > 0:
        raise ValueError("delta must be > 0")
    q = delta * np.floor(np.asarray(x, dtype=float) / delta + 0.5)
    return q if q.ndim else float(q)


def step_size(w_max: float, w_min: float, n: int) -> float:
    if not w_max > w_min:
        raise ValueError("w_max must exceed w_min")
    return (w_max - w_min) / 2**n


def quant_noise_power(delta: float) -> float:
    if not delta > 0:
        raise ValueError("delta must be > 0")
    return delta**2 / 12.0


def quant_error_moments(delta: float) -> tuple[float, float]:
    """Analytic mean and variance of the quantization error under Gaussian
    resistance spread, in the normalized units of the closed form."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    return 1.0 + delta**2 / 12.0, 2.0 + 4.0 * delta**2


def scale_to_codes(weights, n: int) -> tuple[np.ndarray, float]:
    """Magnitudes scaled so the largest lands on the top code ``2**n - 1``.

    Returns the scaled magnitudes and the step (weight units per code).
    """
    mag = np.abs(np.asarray(weights, dtype=float))
    top = float(mag.max()) if mag.size else 0.0
    if top == 0:
        raise ValueError("cannot scale an all-zero weight tensor")
    delta = step_size(top, 0.0, n) * 2**n / (2**n - 1)
    return np.minimum(mag / delta, 2**n - 1), delta


def pseudo_binary_value(states, r):
    """Sum over LRS cells of r * 2**bit_index; broadcasts over leading axes."""
    states = np.asarray(states, dtype=bool)
    r = np.asarray(r, dtype=float)
    if states.shape[-1] != r.shape[-1]:
        raise ValueError(f"length mismatch: {states.shape[-1]} states vs {r.shape[-1]} resistances")
    n = states.shape[-1]
    importance = 2.0 ** np.arange(n - 1, -1, -1)
    v = np.sum(np.where(states, r * importance, 0.0), axis=-1)
    return v if np.ndim(v) else float(v)


def _lrs_decision(r_i, m_i, w_res):
    """True where the cell goes LRS: not overshooting by more than half a unit,
    not a too-resistive cell, and not overshooting twice the remainder."""
    return ~((r_i * m_i - w_res > 0.5) | (r_i <= 0.5) | (r_i * m_i > 2.0 * w_res))


def _quantize_rows(w, r):
    """Vectorized MSB->LSB pseudo-binary quantization. ``r`` has the cell axis
    last; returns (states, residual)."""
    res = np.array(w, dtype=float)
    r = np.asarray(r, dtype=float)
    n = r.shape[-1]
    states = np.zeros(np.broadcast_shapes(res.shape + (n,), r.shape), dtype=bool)
    res = np.broadcast_to(res, states.shape[:-1]).copy()
    for pos in range(n):
        m = 2.0 ** (n - 1 - pos)
        rp = r[..., pos]
        lrs = _lrs_decision(rp, m, res)
        res = res - np.where(lrs, rp * m, 0.0)
        states[..., pos] = lrs
    return states, res


def pseudo_binary_quantize(w: float, r) -> QuantResult:
    if w < 0:
        raise ValueError("weight must be >= 0")
    r = np.asarray(r, dtype=float).ravel()
    states, res = _quantize_rows(w, r)
    return QuantResult(states, pseudo_binary_value(states, r), float(res))


def _check_inputs(weights, r, n):
    w = np.asarray(weights, dtype=float).ravel()
    rv = _as_array(r)
    if rv.shape[0] != w.size:
        raise ValueError(f"shape mismatch: weights {w.shape} vs resistances {rv.shape}")
    if n is not None and n != rv.shape[1]:
        raise ValueError(f"n={n} does not match {rv.shape[1]} resistance columns")
    if rv.shape[1] == 0:
        raise ValueError("at least one bit line is required")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative magnitudes")
    return w, rv


def _mapping(w, rv, perm, states_logical, method, loss_trace=None, fallback=False):
    n = rv.shape[1]
    states = np.zeros_like(states_logical)
    states[:, perm] = states_logical
    residuals = w - pseudo_binary_value(states_logical, rv[:, perm])
    trace = np.full(n, np.nan) if loss_trace is None else np.asarray(loss_trace, dtype=float)
    return WeightMapping(np.asarray(perm), states, residuals, trace, n, method, fallback)


def binary_quantize_map(weights, r, n: int | None = None) -> WeightMapping:
    """Round to n-bit integers and program LRS on the 1 bits, identity order."""
    w, rv = _check_inputs(weights, r, n)
    n = rv.shape[1]
    if np.any(w > 2**n - 1):
        raise ValueError(f"weights must lie in [0, {2**n - 1}]")
    q = np.asarray(uniform_quantize(w, 1.0), dtype=np.int64)
    states = ((q[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(bool)
    return _mapping(w, rv, np.arange(n), states, "binary")


def pseudo_binary_map(weights, r, n: int | None = None) -> WeightMapping:
    """Pseudo-binary quantization in the physical (identity) column order."""
    w, rv = _check_inputs(weights, r, n)
    states, _ = _quantize_rows(w, rv)
    return _mapping(w, rv, np.arange(rv.shape[1]), states, "pseudo")


def _step_loss(d):
    worst = np.max(d, axis=-1)
    return np.abs(worst) * np.sum(d * d, axis=-1)


def greedy_order(weights, r) -> tuple[np.ndarray, np.ndarray]:
    """Greedy bit-line selection, MSB first. Returns (perm, per-position loss)."""
    w = np.asarray(weights, dtype=float)
    rv = _as_array(r)
    n = rv.shape[1]
    res = w.copy()
    remaining = list(range(n))
    perm, trace = [], []
    for pos in range(n):
        m = 2.0 ** (n - 1 - pos)
        cand = rv[:, remaining].T  # (candidates, rows)
        lrs = _lrs_decision(cand, m, res)
        d = res - np.where(lrs, cand * m, 0.0)
        losses = _step_loss(d)
        best = int(np.argmin(losses))
        perm.append(remaining.pop(best))
        trace.append(float(losses[best]))
        res = d[best]
    return np.array(perm), np.array(trace)


def greedy_bitline_map(weights, r, n: int | None = None) -> WeightMapping:
    """One shared bit-line order for all rows, chosen position by position.

    If the greedy order ends with a larger squared residual than the physical
    order, the physical order is kept; ``fallback`` records that.
    """
    w, rv = _check_inputs(weights, r, n)
    perm, trace = greedy_order(w, rv)
    states, _ = _quantize_rows(w, rv[:, perm])
    mapping = _mapping(w, rv, perm, states, "greedy", trace)
    ident = pseudo_binary_map(w, rv)
    if ident.cost < mapping.cost:
        return _mapping(w, rv, ident.perm, ident.logical_states, "greedy", trace, fallback=True)
    return mapping


def exhaustive_bitline_map(weights, r, n: int | None = None, chunk: int = 5040) -> WeightMapping:
    """Best shared order over all n! permutations by total squared residual;
    ties go to the lexicographically smallest permutation."""
    w, rv = _check_inputs(weights, r, n)
    n = rv.shape[1]
    if n > MAX_EXHAUSTIVE_COLS:
        raise ValueError(f"exhaustive search refused for {n} > {MAX_EXHAUSTIVE_COLS} bit lines")
    best_cost, best_perm = math.inf, None
    perms = itertools.permutations(range(n))
    while True:
        block = np.array(list(itertools.islice(perms, chunk)), dtype=int)
        if block.size == 0:
            break
        # (perms, rows, n)
        _, res = _quantize_rows(w[None, :], rv[:, block].transpose(1, 0, 2))
        costs = np.sum(res**2, axis=1)
        i = int(np.argmin(costs))
        if costs[i] < best_cost:
            best_cost, best_perm = float(costs[i]), block[i]
    states, _ = _quantize_rows(w, rv[:, best_perm])
    return _mapping(w, rv, best_perm, states, "exhaustive")


METHODS = {
    "binary": binary_quantize_map,
    "pseudo": pseudo_binary_map,
    "greedy": greedy_bitline_map,
    "exhaustive": exhaustive_bitline_map,
}


def quant_error_ratio(weights, mapping: WeightMapping, r=None) -> float:
    """Sum of |residual| over sum of |weight|. With ``r`` the residuals are
    re-evaluated against those resistances (e.g. true instead of measured)."""
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != mapping.states.shape[0]:
        raise ValueError(f"shape mismatch: {w.size} weights vs {mapping.states.shape[0]} mapped rows")
    denom = float(np.sum(np.abs(w)))
    if denom == 0:
        raise ValueError("quantization error ratio undefined for an all-zero weight tensor")
    res = mapping.residuals if r is None else w - mapping.values(r)
    return float(np.sum(np.abs(res))) / denom
