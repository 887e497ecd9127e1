"""The experiment families: single MAC, linearity sweeps, Monte Carlo,
quantization method comparison, resistance read-back and dynamic performance."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .device import DeviceParams, IntegratorTier, nominal_cell_current, normalized_contribution
from .integrator import (
    Crossbar,
    IntegratorParams,
    MacResult,
    MeasurementRangeError,
    ideal_code,
    ideal_mac,
    integrate_cells,
    read_resistance,
    resistance_from_code,
    read_codes,
    run_mac,
)
from .metrics import LinearityReport, SpectrumMetrics, inl_dnl_from_levels, spectrum_metrics
from .quantmap import (
    METHODS,
    quant_error_ratio,
    scale_to_codes,
)
from .variation import (
    McReport,
    VariationSpec,
    measure_array,
    measurement_params,
    monte_carlo_mac,
    sample_lrs_resistances,
)

GOLDEN_INPUT = 186
GOLDEN_WEIGHT = 236
# integrating-node swing used as full scale by the linearity sweeps
SWEEP_SWING = 0.3


@dataclass
class MacRun:
    inputs: np.ndarray
    weights: np.ndarray
    result: MacResult
    ideal: int
    expected_code: int


def mac_experiment(inputs=(GOLDEN_INPUT,), weights=(GOLDEN_WEIGHT,), tier=IntegratorTier.REGULATED,
                   p: DeviceParams | None = None, ip: IntegratorParams | None = None, r_norm=None) -> MacRun:
    p = p or DeviceParams()
    ip = ip or IntegratorParams.calibrated(p)
    x = np.asarray(inputs, dtype=np.int64)
    w = np.asarray(weights, dtype=np.int64)
    xb = Crossbar.from_weights(w, ip.n_bits, r_norm)
    res = run_mac(x, xb, tier, p, ip)
    ideal = ideal_mac(x, w.reshape(x.shape), ip.n_bits)
    return MacRun(x, w, res, ideal, ideal_code(ideal, p, ip))


def _full_scale_time(r_ohm, tier, p, ip, swing, v_g0=None) -> float:
    """Integration time at which the given load pulls the capacitor down by ``swing``."""
    target = ip.v_init - swing
    guess = swing * ip.c_f / float(np.sum(1.0 / np.asarray(r_ohm))) / 0.1

    def f(t):
        return float(integrate_cells(r_ohm, tier, p, ip, t, v_g0=v_g0)) - target

    hi = guess
    while f(hi) > 0:
        hi *= 2.0
    return brentq(f, 0.0, hi, xtol=1e-18, rtol=1e-14)


def linearity_sweep(tier: IntegratorTier, p: DeviceParams | None = None, ip: IntegratorParams | None = None,
                    codes: int = 256, swing: float = SWEEP_SWING) -> tuple[np.ndarray, LinearityReport]:
    """One nominal cell integrates for k time steps, k = 0..codes-1; the step is
    chosen so the top code swings the capacitor by ``swing``. Returns the
    capacitor drop per code and its DAC-style linearity."""
    p = p or DeviceParams()
    ip = ip or IntegratorParams.calibrated(p)
    r = np.array([[p.r_lrs_nominal]])
    t_full = _full_scale_time(r[:, 0], tier, p, ip, swing)
    t = np.arange(codes) * (t_full / (codes - 1))
    drop = ip.v_init - integrate_cells(np.broadcast_to(r, (1, codes)), tier, p, ip, t)
    return drop, inl_dnl_from_levels(drop)


def input_lines_sweep(tier: IntegratorTier, p: DeviceParams | None = None, ip: IntegratorParams | None = None,
                      max_lines: int = 256, swing: float = SWEEP_SWING,
                      v_g0: float | None = None) -> tuple[np.ndarray, LinearityReport]:
    """k identical nominal cells active, k = 1..max_lines, for one fixed
    integration time sized so the regulated array swings ``swing`` at full load.
    The unregulated cascode keeps the gate tuned for a single cell."""
    p = p or DeviceParams()
    ip = ip or IntegratorParams.calibrated(p)
    t = swing * ip.c_f / (max_lines * nominal_cell_current(p))
    k = np.arange(1, max_lines + 1)
    r = np.where(np.arange(max_lines)[:, None] < k[None, :], p.r_lrs_nominal, np.inf)
    drop = ip.v_init - integrate_cells(r, tier, p, ip, t, v_g0=v_g0)
    return drop, inl_dnl_from_levels(drop)


@dataclass
class McComparison:
    reports: dict[str, McReport]
    config: dict = field(default_factory=dict)


def monte_carlo_experiment(input_value=180, weight_value=75, n_lines=128, trials=1400,
                           spec: VariationSpec | None = None, methods=("binary", "greedy"),
                           tier=IntegratorTier.REGULATED, p: DeviceParams | None = None,
                           workers: int | None = None) -> McComparison:
    spec = spec or VariationSpec()
    reports = {m: monte_carlo_mac(input_value, weight_value, n_lines, trials, spec, m, tier, p,
                                  workers=workers) for m in methods}
    return McComparison(reports, dict(input=input_value, weight=weight_value, lines=n_lines, trials=trials))


def quantize_compare(sigmas=(0.05, 0.1, 0.2, 0.3), bits=(4, 6, 8), vectors=20, length=256, seed=0,
                     methods=("greedy", "pseudo", "binary"), clip_min=0.05):
    """Mean quantization error ratio per (sigma, n, method) over seeded Gaussian
    weight vectors scaled to n-bit codes; resistances are the sampled (true) values.

    Returns rows (sigma, n, method, mean_ratio).
    """
    rows = []
    for si, sigma in enumerate(sigmas):
        for n in bits:
            ratios = {m: [] for m in methods}
            for v in range(vectors):
                rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(si, n, v)))
                w, _ = scale_to_codes(rng.normal(0.0, 1.0, length), n)
                r = sample_lrs_resistances(length, n, VariationSpec(sigma, seed, clip_min), rng).values
                for m in methods:
                    ratios[m].append(quant_error_ratio(w, METHODS[m](w, r, n)))
            rows.extend((sigma, n, m, float(np.mean(ratios[m]))) for m in methods)
    return rows


@dataclass
class ReadBack:
    r_true: np.ndarray
    r_measured: np.ndarray
    bound: np.ndarray
    hrs_message: str

    @property
    def within_bound(self) -> np.ndarray:
        return np.abs(self.r_measured - self.r_true) <= self.bound * (1 + 1e-9)


def code_bound(code, p: DeviceParams, ip: IntegratorParams) -> float:
    """Largest resistance error from reconstructing ``code`` at its centre: the
    distance to the farther edge of the resistance interval the code covers."""
    centre = resistance_from_code(code, p, ip)
    lo = resistance_from_code(code - 0.5, p, ip)
    hi = resistance_from_code(code + 0.5, p, ip)
    return max(abs(lo - centre), abs(hi - centre))


def read_resistance_experiment(cells=100, sigma=0.2, seed=0, tier=IntegratorTier.REGULATED,
                               p: DeviceParams | None = None, ip: IntegratorParams | None = None) -> ReadBack:
    """Program random LRS values, read each back, and read one HRS cell."""
    p = p or DeviceParams()
    ip = ip or measurement_params(p)
    spec = VariationSpec(sigma, seed)
    r_true = sample_lrs_resistances(1, cells, spec).values
    xb = Crossbar(r_true, np.ones_like(r_true, dtype=bool), ip.n_bits) if cells % ip.n_bits == 0 \
        else Crossbar(r_true, np.ones_like(r_true, dtype=bool), 1)
    measured = np.array([read_resistance(xb, 0, c, tier, p, ip) for c in range(cells)]) / p.r_lrs_nominal
    codes = read_codes(xb.resistance(p)[0], tier, p, ip)
    bound = np.array([code_bound(c, p, ip) for c in codes]) / p.r_lrs_nominal
    hrs = Crossbar([[1.0]], [[False]], 1)
    try:
        read_resistance(hrs, 0, 0, tier, p, ip)
        msg = "measurable"
    except MeasurementRangeError as exc:
        msg = str(exc)
    return ReadBack(r_true[0], measured, bound, msg)


@dataclass
class DynamicRun:
    label: str
    codes: np.ndarray
    metrics: SpectrumMetrics


def sine_program(samples=1024, cycles=31, lines=255) -> np.ndarray:
    """Number of active rows per sample for a coherent full-scale sine."""
    t = np.arange(samples)
    return np.round((lines / 2) * (1.0 + np.sin(2 * np.pi * cycles * t / samples))).astype(int)


def _transfer(r_norm, mapping_states, perm, n, tier, p, ip, lines, input_value):
    """Output code for k = 0..lines active rows (the first k rows)."""
    xb = Crossbar(r_norm, mapping_states, n, perm)
    out = np.empty(lines + 1, dtype=np.int64)
    for k in range(lines + 1):
        x = np.where(np.arange(lines) < k, input_value, 0)
        out[k] = run_mac(x, xb, tier, p, ip).digital[0]
    return out


def dynamic_performance(sigma=0.2, seed=0, samples=1024, cycles=31, lines=255, weight=255, input_value=255,
                        tier=IntegratorTier.REGULATED, p: DeviceParams | None = None) -> list[DynamicRun]:
    """Thermometer-coded sine: every row stores ``weight`` and the sine sets how
    many rows see ``input_value``. Runs ideal cells, binary mapping under
    variation, and greedy mapping from ADC-measured resistances."""
    p = p or DeviceParams()
    ip = IntegratorParams.for_lines(lines, p)
    n = ip.n_bits
    k = sine_program(samples, cycles, lines)
    w = np.full(lines, float(weight))
    spec = VariationSpec(sigma, seed)
    r_var = sample_lrs_resistances(lines, n, spec).values
    ones = np.ones((lines, n))

    runs = []
    binary = METHODS["binary"](w, ones, n)
    probe = Crossbar(r_var, np.ones_like(r_var, dtype=bool), n)
    measured = measure_array(probe, tier, p, measurement_params(p, ip))
    greedy = METHODS["greedy"](w, normalized_contribution(measured.values, p), n)
    for label, r, m in (("ideal", ones, binary), ("binary", r_var, binary), ("greedy", r_var, greedy)):
        table = _transfer(r, m.states, m.perm, n, tier, p, ip, lines, input_value)
        codes = table[k]
        runs.append(DynamicRun(label, codes, spectrum_metrics(codes, cycles)))
    return runs
