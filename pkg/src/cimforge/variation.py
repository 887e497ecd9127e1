"""Seeded LRS resistance variation, ADC read-back of whole arrays, and the
Monte-Carlo MAC error experiment."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .device import DeviceParams, IntegratorTier, normalized_contribution
from .integrator import (
    Crossbar,
    IntegratorParams,
    ideal_code,
    read_codes,
    resistance_from_code,
    run_mac,
)
from .metrics import ErrorStats, error_stats
from .quantmap import ResistanceMatrix, binary_quantize_map, greedy_bitline_map

# read window used for array measurement: a nominal cell lands near 1/3 of full scale
READ_CODE = 85.0
HIST_BIN_LSB = 0.05
THREADS_ENV = "CIM_FORGE_THREADS"


@dataclass(frozen=True)
class VariationSpec:
    sigma: float = 0.2
    seed: int = 0
    clip_min: float = 0.05

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not self.clip_min > 0:
            raise ValueError("clip_min must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def trial_rng(self, trial: int) -> np.random.Generator:
        """Counter-based stream for one trial; independent of execution order."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(trial,)))


@dataclass
class McReport:
    trials: int
    errors_lsb: np.ndarray
    stats: ErrorStats
    method: str
    reference_code: int

    def histogram(self, bin_width: float = HIST_BIN_LSB):
        """(bin left edges, counts) with bins aligned to multiples of ``bin_width``."""
        e = self.errors_lsb
        lo = np.floor(e.min() / bin_width) * bin_width
        hi = np.floor(e.max() / bin_width) * bin_width + bin_width
        nb = int(round((hi - lo) / bin_width))
        counts, edges = np.histogram(e, bins=nb, range=(lo, lo + nb * bin_width))
        return edges[:-1], counts


def sample_lrs_resistances(rows: int, cols: int, spec: VariationSpec, rng=None) -> ResistanceMatrix:
    """i.i.d. N(1, sigma^2) normalized resistances; values <= clip_min are redrawn."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    if spec.sigma == 0:
        return ResistanceMatrix(np.ones((rows, cols)), "sampled")
    r = rng.normal(1.0, spec.sigma, (rows, cols))
    bad = r <= spec.clip_min
    while bad.any():
        r[bad] = rng.normal(1.0, spec.sigma, int(bad.sum()))
        bad = r <= spec.clip_min
    return ResistanceMatrix(r, "sampled")


def measure_array(xb: Crossbar, tier: IntegratorTier, p: DeviceParams, ip: IntegratorParams,
                  t_read=None) -> ResistanceMatrix:
    """Read every cell through the integrator and ADC.

    Cells above the measurable range are reported as ``inf`` and cells below it
    at the full-scale estimate; both are flagged.
    """
    if not np.all(xb.lrs):
        raise ValueError("measure_array expects every cell programmed to LRS")
    t = ip.t_read if t_read is None else t_read
    codes = np.asarray(read_codes(xb.resistance(p), tier, p, ip, t))
    top = 2**ip.adc_bits - 1
    r = np.asarray(resistance_from_code(codes, p, ip, t), dtype=float) / p.r_lrs_nominal
    flags = (codes <= 0) | (codes >= top) | np.isnan(r)
    r = np.where(codes <= 0, np.inf, r)
    r = np.where(np.isnan(r), resistance_from_code(top, p, ip, t) / p.r_lrs_nominal, r)
    return ResistanceMatrix(r, "adc-measured", flags)


def measurement_params(p: DeviceParams, ip: IntegratorParams | None = None) -> IntegratorParams:
    """Single-line calibration with the read window stretched so a nominal
    cell reads near code ``READ_CODE``."""
    bits = ip.adc_bits if ip is not None else 8
    n = ip.n_bits if ip is not None else 8
    return IntegratorParams.calibrated(p, n_bits=n, adc_bits=bits).with_read_code(p, READ_CODE * 2**bits / 256)


def worker_count(requested: int | None = None) -> int:
    n = requested or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


def _trial(i, input_value, weight_value, n_lines, spec, method, tier, p, ip, ip_read):
    n = ip.n_bits
    r_true = sample_lrs_resistances(n_lines, n, spec, spec.trial_rng(i)).values
    weights = np.full(n_lines, float(weight_value))
    if method == "binary":
        mapping = binary_quantize_map(weights, np.ones((n_lines, n)), n)
    else:
        probe = Crossbar(r_true, np.ones_like(r_true, dtype=bool), n)
        measured = measure_array(probe, tier, p, ip_read)
        mapping = greedy_bitline_map(weights, normalized_contribution(measured.values, p), n)
    xb = Crossbar.from_mapping(mapping, r_true)
    res = run_mac(np.full(n_lines, input_value), xb, tier, p, ip)
    return int(res.digital[0])


def monte_carlo_mac(input_value: int, weight_value: int, n_lines: int, n_trials: int, spec: VariationSpec,
                    method: str = "binary", tier: IntegratorTier = IntegratorTier.REGULATED,
                    p: DeviceParams | None = None, ip: IntegratorParams | None = None,
                    workers: int | None = 1) -> McReport:
    """Per trial: fresh resistances, (for greedy) ADC measurement and mapping on
    the measured cell contributions, then a MAC with every row holding the same
    input and weight. Errors are output codes minus the error-free code."""
    if method not in ("binary", "greedy"):
        raise ValueError(f"unknown method {method!r}; expected binary or greedy")
    if n_lines < 1 or n_trials < 1:
        raise ValueError("n_lines and n_trials must be >= 1")
    p = p or DeviceParams()
    ip = ip or IntegratorParams.for_lines(n_lines, p)
    hi = 2**ip.n_bits
    if not (0 <= input_value < hi and 0 <= weight_value < hi):
        raise ValueError(f"input and weight must lie in [0, {hi - 1}]")
    ip_read = measurement_params(p, ip)
    ref = ideal_code(input_value * weight_value * n_lines, p, ip)

    args = (input_value, weight_value, n_lines, spec, method, tier, p, ip, ip_read)
    nw = worker_count(workers)
    if nw == 1:
        digital = [_trial(i, *args) for i in range(n_trials)]
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            digital = list(pool.map(lambda i: _trial(i, *args), range(n_trials)))
    errors = np.asarray(digital, dtype=float) - ref
    return McReport(n_trials, errors, error_stats(errors), method, ref)
