"""Converter linearity (INL/DNL), spectral figures of merit and LSB error statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class LinearityReport:
    codes: np.ndarray
    inl: np.ndarray
    dnl: np.ndarray
    missing: np.ndarray

    @property
    def inl_range(self) -> tuple[float, float]:
        return float(self.inl.min()), float(self.inl.max())

    @property
    def dnl_range(self) -> tuple[float, float]:
        return float(self.dnl.min()), float(self.dnl.max())

    @property
    def max_abs_inl(self) -> float:
        return float(np.max(np.abs(self.inl)))

    @property
    def max_abs_dnl(self) -> float:
        return float(np.max(np.abs(self.dnl)))

    def rows(self):
        for c, i, d in zip(self.codes, self.inl, self.dnl):
            yield int(c), float(i), float(d)


@dataclass(frozen=True)
class SpectrumMetrics:
    sfdr_db: float
    sndr_db: float
    enob_bits: float
    fundamental_bin: int


@dataclass(frozen=True)
class ErrorStats:
    mean: float
    std: float
    min: float
    max: float
    count: int

    def line(self, label: str = "") -> str:
        head = f"{label}: " if label else ""
        return (f"{head}n={self.count} mean={self.mean:.6g} std={self.std:.6g} "
                f"min={self.min:.6g} max={self.max:.6g}")


def _from_counts(codes, counts, ideal_width=None) -> LinearityReport:
    """Histogram estimator. End codes absorb over-range and get DNL = 0; the
    ideal width defaults to the mean inner width (endpoint fit)."""
    counts = np.asarray(counts, dtype=float)
    if counts.size < 3:
        raise ValueError("need at least three codes to estimate linearity")
    inner = counts[1:-1]
    width = float(inner.mean()) if ideal_width is None else float(ideal_width)
    if not width > 0:
        raise ValueError("ideal code width must be > 0")
    dnl = np.zeros_like(counts)
    dnl[1:-1] = inner / width - 1.0
    inl = np.cumsum(dnl)
    missing = np.asarray(codes)[1:-1][inner == 0]
    return LinearityReport(np.asarray(codes), inl, dnl, missing)


def inl_dnl_from_sweep(transfer, ideal_width: float | None = None) -> LinearityReport:
    """Linearity of an ADC-style transfer: one output code per stimulus step of a
    monotone full-scale ramp. Code widths are counted in stimulus steps."""
    t = np.asarray(transfer)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("transfer must be a non-empty 1-D code sequence")
    t = t.astype(np.int64)
    lo, hi = int(t.min()), int(t.max())
    counts = np.bincount(t - lo, minlength=hi - lo + 1)
    return _from_counts(np.arange(lo, hi + 1), counts, ideal_width)


def inl_dnl_from_levels(levels, ideal_width: float | None = None) -> LinearityReport:
    """Linearity of a DAC-style transfer: the analog level produced for each
    input code 0..N-1. DNL_k is the step from code k-1 to k; code 0 has DNL 0."""
    v = np.asarray(levels, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("need at least two levels")
    steps = np.diff(v)
    width = (v[-1] - v[0]) / (v.size - 1) if ideal_width is None else float(ideal_width)
    if width == 0:
        raise ValueError("degenerate transfer: first and last levels coincide")
    dnl = np.concatenate([[0.0], steps / width - 1.0])
    inl = np.cumsum(dnl)
    missing = np.flatnonzero(np.concatenate([[False], steps / width <= 0]))
    return LinearityReport(np.arange(v.size), inl, dnl, missing)


def code_density_linearity(samples, adc_bits: int = 8) -> LinearityReport:
    """Code-density (histogram) test over the full code range 0..2**adc_bits-1."""
    s = np.asarray(samples).ravel()
    need = 100 * 2**adc_bits
    if s.size < need:
        raise ValueError(f"code density needs at least {need} samples for {adc_bits} bits, got {s.size}")
    s = s.astype(np.int64)
    if s.min() < 0 or s.max() >= 2**adc_bits:
        raise ValueError(f"codes outside [0, {2**adc_bits - 1}]")
    counts = np.bincount(s, minlength=2**adc_bits)
    return _from_counts(np.arange(2**adc_bits), counts)


def _one_sided_power(x):
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 8 or n & (n - 1):
        raise ValueError(f"record length must be a power of two >= 8, got {n}")
    spec = np.fft.rfft(x - x.mean())
    power = np.abs(spec) ** 2
    power[1:-1] *= 2.0
    power[0] = 0.0
    return spec, power


def spectrum_metrics(codes, fundamental_bin: int | None = None) -> SpectrumMetrics:
    """SFDR, SNDR and ENOB of a coherently sampled sine record (rectangular window)."""
    _, power = _one_sided_power(codes)
    total = power.sum()
    if total <= 0:
        raise ValueError("degenerate record: no signal power outside DC")
    f = int(np.argmax(power)) if fundamental_bin is None else int(fundamental_bin)
    if not 0 < f < power.size:
        raise ValueError("fundamental bin out of range")
    p_f = power[f]
    rest = np.delete(power[1:], f - 1)
    noise = rest.sum()
    spur = rest.max() if rest.size else 0.0
    sndr = math.inf if noise == 0 else 10.0 * math.log10(p_f / noise)
    sfdr = math.inf if spur == 0 else 10.0 * math.log10(p_f / spur)
    return SpectrumMetrics(sfdr, sndr, enob_from_sndr(sndr), f)


def enob_from_sndr(sndr_db: float) -> float:
    return (sndr_db - 1.76) / 6.02


def spectrum_db(codes) -> np.ndarray:
    """Magnitude spectrum in dB relative to the largest bin (DC removed)."""
    spec, _ = _one_sided_power(codes)
    mag = np.abs(spec)
    mag[0] = 0.0
    peak = mag.max()
    if peak == 0:
        raise ValueError("degenerate record: no signal power outside DC")
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(mag / peak)


def error_stats(errors) -> ErrorStats:
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("error_stats needs at least one value")
    std = float(np.std(e, ddof=1)) if e.size > 1 else 0.0
    return ErrorStats(float(np.mean(e)), std, float(e.min()), float(e.max()), int(e.size))
