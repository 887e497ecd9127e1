"""n-bit integral multiplier: bit-serial integration, binary-ratioed charge
redistribution, sampling-capacitor accumulation, ADC, and resistance read-back."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .device import (
    DeviceParams,
    IntegratorTier,
    cascode_node,
    cell_current,
    nominal_cell_current,
    regulator_vd2,
    saturation_current,
)

# 1 V -> 745.2 mV for a single nominal cell in one 20 ns integration phase
UNIT_DROP = 0.2548
# 110 ns read window against a 20 ns MAC integration phase
READ_WINDOW_RATIO = 110.0 / 20.0
# tolerance on ADC decision levels, in LSB; absorbs float round-off at exact code edges
ADC_TIE_TOLERANCE = 1e-9


class MeasurementRangeError(ValueError):
    """Raised when a read-back produces no usable code."""


@dataclass(frozen=True)
class IntegratorParams:
    n_bits: int = 8
    c_f: float = 250e-15
    t_int: float | None = None
    v_init: float = 1.0
    adc_bits: int = 8
    adc_lsb_v: float | None = None
    t_read: float | None = None
    substeps: int = 64

    def __post_init__(self):
        if self.n_bits < 1:
            raise ValueError("n_bits must be >= 1")
        if self.adc_bits < 1:
            raise ValueError("adc_bits must be >= 1")
        if not self.v_init > 0:
            raise ValueError("v_init must be > 0")
        if self.adc_lsb_v is None:
            object.__setattr__(self, "adc_lsb_v", UNIT_DROP / 2**self.n_bits)
        if not (self.c_f > 0 and self.adc_lsb_v > 0):
            raise ValueError("c_f and adc_lsb_v must be > 0")
        if self.t_int is None:
            object.__setattr__(self, "t_int", UNIT_DROP * self.c_f / nominal_cell_current(DeviceParams()))
        if not self.t_int > 0:
            raise ValueError("t_int must be > 0")
        if self.t_read is None:
            object.__setattr__(self, "t_read", READ_WINDOW_RATIO * self.t_int)
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @classmethod
    def calibrated(
        cls,
        device: DeviceParams | None = None,
        n_bits: int = 8,
        adc_bits: int = 8,
        c_f: float = 250e-15,
        v_init: float = 1.0,
        unit_drop: float = UNIT_DROP,
        lines_per_lsb: float = 1.0,
        read_ratio: float = READ_WINDOW_RATIO,
        substeps: int = 64,
    ) -> "IntegratorParams":
        """Solve the integration time so one nominal cell drops ``unit_drop`` per
        cycle (regulated tier), and size the ADC LSB so the output code equals
        ``floor(sum(X*W) / (lines_per_lsb * 2**n))`` for ideal cells."""
        device = device or DeviceParams()
        t_int = unit_drop * c_f / nominal_cell_current(device)
        return cls(
            n_bits=n_bits,
            c_f=c_f,
            t_int=t_int,
            v_init=v_init,
            adc_bits=adc_bits,
            adc_lsb_v=unit_drop * lines_per_lsb / 2**n_bits,
            t_read=read_ratio * t_int,
            substeps=substeps,
        )

    @classmethod
    def for_lines(cls, lines: int, device: DeviceParams | None = None, **kw) -> "IntegratorParams":
        """Calibration whose full scale covers ``lines`` active word lines with an
        output code normalized per line (the single-row code range is kept)."""
        return cls.calibrated(device, unit_drop=UNIT_DROP / lines, lines_per_lsb=lines, **kw)

    def with_read_code(self, device: DeviceParams, code: float) -> "IntegratorParams":
        """Read window that centres a nominal cell on ADC ``code``."""
        dv_out = (code + 0.5) * self.adc_lsb_v
        return replace(self, t_read=2.0 * self.c_f * dv_out / nominal_cell_current(device))

    @property
    def cap_ratios(self) -> np.ndarray:
        """C_k / C_f for k = 0..n-1 (LSB first)."""
        return 2.0 ** (np.arange(self.n_bits) - self.n_bits)

    def replace(self, **changes) -> "IntegratorParams":
        return replace(self, **changes)


@dataclass
class Crossbar:
    """RRAM array addressed [row, column]. Columns come in weight groups of
    ``n_bits``; inside a group the logical order is MSB first and logical
    position ``j`` is served by physical column ``col_perm[j]``."""

    r_norm: np.ndarray
    lrs: np.ndarray
    n_bits: int
    col_perm: np.ndarray | None = None

    def __post_init__(self):
        self.r_norm = np.array(self.r_norm, dtype=float, ndmin=2)
        self.lrs = np.array(self.lrs, dtype=bool, ndmin=2)
        if self.r_norm.shape != self.lrs.shape:
            raise ValueError(f"shape mismatch: r_norm {self.r_norm.shape} vs states {self.lrs.shape}")
        if np.any(self.r_norm <= 0):
            raise ValueError("r_norm must be > 0")
        if self.cols % self.n_bits:
            raise ValueError(f"{self.cols} columns is not a multiple of n_bits={self.n_bits}")
        if self.col_perm is None:
            self.col_perm = np.arange(self.cols)
        self.col_perm = np.asarray(self.col_perm, dtype=int)
        for g in range(self.groups):
            lo, hi = g * self.n_bits, (g + 1) * self.n_bits
            if sorted(self.col_perm[lo:hi]) != list(range(lo, hi)):
                raise ValueError(f"col_perm is not a bijection on group {g}")

    @property
    def rows(self) -> int:
        return self.r_norm.shape[0]

    @property
    def cols(self) -> int:
        return self.r_norm.shape[1]

    @property
    def groups(self) -> int:
        return self.cols // self.n_bits

    @classmethod
    def from_weights(cls, weights, n_bits: int, r_norm=None) -> "Crossbar":
        """Plain binary programming of integer weights, shape (rows,) or (rows, groups)."""
        w = np.array(weights, dtype=np.int64)
        if w.ndim == 1:
            w = w[:, None]
        if np.any(w < 0) or np.any(w >= 2**n_bits):
            raise ValueError(f"weights must lie in [0, {2**n_bits - 1}]")
        shifts = np.arange(n_bits - 1, -1, -1)
        lrs = ((w[:, :, None] >> shifts) & 1).astype(bool).reshape(w.shape[0], -1)
        if r_norm is None:
            r_norm = np.ones(lrs.shape)
        return cls(r_norm, lrs, n_bits)

    @classmethod
    def from_mapping(cls, mapping, r_norm) -> "Crossbar":
        return cls(r_norm, mapping.states, mapping.n, mapping.perm)

    def resistance(self, p: DeviceParams) -> np.ndarray:
        """Physical resistances in ohms; HRS cells at ``hrs_ratio * r_lrs_nominal``."""
        return np.where(self.lrs, self.r_norm * p.r_lrs_nominal, p.hrs_ratio * p.r_lrs_nominal)

    def logical_resistance(self, p: DeviceParams) -> np.ndarray:
        """(rows, groups, n) resistances indexed by bit k, LSB first."""
        r = self.resistance(p)[:, self.col_perm]
        return r.reshape(self.rows, self.groups, self.n_bits)[:, :, ::-1]


@dataclass
class MacResult:
    v_out: np.ndarray
    digital: np.ndarray
    cap_trace: np.ndarray
    v_s_trace: np.ndarray
    v_out_trace: np.ndarray
    saturated: bool = False

    def trace_rows(self, group: int = 0):
        """Yield (cycle, k, v_ck, v_s, v_out) records for one weight group."""
        for cycle in range(self.cap_trace.shape[0]):
            for k in range(self.cap_trace.shape[2]):
                yield (
                    cycle,
                    k,
                    float(self.cap_trace[cycle, group, k]),
                    float(self.v_s_trace[cycle, group]),
                    float(self.v_out_trace[cycle, group]),
                )


def _integrate(r_ohm, active, tier, p, ip, t, v_start, v_g0=None):
    """Integrate capacitors for time ``t``.

    ``r_ohm`` has the cell axis first; every trailing index is one capacitor fed
    by the cells where ``active`` is set. Returns (voltages, saturated mask).
    """
    r_ohm = np.asarray(r_ohm, dtype=float)
    active = np.broadcast_to(np.asarray(active, dtype=bool), r_ohm.shape)
    v = np.array(np.broadcast_to(v_start, r_ohm.shape[1:]), dtype=float)
    # inactive cells contribute nothing: treat them as open
    r_eff = np.where(active, r_ohm, np.inf)
    scale = t / ip.c_f

    if tier is IntegratorTier.REGULATED:
        i = cell_current(r_eff, tier, 0.0, regulator_vd2(p), p)
        v = v - scale * np.sum(i, axis=0)
    else:
        i_sat_sum = np.sum(saturation_current(r_eff, p), axis=0)
        dt_scale = scale / ip.substeps
        for _ in range(ip.substeps):
            vc = np.maximum(v, 0.0)
            if tier is IntegratorTier.ONE_R1T_T0:
                v_d2, _ = cascode_node(i_sat_sum, vc, p, v_g0)
                i_col = i_sat_sum * (1.0 + p.lambda_clm * v_d2)
            else:
                i_col = np.sum(cell_current(r_eff, tier, vc, 0.0, p), axis=0)
            v = v - dt_scale * i_col
    saturated = v < 0
    return np.where(saturated, 0.0, v), saturated


def integrate_cells(r_ohm, tier: IntegratorTier, p: DeviceParams, ip: IntegratorParams, t,
                    v_start=None, v_g0: float | None = None):
    """Capacitor voltage after all cells along axis 0 of ``r_ohm`` discharge one
    capacitor for ``t`` seconds; ``t`` may be an array matching the trailing axes."""
    start = ip.v_init if v_start is None else v_start
    v, _ = _integrate(r_ohm, True, tier, p, ip, np.asarray(t, dtype=float), start, v_g0)
    return v


def integrate_cycle(xb: Crossbar, input_bits, tier: IntegratorTier, p: DeviceParams, ip: IntegratorParams,
                    cap_voltages=None, v_g0: float | None = None):
    """One integration phase. Returns cap voltages shaped (groups, n), bit k LSB
    first, and the mask of capacitors that hit ground."""
    bits = np.asarray(input_bits)
    if bits.shape != (xb.rows,) or np.any((bits != 0) & (bits != 1)):
        raise ValueError(f"input_bits must be {xb.rows} values in {{0, 1}}")
    start = ip.v_init if cap_voltages is None else cap_voltages
    r = xb.logical_resistance(p)
    return _integrate(r, bits.astype(bool)[:, None, None], tier, p, ip, ip.t_int, start, v_g0)


def charge_redistribute(cap_voltages, v_init: float, ip: IntegratorParams | None = None) -> np.ndarray:
    """Share charge over the binary-ratioed array plus the extra C0 held at v_init."""
    caps = np.asarray(cap_voltages, dtype=float)
    n = caps.shape[-1]
    if ip is not None and n != ip.n_bits:
        raise ValueError(f"expected {ip.n_bits} capacitor voltages, got {n}")
    weights = 2.0 ** (np.arange(n) - n)
    return caps @ weights + v_init * 2.0**-n


def accumulate_output(v_s, v_out_prev):
    return (np.asarray(v_s) + np.asarray(v_out_prev)) / 2.0


def adc_convert(v_out, ip: IntegratorParams):
    codes = np.floor((ip.v_init - np.asarray(v_out, dtype=float)) / ip.adc_lsb_v + ADC_TIE_TOLERANCE)
    codes = np.clip(codes, 0, 2**ip.adc_bits - 1).astype(np.int64)
    return codes if codes.ndim else int(codes)


def run_mac(inputs, xb: Crossbar, tier: IntegratorTier, p: DeviceParams, ip: IntegratorParams,
            v_g0: float | None = None) -> MacResult:
    """Bit-serial MAC over all weight groups, input LSB first."""
    x = np.asarray(inputs, dtype=np.int64)
    if x.shape != (xb.rows,):
        raise ValueError(f"expected {xb.rows} inputs, got shape {x.shape}")
    if np.any(x < 0) or np.any(x >= 2**ip.n_bits):
        raise ValueError(f"inputs must lie in [0, {2**ip.n_bits - 1}]")
    if xb.n_bits != ip.n_bits:
        raise ValueError("crossbar and integrator disagree on n_bits")

    n = ip.n_bits
    r = xb.logical_resistance(p)
    v_out = np.full(xb.groups, ip.v_init)
    caps_tr = np.empty((n, xb.groups, n))
    vs_tr = np.empty((n, xb.groups))
    vo_tr = np.empty((n, xb.groups))
    saturated = False
    for j in range(n):
        bits = ((x >> j) & 1).astype(bool)
        caps, sat = _integrate(r, bits[:, None, None], tier, p, ip, ip.t_int, ip.v_init, v_g0)
        saturated |= bool(np.any(sat))
        v_s = charge_redistribute(caps, ip.v_init)
        v_out = accumulate_output(v_s, v_out)
        caps_tr[j], vs_tr[j], vo_tr[j] = caps, v_s, v_out
    return MacResult(v_out, np.atleast_1d(adc_convert(v_out, ip)), caps_tr, vs_tr, vo_tr, saturated)


def ideal_mac(inputs, weights, n: int) -> int:
    """Exact integer dot product."""
    x = np.asarray(inputs, dtype=np.int64)
    w = np.asarray(weights, dtype=np.int64)
    if x.shape != w.shape:
        raise ValueError(f"shape mismatch: inputs {x.shape} vs weights {w.shape}")
    hi = 2**n
    if np.any(x < 0) or np.any(x >= hi) or np.any(w < 0) or np.any(w >= hi):
        raise ValueError(f"values must lie in [0, {hi - 1}]")
    return int(sum(int(a) * int(b) for a, b in zip(x.ravel(), w.ravel())))


def ideal_code(ideal, p: DeviceParams, ip: IntegratorParams) -> int:
    """Code an error-free array would produce for the integer dot product
    ``ideal`` under calibration ``ip`` (truncating ADC)."""
    unit = nominal_cell_current(p) * ip.t_int / ip.c_f
    code = math.floor(ideal * unit / (4**ip.n_bits * ip.adc_lsb_v) + ADC_TIE_TOLERANCE)
    return int(min(max(code, 0), 2**ip.adc_bits - 1))


def read_codes(r_ohm, tier: IntegratorTier, p: DeviceParams, ip: IntegratorParams, t_read=None):
    """ADC codes from reading each resistance alone: one integration over
    ``t_read`` then one sample V_out = (V_init + V_S) / 2."""
    t = ip.t_read if t_read is None else t_read
    r = np.asarray(r_ohm, dtype=float)
    v_s, _ = _integrate(r[None, ...], True, tier, p, ip, t, ip.v_init)
    return adc_convert(accumulate_output(v_s, ip.v_init), ip)


def resistance_from_code(code, p: DeviceParams, ip: IntegratorParams, t_read=None):
    """Invert a read-back code to ohms. The code is reconstructed at its centre
    and the read voltage is the 1R1T saturation value for the implied current."""
    t = ip.t_read if t_read is None else t_read
    code = np.asarray(code, dtype=float)
    dv_out = (code + 0.5) * ip.adc_lsb_v
    k_clm = 1.0 + p.lambda_clm * regulator_vd2(p)
    i_meas = 2.0 * ip.c_f * dv_out / t
    v_r = (p.v_g2 - p.vth2) - np.sqrt(2.0 * i_meas / (k_clm * p.k2))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = v_r * k_clm * t / (2.0 * ip.c_f * dv_out)
    r = np.where((code <= 0) | (v_r <= 0), np.nan, r)
    return r if r.ndim else float(r)


def read_resistance(xb: Crossbar, row: int, col: int, tier: IntegratorTier, p: DeviceParams,
                    ip: IntegratorParams, t_read=None) -> float:
    """Measure one physical cell through the integrator and ADC, in ohms."""
    r = xb.resistance(p)[row, col]
    code = read_codes(r, tier, p, ip, t_read)
    if code == 0:
        raise MeasurementRangeError(f"unmeasurable: resistance above range at ({row}, {col})")
    if code >= 2**ip.adc_bits - 1:
        raise MeasurementRangeError(f"unmeasurable: resistance below range at ({row}, {col})")
    value = resistance_from_code(code, p, ip, t_read)
    if math.isnan(value):
        raise MeasurementRangeError(f"unmeasurable: current beyond the 1R1T saturation limit at ({row}, {col})")
    return value
