"""Behavioral models of the 1R1T cell, the T0 cascode and the bit-line regulator.

All functions are closed-form (or a short fixed-point solve) and accept numpy
arrays wherever a voltage, current or resistance is expected.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np


class IntegratorTier(enum.Enum):
    """Fidelity tiers of the passive integrator, from worst to best linearity."""

    PASSIVE_NAIVE = "passive-naive"
    ONE_R1T = "1r1t"
    ONE_R1T_T0 = "1r1t-t0"
    REGULATED = "regulated"

    @classmethod
    def parse(cls, text: str) -> "IntegratorTier":
        for tier in cls:
            if text.strip().lower() in (tier.value, tier.name.lower()):
                return tier
        raise ValueError(f"unknown integrator tier {text!r}")


class CellState(enum.IntEnum):
    HRS = 0
    LRS = 1


@dataclass(frozen=True)
class DeviceParams:
    k0: float = 200e-6
    k1: float = 200e-6
    k2: float = 200e-6
    vth0: float = 0.4
    vth1: float = 0.4
    vth2: float = 0.4
    lambda_clm: float = 0.1
    # sqrt(i_ref / k1) = 0.1 V puts the regulated read node at 0.5 V
    i_ref: float = 2e-6
    v_g2: float = 0.9
    # None: tuned so a single nominal cell sees the regulated node voltage
    v_g0_fixed: float | None = None
    r_lrs_nominal: float = 100e3
    hrs_ratio: float = math.inf

    def __post_init__(self):
        for name in ("k0", "k1", "k2", "r_lrs_nominal"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.i_ref < 0:
            raise ValueError("i_ref must be >= 0")
        if self.lambda_clm < 0:
            raise ValueError("lambda_clm must be >= 0")
        if not self.hrs_ratio > 1:
            raise ValueError("hrs_ratio must be > 1")
        if self.v_g2 <= self.vth2:
            raise ValueError("v_g2 must exceed vth2")

    @property
    def v_g0(self) -> float:
        """Cascode gate voltage used by the unregulated T0 tier."""
        if self.v_g0_fixed is not None:
            return self.v_g0_fixed
        return regulator_vg0(nominal_cell_current(self), self)

    def replace(self, **changes) -> "DeviceParams":
        return replace(self, **changes)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class RramCell:
    state: CellState = CellState.LRS
    r_norm: float = 1.0

    def __post_init__(self):
        if not self.r_norm > 0:
            raise ValueError("r_norm must be > 0")

    def resistance(self, p: DeviceParams) -> float:
        if self.state == CellState.LRS:
            return self.r_norm * p.r_lrs_nominal
        return p.hrs_ratio * p.r_lrs_nominal


def cell_read_voltage(r, p: DeviceParams):
    """Voltage across the RRAM of a 1R1T unit whose transistor sits in saturation.

    Solves ``K2/2 (V_G2 - V_R - V_th2)^2 = V_R / R`` for the physical root. The
    form ``a x / (1 + sqrt(1 + x))^2`` with ``x = 2 K2 R a`` is algebraically the
    textbook expression but does not cancel catastrophically at small ``R``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("resistance must be positive")
    a = p.v_g2 - p.vth2
    with np.errstate(invalid="ignore"):
        x = 2.0 * p.k2 * r * a
        v = a * x / (1.0 + np.sqrt(1.0 + x)) ** 2
    v = np.where(np.isinf(r), a, v)
    return v if v.ndim else float(v)


def saturation_current(r, p: DeviceParams):
    """V_R(R)/R; zero for an open (infinite) resistance."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(cell_read_voltage(r, p))
    with np.errstate(divide="ignore", invalid="ignore"):
        i = np.where(np.isinf(r), 0.0, v / r)
    return i if i.ndim else float(i)


def regulator_vd2(p: DeviceParams) -> float:
    """Read-node voltage held by the T1 feedback loop; load independent."""
    return p.vth1 + math.sqrt(p.i_ref / p.k1)


def regulator_vg0(i_b, p: DeviceParams):
    """Gate voltage the regulator drives onto T0 to carry bit-line current ``i_b``.

    Uses sqrt(2 I_b / K0) so that the T0 square law evaluated at the regulated
    node returns ``i_b`` exactly.
    """
    return regulator_vd2(p) + p.vth0 + np.sqrt(2.0 * np.asarray(i_b, dtype=float) / p.k0)


def cascode_vd2(i_b, v_g0: float, p: DeviceParams, v_ds0=None):
    """Source voltage of T0 (drain of the 1R1T units) for a fixed gate voltage.

    ``v_ds0`` optionally adds T0's own channel-length modulation; without it the
    node depends on the load only. Returns ``(v_d2, clamped)`` where ``clamped``
    marks loads heavy enough to pull the node to ground.
    """
    i_b = np.asarray(i_b, dtype=float)
    if np.any(i_b < 0):
        raise ValueError("bit-line current must be >= 0")
    if v_g0 <= p.vth0:
        raise ValueError("v_g0 must exceed vth0")
    k_eff = p.k0
    if v_ds0 is not None:
        k_eff = p.k0 * (1.0 + p.lambda_clm * np.maximum(np.asarray(v_ds0, dtype=float), 0.0))
    v = v_g0 - p.vth0 - np.sqrt(2.0 * i_b / k_eff)
    clamped = v <= 0
    v = np.where(clamped, 0.0, v)
    if v.ndim == 0:
        return float(v), bool(clamped)
    return v, clamped


def cascode_node(i_sat_sum, v_c, p: DeviceParams, v_g0: float | None = None, iterations: int = 40):
    """Self-consistent read node under a fixed-gate T0.

    The bit-line load is ``i_sat_sum * (1 + lambda * v_d2)`` and T0's drain sits
    at the integrating node ``v_c``. Contraction is fast since lambda is small.
    """
    v_g0 = p.v_g0 if v_g0 is None else v_g0
    i_sat_sum = np.asarray(i_sat_sum, dtype=float)
    v_c = np.asarray(v_c, dtype=float)
    v = np.full(np.broadcast(i_sat_sum, v_c).shape, regulator_vd2(p))
    for _ in range(iterations):
        v_new, clamped = cascode_vd2(i_sat_sum * (1.0 + p.lambda_clm * v), v_g0, p, v_ds0=v_c - v)
        if np.allclose(v_new, v, rtol=0, atol=1e-15):
            v = v_new
            break
        v = v_new
    _, clamped = cascode_vd2(i_sat_sum * (1.0 + p.lambda_clm * v), v_g0, p, v_ds0=v_c - v)
    return v, clamped


def cell_current(cell, tier: IntegratorTier, v_c, v_d2, p: DeviceParams):
    """Integrating current of one cell (or an array of resistances in ohms).

    ``v_c`` is the integrating capacitor voltage; ``v_d2`` the read-node voltage
    supplied by the caller (cascode or regulator), ignored by the tiers whose
    drain sits on the integrating node.
    """
    r = cell.resistance(p) if isinstance(cell, RramCell) else cell
    if np.any(np.asarray(v_c) < 0):
        raise ValueError("integrating voltage must be >= 0")
    r = np.asarray(r, dtype=float)
    if tier is IntegratorTier.PASSIVE_NAIVE:
        with np.errstate(divide="ignore"):
            i = np.where(np.isinf(r), 0.0, np.asarray(v_c, dtype=float) / r)
    elif tier is IntegratorTier.ONE_R1T:
        i = np.asarray(saturation_current(r, p)) * (1.0 + p.lambda_clm * np.asarray(v_c, dtype=float))
    else:
        i = np.asarray(saturation_current(r, p)) * (1.0 + p.lambda_clm * np.asarray(v_d2, dtype=float))
    return i if np.ndim(i) else float(i)


def nominal_cell_current(p: DeviceParams) -> float:
    """Current of an ideal LRS cell behind the regulator."""
    return cell_current(p.r_lrs_nominal, IntegratorTier.REGULATED, 0.0, regulator_vd2(p), p)


def normalized_contribution(r_norm, p: DeviceParams):
    """Regulated-tier current of cells with normalized resistance ``r_norm``,
    relative to a nominal cell; this is the per-cell weight multiplier the
    integrator actually sees."""
    r = np.asarray(r_norm, dtype=float) * p.r_lrs_nominal
    return cell_current(r, IntegratorTier.REGULATED, 0.0, regulator_vd2(p), p) / nominal_cell_current(p)
