"""INI experiment configuration with strict key checking."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .device import DeviceParams, IntegratorTier
from .integrator import IntegratorParams
from .variation import VariationSpec

KINDS = ("mac", "linearity-sweep", "input-lines-sweep", "monte-carlo", "quantize-compare",
         "read-resistance", "dynamic-perf")

INTEGRATOR_DEFAULTS = {
    "tier": "regulated",
    "n_bits": 8,
    "adc_bits": 8,
    "c_f": 250e-15,
    "v_init": 1.0,
    "substeps": 64,
    "lines": 1,
}

VARIATION_DEFAULTS = {"sigma": 0.2, "clip_min": 0.05}

# keys accepted in [experiment] per kind, with defaults
EXPERIMENT_KEYS = {
    "mac": {"inputs": "186", "weights": "236"},
    "linearity-sweep": {"tiers": "passive-naive,1r1t,1r1t-t0,regulated", "codes": 256, "swing": 0.3},
    "input-lines-sweep": {"tiers": "1r1t-t0,regulated", "max_lines": 256, "swing": 0.3},
    "monte-carlo": {"input_value": 180, "weight_value": 75, "n_lines": 128, "trials": 1400,
                    "methods": "binary,greedy"},
    "quantize-compare": {"sigmas": "0.05,0.1,0.2,0.3", "bits": "4,6,8", "vectors": 20, "length": 256,
                         "methods": "greedy,pseudo,binary"},
    "read-resistance": {"cells": 100},
    "dynamic-perf": {"samples": 1024, "cycles": 31, "lines": 255, "weight": 255, "input_value": 255},
}
COMMON_EXPERIMENT = {"kind": None, "seed": 0, "out": "out"}


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    out: Path
    device: DeviceParams
    integrator: dict
    variation: dict
    params: dict

    @property
    def tier(self) -> IntegratorTier:
        return IntegratorTier.parse(self.integrator["tier"])

    def integrator_params(self) -> IntegratorParams:
        g = self.integrator
        return IntegratorParams.for_lines(int(g["lines"]), self.device, n_bits=int(g["n_bits"]),
                                          adc_bits=int(g["adc_bits"]), c_f=float(g["c_f"]),
                                          v_init=float(g["v_init"]), substeps=int(g["substeps"]))

    def variation_spec(self) -> VariationSpec:
        return VariationSpec(float(self.variation["sigma"]), self.seed, float(self.variation["clip_min"]))

    def resolved_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["device"] = {f.name: _show(getattr(self.device, f.name)) for f in fields(DeviceParams)}
        cp["integrator"] = {k: _show(v) for k, v in self.integrator.items()}
        cp["variation"] = {k: _show(v) for k, v in self.variation.items()}
        exp = {"kind": self.kind, "seed": str(self.seed), "out": str(self.out)}
        exp.update({k: _show(v) for k, v in self.params.items()})
        cp["experiment"] = exp
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in cp[sec].items())
            lines.append("")
        return "\n".join(lines)


def _show(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return "%.9g" % v
    return str(v)


def _number(section, key, text, default):
    try:
        if isinstance(default, int) and not isinstance(default, bool):
            return int(text)
        if isinstance(default, float) or default is None:
            if text.strip().lower() == "none":
                return None
            return float(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected a number, got {text!r}") from None
    return text


def _check_keys(section, given, allowed):
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(unknown)}")


def parse_config(text: str, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}".splitlines()[0]) from None
    extra = set(cp.sections()) - {"device", "integrator", "variation", "experiment"}
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")

    dev_defaults = {f.name: f.default for f in fields(DeviceParams)}
    dev_sec = dict(cp["device"]) if cp.has_section("device") else {}
    _check_keys("device", dev_sec, dev_defaults)
    dev = {}
    for k, v in dev_sec.items():
        val = _number("device", k, v, dev_defaults[k])
        if k == "hrs_ratio" and val is None:
            val = math.inf
        dev[k] = val
    try:
        device = DeviceParams(**dev)
    except ValueError as exc:
        raise ConfigError(f"[device] {exc}") from None

    integ = dict(INTEGRATOR_DEFAULTS)
    sec = dict(cp["integrator"]) if cp.has_section("integrator") else {}
    _check_keys("integrator", sec, integ)
    for k, v in sec.items():
        integ[k] = v.strip() if k == "tier" else _number("integrator", k, v, INTEGRATOR_DEFAULTS[k])
    try:
        IntegratorTier.parse(integ["tier"])
    except ValueError as exc:
        raise ConfigError(f"[integrator] {exc}") from None

    var = dict(VARIATION_DEFAULTS)
    sec = dict(cp["variation"]) if cp.has_section("variation") else {}
    _check_keys("variation", sec, var)
    for k, v in sec.items():
        var[k] = _number("variation", k, v, VARIATION_DEFAULTS[k])

    if not cp.has_section("experiment") or "kind" not in cp["experiment"]:
        raise ConfigError("[experiment] kind is required")
    exp = dict(cp["experiment"])
    kind = exp.pop("kind").strip()
    if kind not in KINDS:
        raise ConfigError(f"[experiment] unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    allowed = EXPERIMENT_KEYS[kind]
    _check_keys("experiment", exp, set(allowed) | {"seed", "out"})
    file_seed = _number("experiment", "seed", exp.pop("seed", "0"), 0)
    file_out = exp.pop("out", "out").strip()
    params = dict(allowed)
    for k, v in exp.items():
        params[k] = _number("experiment", k, v, allowed[k]) if not isinstance(allowed[k], str) else v.strip()

    seed = file_seed if seed is None else seed
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    cfg = ExperimentConfig(kind, seed, Path(out if out is not None else file_out), device, integ, var, params)
    try:
        cfg.integrator_params()
        cfg.variation_spec()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, seed, out)


def int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from None


def float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated number list, got {text!r}") from None


def str_list(text: str) -> list[str]:
    return [x.strip() for x in str(text).split(",") if x.strip()]
