"""``cimforge`` command line: run configured experiments and map weights."""
from __future__ import annotations

import argparse
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, float_list, int_list, load_config, str_list
from .device import IntegratorTier
from .experiments import (
    dynamic_performance,
    input_lines_sweep,
    linearity_sweep,
    mac_experiment,
    monte_carlo_experiment,
    quantize_compare,
    read_resistance_experiment,
)
from .metrics import spectrum_db
from .quantmap import METHODS, ResistanceMatrix, quant_error_ratio
from .serialize import fmt, mapping_to_text, read_matrix_csv, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _linearity_csv(d: Path, name: str, rep):
    write_csv(d / name, ("code", "inl", "dnl"), rep.rows())


def _run_mac(cfg: ExperimentConfig, d: Path) -> list[str]:
    x = int_list(cfg.params["inputs"])
    w = int_list(cfg.params["weights"])
    if len(x) != len(w):
        raise ConfigError(f"inputs ({len(x)}) and weights ({len(w)}) differ in length")
    run = mac_experiment(x, w, cfg.tier, cfg.device, cfg.integrator_params())
    write_csv(d / "trace.csv", ("cycle", "k", "v_ck", "v_s", "v_out"), run.result.trace_rows(0))
    return [
        f"kind: mac ({cfg.tier.value})",
        f"rows: {len(x)}",
        f"ideal_mac: {run.ideal}",
        f"v_out_v: {fmt(float(run.result.v_out[0]))}",
        f"digital_code: {int(run.result.digital[0])}",
        f"digital_bits: {int(run.result.digital[0]):0{cfg.integrator_params().adc_bits}b}",
        f"expected_code: {run.expected_code}",
        f"saturated: {run.result.saturated}",
    ]


def _run_linearity(cfg, d):
    lines = ["kind: linearity-sweep"]
    ip = cfg.integrator_params()
    for name in str_list(cfg.params["tiers"]):
        tier = IntegratorTier.parse(name)
        drop, rep = linearity_sweep(tier, cfg.device, ip, int(cfg.params["codes"]), float(cfg.params["swing"]))
        _linearity_csv(d, f"linearity_{tier.value}.csv", rep)
        lines.append(f"{tier.value}: max_abs_inl={fmt(rep.max_abs_inl)} max_abs_dnl={fmt(rep.max_abs_dnl)}")
    return lines


def _run_lines(cfg, d):
    lines = ["kind: input-lines-sweep"]
    ip = cfg.integrator_params()
    for name in str_list(cfg.params["tiers"]):
        tier = IntegratorTier.parse(name)
        drop, rep = input_lines_sweep(tier, cfg.device, ip, int(cfg.params["max_lines"]),
                                      float(cfg.params["swing"]))
        _linearity_csv(d, f"lines_{tier.value}.csv", rep)
        lines.append(f"{tier.value}: max_abs_inl={fmt(rep.max_abs_inl)} max_abs_dnl={fmt(rep.max_abs_dnl)}")
    return lines


def _run_mc(cfg, d):
    prm = cfg.params
    cmp = monte_carlo_experiment(int(prm["input_value"]), int(prm["weight_value"]), int(prm["n_lines"]),
                                 int(prm["trials"]), cfg.variation_spec(), tuple(str_list(prm["methods"])),
                                 cfg.tier, cfg.device)
    lines = [f"kind: monte-carlo sigma={fmt(cfg.variation_spec().sigma)} seed={cfg.seed}"]
    for method, rep in cmp.reports.items():
        write_csv(d / f"mc_{method}.csv", ("trial", "error_lsb"),
                  list(zip(range(rep.trials), rep.errors_lsb)) + [("summary", rep.stats.line(method))])
        edges, counts = rep.histogram()
        write_csv(d / f"mc_{method}_hist.csv", ("bin_left_lsb", "count"), zip(edges, counts))
        lines.append(rep.stats.line(method))
    return lines


def _run_qcompare(cfg, d):
    prm = cfg.params
    rows = quantize_compare(float_list(prm["sigmas"]), int_list(prm["bits"]), int(prm["vectors"]),
                            int(prm["length"]), cfg.seed, tuple(str_list(prm["methods"])),
                            float(cfg.variation["clip_min"]))
    write_csv(d / "quantize_compare.csv", ("sigma", "n", "method", "mean_error_ratio"), rows)
    return ["kind: quantize-compare"] + [f"sigma={fmt(s)} n={n} {m}: {fmt(v)}" for s, n, m, v in rows]


def _run_read(cfg, d):
    rb = read_resistance_experiment(int(cfg.params["cells"]), cfg.variation_spec().sigma, cfg.seed,
                                    cfg.tier, cfg.device)
    write_csv(d / "read_resistance.csv", ("cell", "r_true", "r_measured", "bound", "within"),
              zip(range(rb.r_true.size), rb.r_true, rb.r_measured, rb.bound, rb.within_bound))
    err = np.abs(rb.r_measured - rb.r_true)
    return ["kind: read-resistance",
            f"cells: {rb.r_true.size}",
            f"within_bound: {int(rb.within_bound.sum())}/{rb.r_true.size}",
            f"max_abs_error: {fmt(float(err.max()))}",
            f"hrs_cell: {rb.hrs_message}"]


def _run_dynamic(cfg, d):
    prm = cfg.params
    runs = dynamic_performance(cfg.variation_spec().sigma, cfg.seed, int(prm["samples"]), int(prm["cycles"]),
                               int(prm["lines"]), int(prm["weight"]), int(prm["input_value"]), cfg.tier,
                               cfg.device)
    lines = ["kind: dynamic-perf"]
    for run in runs:
        mags = spectrum_db(run.codes)
        write_csv(d / f"spectrum_{run.label}.csv", ("bin", "magnitude_db"), enumerate(mags))
        m = run.metrics
        lines.append(f"{run.label}: sfdr_db={fmt(m.sfdr_db)} sndr_db={fmt(m.sndr_db)} enob_bits={fmt(m.enob_bits)}")
    return lines


RUNNERS = {
    "mac": _run_mac,
    "linearity-sweep": _run_linearity,
    "input-lines-sweep": _run_lines,
    "monte-carlo": _run_mc,
    "quantize-compare": _run_qcompare,
    "read-resistance": _run_read,
    "dynamic-perf": _run_dynamic,
}


def _err(msg: str):
    print(f"cimforge: error: {msg}", file=sys.stderr)


def _publish(staging: Path, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    for f in sorted(staging.iterdir()):
        shutil.move(str(f), str(out / f.name))


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.seed, args.out)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    parent = cfg.out.resolve().parent
    try:
        parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=".cimforge-", dir=parent))
    except OSError as exc:
        _err(f"cannot create output directory {cfg.out}: {exc.strerror}")
        return EXIT_RUNTIME
    try:
        lines = RUNNERS[cfg.kind](cfg, staging)
        (staging / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        (staging / "resolved.cfg").write_text(cfg.resolved_text(), encoding="utf-8", newline="\n")
        _publish(staging, cfg.out)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - single-line diagnostic for any failure
        _err(f"{type(exc).__name__}: {exc}".splitlines()[0])
        return EXIT_RUNTIME
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    if not args.quiet:
        print("\n".join(lines))
    return EXIT_OK


def cmd_quantize(args) -> int:
    try:
        w = read_matrix_csv(args.weights).ravel()
        r = read_matrix_csv(args.resistances)
        if r.shape[0] != w.size:
            raise ValueError(f"shape mismatch: weights ({w.size},) vs resistances {r.shape}")
        n = args.n if args.n is not None else r.shape[1]
        rm = ResistanceMatrix(r, "adc-measured")
        mapping = METHODS[args.method](w, rm, n)
        ratio = quant_error_ratio(w, mapping)
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    text = mapping_to_text(mapping)
    try:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        _err(f"cannot write {args.out}: {exc.strerror}")
        return EXIT_RUNTIME
    if not args.quiet:
        print(f"method: {args.method}")
        print(f"total_abs_residual: {fmt(float(np.sum(np.abs(mapping.residuals))))}")
        print(f"quant_error_ratio: {fmt(ratio)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cimforge", description="RRAM compute-in-memory core simulator")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command")

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None)
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(func=cmd_run)

    q = sub.add_parser("quantize", help="map weights onto measured resistances")
    q.add_argument("weights", help="CSV with one weight per row")
    q.add_argument("resistances", help="CSV of normalized resistances, one row per weight")
    q.add_argument("--method", choices=sorted(METHODS), default="greedy")
    q.add_argument("--n", type=int, default=None, help="cells per weight (defaults to the CSV width)")
    q.add_argument("--out", default="mapping.txt")
    q.add_argument("--quiet", action="store_true")
    q.set_defaults(func=cmd_quantize)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # bare flags mean "run"
    if argv and argv[0].startswith("--") and argv[0] not in ("--help", "--version"):
        argv.insert(0, "run")
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if not getattr(args, "func", None):
        ap.print_help()
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
