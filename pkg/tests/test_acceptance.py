"""End-to-end acceptance checks, one test per criterion, each at its stated tolerance."""
import hashlib
import shutil
import time

import numpy as np

from cimforge.cli import main
from cimforge.device import DeviceParams, IntegratorTier as T
from cimforge.experiments import (
    dynamic_performance,
    input_lines_sweep,
    linearity_sweep,
    mac_experiment,
    quantize_compare,
    read_resistance_experiment,
)
from cimforge.integrator import Crossbar, IntegratorParams, ideal_mac, run_mac
from cimforge.quantmap import (
    binary_quantize_map,
    exhaustive_bitline_map,
    greedy_bitline_map,
    pseudo_binary_map,
    pseudo_binary_quantize,
)
from cimforge.variation import VariationSpec, monte_carlo_mac, sample_lrs_resistances


def test_criterion_01_golden_mac(report):
    t0 = time.perf_counter()
    run = mac_experiment([186], [236], T.REGULATED)
    elapsed = time.perf_counter() - t0
    code, v_out = int(run.result.digital[0]), float(run.result.v_out[0])
    ok = code == 171 and abs(v_out - 0.8316) <= 5e-3 and elapsed < 1.0
    report(1, ok, f"code={code} (171) v_out={v_out * 1e3:.2f} mV (831.6 +/- 5) time={elapsed:.2f}s (<1)")
    assert ok


def test_criterion_02_oracle_equivalence(report):
    p = DeviceParams(lambda_clm=0.0)
    ip = IntegratorParams.calibrated(p)
    rng = np.random.default_rng(20240502)
    t0 = time.perf_counter()
    done = mismatches = 0
    while done < 1000:
        rows = int(rng.integers(1, 257))
        x = rng.integers(0, 256, rows)
        w = np.zeros(rows, dtype=np.int64)
        # at most three weighted rows keeps every capacitor above ground
        idx = rng.choice(rows, size=min(rows, int(rng.integers(1, 4))), replace=False)
        w[idx] = rng.integers(0, 256, idx.size)
        ideal = ideal_mac(x, w, 8)
        if ideal >= 2**16:
            continue
        res = run_mac(x, Crossbar.from_weights(w, 8), T.REGULATED, p, ip)
        assert not res.saturated
        mismatches += int(res.digital[0] != ideal // 256)
        done += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 30
    report(2, ok, f"{mismatches} mismatches in {done} MACs time={elapsed:.1f}s (<30)")
    assert ok


def test_criterion_03_worked_quantization(report):
    w, r = 13.4, [1.05, 1.1, 1.125, 0.93]
    pb = pseudo_binary_quantize(w, r).residual
    binary = binary_quantize_map([w], [[1, 1, 1, 1]], 4).residuals[0]
    ex = exhaustive_bitline_map([w], [r], 4).residuals[0]
    gr = greedy_bitline_map([w], [r], 4).residuals[0]
    ok = (abs(pb + 0.33) <= 1e-12 and abs(binary - 0.4) <= 1e-12
          and abs(ex) <= 1e-12 and abs(gr) <= 1e-12)
    report(3, ok, f"pseudo={pb:.15f} binary={binary:.15f} exhaustive={ex:.3g} greedy={gr:.3g}")
    assert ok


def test_criterion_04_monte_carlo(report):
    spec = VariationSpec(0.2, 1)
    t0 = time.perf_counter()
    b = monte_carlo_mac(180, 75, 128, 1400, spec, "binary", workers=None)
    g = monte_carlo_mac(180, 75, 128, 1400, spec, "greedy", workers=None)
    elapsed = time.perf_counter() - t0
    sb, sg = b.stats.std, g.stats.std
    checks = {
        "binary std in [0.9, 2.6]": 0.9 <= sb <= 2.6,
        "greedy std <= 0.25": sg <= 0.25,
        "binary/greedy >= 5": sg == 0 or sb / sg >= 5,
        "time < 60s": elapsed < 60,
    }
    failed = [k for k, v in checks.items() if not v]
    ok = not failed
    report(4, ok, f"binary std={sb:.3f} mean={b.stats.mean:.3f}, greedy std={sg:.3f} mean={g.stats.mean:.3f}, "
                  f"time={elapsed:.1f}s" + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok, f"failed sub-checks: {failed}"


def test_criterion_05_linearity_orderings(report):
    t0 = time.perf_counter()
    inl = {t: linearity_sweep(t)[1].max_abs_inl for t in (T.PASSIVE_NAIVE, T.ONE_R1T, T.ONE_R1T_T0)}
    lines_t0 = input_lines_sweep(T.ONE_R1T_T0)[1].max_abs_inl
    lines_reg = input_lines_sweep(T.REGULATED)[1].max_abs_inl
    elapsed = time.perf_counter() - t0
    a, b, c = inl[T.PASSIVE_NAIVE], inl[T.ONE_R1T], inl[T.ONE_R1T_T0]
    ok = a >= 1.2 * b and b >= 1.2 * c and lines_t0 >= 3 * lines_reg and elapsed < 30
    report(5, ok, f"max|INL| passive={a:.3g} 1r1t={b:.3g} 1r1t-t0={c:.3g}; lines sweep 1r1t-t0={lines_t0:.3g} "
                  f"regulated={lines_reg:.3g}; time={elapsed:.1f}s")
    assert ok


def test_criterion_06_method_ordering(report):
    t0 = time.perf_counter()
    rows = quantize_compare(sigmas=(0.05, 0.1, 0.2, 0.3), bits=(4, 6, 8), vectors=20, length=256, seed=6)
    elapsed = time.perf_counter() - t0
    table = {(s, n, m): v for s, n, m, v in rows}
    bad = [(s, n) for s, n, _m, _v in rows
           if not table[(s, n, "greedy")] <= table[(s, n, "pseudo")] <= table[(s, n, "binary")]]
    bad = sorted(set(bad))
    ok = not bad and elapsed < 60
    report(6, ok, f"A<=C<=B in {12 - len(bad)}/12 (sigma, n) cells, time={elapsed:.1f}s")
    assert ok


def test_criterion_07_greedy_vs_exhaustive(report):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    violations = 0
    for i in range(500):
        rows, cols = int(rng.integers(1, 5)), int(rng.integers(1, 7))
        r = sample_lrs_resistances(rows, cols, VariationSpec(0.2, 7), rng).values
        w = rng.uniform(0, 2**cols - 1, rows)
        ex = exhaustive_bitline_map(w, r).cost
        gr = greedy_bitline_map(w, r).cost
        ident = pseudo_binary_map(w, r).cost
        violations += int(not (ex <= gr + 1e-12 and gr <= ident + 1e-12))
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 60
    report(7, ok, f"{violations} violations in 500 instances, time={elapsed:.1f}s")
    assert ok


def test_criterion_08_enob(report):
    t0 = time.perf_counter()
    runs = {r.label: r.metrics.enob_bits for r in dynamic_performance(sigma=0.2, seed=8)}
    elapsed = time.perf_counter() - t0
    ideal, binary, greedy = runs["ideal"], runs["binary"], runs["greedy"]
    ok = (abs(ideal - 8) <= 0.2 and binary < ideal and greedy - binary >= 0.5 * (ideal - binary)
          and elapsed < 30)
    report(8, ok, f"ENOB ideal={ideal:.3f} binary={binary:.3f} greedy={greedy:.3f} time={elapsed:.1f}s")
    assert ok


def test_criterion_09_read_back(report):
    t0 = time.perf_counter()
    rb = read_resistance_experiment(cells=100, sigma=0.2, seed=9)
    elapsed = time.perf_counter() - t0
    inside = int(rb.within_bound.sum())
    ok = inside == 100 and "unmeasurable" in rb.hrs_message and elapsed < 10
    report(9, ok, f"{inside}/100 within bound, HRS: {rb.hrs_message!r}, time={elapsed:.2f}s")
    assert ok


SMALL = {
    "mac": "",
    "linearity-sweep": "codes = 64\n",
    "input-lines-sweep": "max_lines = 64\n",
    "monte-carlo": "trials = 60\nn_lines = 32\n",
    "quantize-compare": "vectors = 2\nlength = 64\n",
    "read-resistance": "cells = 40\n",
    "dynamic-perf": "samples = 512\ncycles = 13\nlines = 63\n",
}


def _digest(d):
    return {f.name: hashlib.sha256(f.read_bytes()).hexdigest() for f in sorted(d.iterdir())}


def test_criterion_10_determinism(report, tmp_path):
    differing = []
    for kind, extra in SMALL.items():
        cfg = tmp_path / f"{kind}.cfg"
        cfg.write_text(f"[experiment]\nkind = {kind}\n{extra}")
        out = tmp_path / kind
        digests = []
        for _ in range(2):
            assert main(["run", "--config", str(cfg), "--out", str(out), "--seed", "10", "--quiet"]) == 0
            digests.append(_digest(out))
            shutil.rmtree(out)
        if digests[0] != digests[1]:
            differing.append(kind)
    ok = not differing
    report(10, ok, f"{len(SMALL) - len(differing)}/{len(SMALL)} experiment kinds byte-identical on re-run")
    assert ok
