"""CSV and text formats: 9-significant-digit reals, LF line endings."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .quantmap import WeightMapping


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.9g" % v
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_matrix_csv(path) -> np.ndarray:
    """Numeric CSV as a 2-D float array; a non-numeric first row is taken as a header."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no data")
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
    try:
        data = [[float(c) for c in r] for r in rows]
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    widths = {len(r) for r in data}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows")
    return np.array(data, dtype=float, ndmin=2)


def mapping_to_text(m: WeightMapping) -> str:
    """Header ``R C n method``, the permutation, then per row the logical
    MSB->LSB states and the residual."""
    rows, cols = m.states.shape
    lines = [f"{rows} {cols} {m.n} {m.method}", "perm " + " ".join(str(int(c)) for c in m.perm)]
    for states, res in zip(m.logical_states, m.residuals):
        lines.append("".join("1" if s else "0" for s in states) + " " + fmt(float(res)))
    return "\n".join(lines) + "\n"


def mapping_from_text(text: str) -> WeightMapping:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    try:
        r, c, n, method = lines[0].split()
        r, c, n = int(r), int(c), int(n)
        head, *perm = lines[1].split()
        if head != "perm":
            raise ValueError("missing perm line")
        perm = np.array([int(x) for x in perm])
        logical = np.zeros((r, c), dtype=bool)
        res = np.zeros(r)
        for j, ln in enumerate(lines[2:2 + r]):
            bits, value = ln.split()
            logical[j] = [b == "1" for b in bits]
            res[j] = float(value)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed mapping text: {exc}") from None
    if len(lines) != 2 + r:
        raise ValueError("malformed mapping text: row count does not match header")
    states = np.zeros_like(logical)
    states[:, perm] = logical
    return WeightMapping(perm, states, res, np.full(n, np.nan), n, method)
