"""Writers for VTK legacy fields, sweep reports and energy time series."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

REPORT_COLUMNS = ("eps", "norm_u_tilde", "norm_u_tilde_over_eps", "err_u_avg", "err_d_avg",
                  "norm_epsP_Lp", "poincare_ratio_u", "mean_diff_ratio_d", "energy_min_slack")
ENERGY_COLUMNS = ("t", "e_current", "dissipation_accum", "work_accum", "slack",
                  "max_abs_d", "norm_u")


class IoError(OSError):
    pass


def fmt(x: float) -> str:
    return "%.17g" % float(x)


def _vtk_order(a: np.ndarray) -> np.ndarray:
    # VTK cell data runs x fastest; arrays here are indexed [x, y]
    return np.asarray(a).T.ravel()


def write_vtk(fields: Mapping[str, np.ndarray], N: int, path, title: str = "lc_homog") -> None:
    """Legacy ASCII STRUCTURED_POINTS file with cell data on an ``N x N`` grid of [0, 1]^2.

    Arrays of shape ``(N, N)`` become scalars (integer arrays as ``int``), arrays
    of shape ``(2, N, N)`` become 3-component vectors with a zero third entry.
    """
    h = 1.0 / N
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET STRUCTURED_POINTS",
             f"DIMENSIONS {N + 1} {N + 1} 1", "ORIGIN 0 0 0", f"SPACING {fmt(h)} {fmt(h)} 1",
             f"CELL_DATA {N * N}"]
    for name, a in fields.items():
        a = np.asarray(a)
        if a.shape == (N, N):
            if a.dtype.kind in "biu":
                lines += [f"SCALARS {name} int 1", "LOOKUP_TABLE default"]
                lines += [str(int(v)) for v in _vtk_order(a)]
            else:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [fmt(v) for v in _vtk_order(a)]
        elif a.shape == (2, N, N):
            lines.append(f"VECTORS {name} double")
            lines += [f"{fmt(x)} {fmt(y)} 0" for x, y in zip(_vtk_order(a[0]), _vtk_order(a[1]))]
        else:
            raise ValueError(f"field {name!r} has shape {a.shape}, expected ({N}, {N}) or (2, {N}, {N})")
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_vtk(path) -> dict[str, np.ndarray]:
    """Read back a file produced by :func:`write_vtk`."""
    tokens = Path(path).read_text(encoding="ascii").split("\n")
    N = None
    out: dict[str, np.ndarray] = {}
    i = 0
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("DIMENSIONS"):
            N = int(line.split()[1]) - 1
        if line.startswith("SCALARS"):
            _, name, kind, _ = line.split()
            vals = tokens[i + 2:i + 2 + N * N]
            conv = int if kind == "int" else float
            out[name] = np.array([conv(v) for v in vals]).reshape(N, N).T
            i += 2 + N * N
            continue
        if line.startswith("VECTORS"):
            name = line.split()[1]
            vals = np.array([[float(v) for v in row.split()] for row in tokens[i + 1:i + 1 + N * N]])
            out[name] = np.stack([vals[:, 0].reshape(N, N).T, vals[:, 1].reshape(N, N).T])
            i += 1 + N * N
            continue
        i += 1
    return out


def _plain(x: Any) -> Any:
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def write_json(obj: Any, path) -> None:
    try:
        Path(path).write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_csv(rows: Sequence[Mapping[str, Any]], columns: Sequence[str], path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([fmt(r[c]) for c in columns])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_csv(path) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_report(report, directory) -> None:
    """``report.json`` (everything) and ``report.csv`` (one row per eps)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    data = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    write_json(data, d / "report.json")
    write_csv(data.get("records", []), REPORT_COLUMNS, d / "report.csv")


def write_energy(history: Sequence[Mapping[str, float]], path) -> None:
    write_csv(history, ENERGY_COLUMNS, path)
