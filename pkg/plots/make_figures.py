#!/usr/bin/env python3
"""Figure generation from wqflow diagnostics CSVs.

Reads only the delimited output of the main tool (diagnostics.csv and
friends), never its internals, so the solver suite runs without this
package and vice versa.  Driven by a flat key-value spec file in the same
format as the solver configs:

    mode    = timeseries | overlay | refinement
    csv     = diagnostics.csv          (comma list in refinement mode)
    out     = figure.png
    columns = K,Ent,mass | all         (timeseries)
    lhs     = dW_np_dt_lhs             (overlay/refinement pair)
    rhs     = dW_np_dt_rhs
    labels  = N=64,N=128,N=256         (refinement)
    logy    = 0 | 1
    title   = optional figure title

timeseries draws each requested column against t; overlay draws an
LHS/RHS pair on shared axes with a residual subplot; refinement reduces
each CSV to the mean |lhs - rhs|, plots it against h = 1/N on log-log
axes and annotates the least-squares slope.

Figures are written with fixed metadata (no timestamps, no tool-version
string), so identical inputs regenerate identical bytes.
"""

from __future__ import annotations

import math
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

PNG_METADATA = {"Software": "wqflow-plots"}

KNOWN_KEYS = ("mode", "csv", "out", "columns", "lhs", "rhs", "labels", "logy", "title")


class SpecError(ValueError):
    pass


def parse_spec(text: str) -> dict:
    """Flat `key = value` lines, '#' comments; unknown keys rejected."""
    spec = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (tok.strip() for tok in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise SpecError(f"line {lineno}: unknown key {key!r}")
        spec[key] = value
    for required in ("mode", "csv", "out"):
        if required not in spec:
            raise SpecError(f"spec needs a '{required}' line")
    return spec


def read_csv(path: str) -> dict[str, np.ndarray]:
    """Header-keyed float columns; an empty body is an error."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise SpecError(f"{path}: empty file")
    header = lines[0].split(",")
    body = [ln.split(",") for ln in lines[1:]]
    if not body:
        raise SpecError(f"{path}: no data rows")
    data = np.array([[float(tok) for tok in row] for row in body])
    return {name: data[:, i] for i, name in enumerate(header)}


def _column(table: dict, name: str, path: str) -> np.ndarray:
    if name not in table:
        raise SpecError(f"{path}: no column named '{name}' (header has: {', '.join(table)})")
    return table[name]


def _finish(fig, spec):
    if spec.get("title"):
        fig.suptitle(spec["title"])
    fig.savefig(spec["out"], dpi=110, metadata=PNG_METADATA)
    plt.close(fig)
    return spec["out"]


def plot_timeseries(spec: dict) -> str:
    table = read_csv(spec["csv"])
    t = _column(table, "t", spec["csv"])
    wanted = spec.get("columns", "all")
    names = [c for c in table if c != "t"] if wanted == "all" else [c.strip() for c in wanted.split(",")]
    for name in names:
        _column(table, name, spec["csv"])
    ncols = 4 if len(names) > 8 else 2 if len(names) > 1 else 1
    nrows = math.ceil(len(names) / ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.6 * ncols, 2.4 * nrows), squeeze=False)
    for ax in axes.flat[len(names):]:
        ax.set_axis_off()
    for ax, name in zip(axes.flat, names):
        ax.plot(t, table[name], lw=1.2)
        ax.set_title(name, fontsize=9)
        ax.tick_params(labelsize=7)
        if spec.get("logy", "0") not in ("0", "", "false"):
            ax.set_yscale("log")
    fig.tight_layout()
    return _finish(fig, spec)


def plot_overlay(spec: dict) -> str:
    for key in ("lhs", "rhs"):
        if key not in spec:
            raise SpecError(f"overlay mode needs a '{key}' column")
    table = read_csv(spec["csv"])
    t = _column(table, "t", spec["csv"])
    lhs = _column(table, spec["lhs"], spec["csv"])
    rhs = _column(table, spec["rhs"], spec["csv"])
    fig, (top, bottom) = plt.subplots(
        2, 1, figsize=(6.0, 4.6), sharex=True, gridspec_kw={"height_ratios": [2.2, 1.0]}
    )
    top.plot(t, lhs, lw=1.4, label=spec["lhs"])
    top.plot(t, rhs, lw=1.4, ls="--", label=spec["rhs"])
    top.legend(fontsize=8)
    if spec.get("logy", "0") not in ("0", "", "false"):
        top.set_yscale("log")
    bottom.plot(t, lhs - rhs, lw=1.0, color="k")
    bottom.axhline(0.0, lw=0.6, color="0.6")
    bottom.set_xlabel("t")
    bottom.set_ylabel("residual", fontsize=8)
    fig.tight_layout()
    return _finish(fig, spec)


def plot_refinement(spec: dict) -> tuple[str, float]:
    """log-log |lhs - rhs| vs h across resolutions; returns (path, slope)."""
    for key in ("lhs", "rhs", "labels"):
        if key not in spec:
            raise SpecError(f"refinement mode needs a '{key}' line")
    paths = [p.strip() for p in spec["csv"].split(",")]
    labels = [s.strip() for s in spec["labels"].split(",")]
    if len(paths) != len(labels) or len(paths) < 2:
        raise SpecError("refinement mode needs matching csv/labels lists of length >= 2")
    hs, errs = [], []
    for path, label in zip(paths, labels):
        if not label.startswith("N="):
            raise SpecError(f"labels must look like N=128, got {label!r}")
        N = int(label[2:])
        table = read_csv(path)
        lhs = _column(table, spec["lhs"], path)
        rhs = _column(table, spec["rhs"], path)
        gap = np.abs(lhs - rhs)
        gap = gap[np.isfinite(gap)]
        if gap.size == 0:
            raise SpecError(f"{path}: no finite rows for {spec['lhs']} - {spec['rhs']}")
        hs.append(1.0 / N)
        errs.append(float(gap.mean()))
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    fig, ax = plt.subplots(figsize=(4.6, 3.6))
    ax.loglog(hs, errs, "o-", lw=1.2)
    ref = errs[-1] * (np.array(hs) / hs[-1]) ** 2
    ax.loglog(hs, ref, ":", color="0.5", label="order 2")
    ax.annotate(f"slope = {slope:.2f}", xy=(0.05, 0.9), xycoords="axes fraction")
    ax.set_xlabel("h")
    ax.set_ylabel(f"mean |{spec['lhs']} - {spec['rhs']}|", fontsize=8)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _finish(fig, spec), slope


def run_spec(spec: dict):
    mode = spec["mode"]
    if mode == "timeseries":
        return plot_timeseries(spec)
    if mode == "overlay":
        return plot_overlay(spec)
    if mode == "refinement":
        return plot_refinement(spec)
    raise SpecError(f"unknown mode {spec['mode']!r}")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: make_figures <spec-file>", file=sys.stderr)
        return 1
    try:
        with open(argv[0], "r", encoding="utf-8") as fh:
            spec = parse_spec(fh.read())
        result = run_spec(spec)
    except (OSError, SpecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, tuple):
        print(f"{result[0]} (slope {result[1]:.3f})")
    else:
        print(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
