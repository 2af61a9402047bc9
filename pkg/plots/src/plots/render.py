"""Render harness CSV outputs into PNG figures from a JSON figure spec.

The harness writes each experiment as one or more CSV files plus a JSON
figure spec describing panels, axes, and series.  This module draws those
panels with matplotlib and nothing else: every curve and band is read
straight from CSV columns, so rendering computes no statistics and never
modifies its inputs.  Work is synchronous and single threaded, and the
same spec and CSVs always produce byte-identical PNG output.

CSV paths inside a spec are resolved relative to the directory holding the
spec file, which is the directory the harness wrote its outputs into.
"""

import argparse
import csv
import json
import os
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

STYLE_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "figures.mplstyle")
# fixed metadata so the PNG writer never embeds run-dependent text
PNG_METADATA = {"Software": "airbreath-plots"}
SPEC_VERSION = 1
SPEC_SUFFIX = ".figure.json"
BAND_ALPHA = 0.25
PANEL_WIDTH = 4.6
PANEL_HEIGHT = 3.6


class PlotError(Exception):
    """A figure spec or CSV that cannot be rendered as requested."""


def load_spec(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PlotError(f"invalid JSON in {os.path.basename(path)}: {exc}") from exc
    version = spec.get("version") if isinstance(spec, dict) else None
    if version != SPEC_VERSION:
        raise PlotError(f"unsupported figure spec version {version!r} (expected {SPEC_VERSION})")
    if not spec.get("panels"):
        raise PlotError(f"figure spec {os.path.basename(path)} declares no panels")
    return spec


def read_rows(path):
    """Load one CSV as a list of dict rows, rejecting files with no data."""
    name = os.path.basename(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PlotError(f"empty CSV: {name}")
        rows = list(reader)
    if not rows:
        raise PlotError(f"empty CSV: {name}")
    return rows


def column(rows, name, csv_name):
    if name not in rows[0]:
        raise PlotError(f"missing column {name!r} in {csv_name}")
    values = []
    for row in rows:
        cell = row[name]
        try:
            values.append(float(cell))
        except (TypeError, ValueError):
            raise PlotError(
                f"non-numeric value {cell!r} in column {name!r} of {csv_name}"
            ) from None
    return values


def select_rows(rows, match, csv_name):
    """Keep rows whose cells equal every match entry, compared as text."""
    if not match:
        return rows
    for key in match:
        if key not in rows[0]:
            raise PlotError(f"missing column {key!r} in {csv_name}")
    picked = [row for row in rows if all(row[k] == str(v) for k, v in match.items())]
    if not picked:
        wanted = ", ".join(f"{k}={v}" for k, v in sorted(match.items()))
        raise PlotError(f"no rows match {wanted} in {csv_name}")
    return picked


def _field(mapping, key, where):
    try:
        return mapping[key]
    except (KeyError, TypeError):
        raise PlotError(f"{where} is missing required field {key!r}") from None


def draw_panel(ax, panel, base_dir):
    csv_name = _field(panel, "csv", "panel")
    rows = read_rows(os.path.join(base_dir, csv_name))
    x_spec = _field(panel, "x", "panel")
    x_name = _field(x_spec, "column", "panel x axis")
    for series in _field(panel, "series", "panel"):
        picked = select_rows(rows, series.get("match"), csv_name)
        xs = column(picked, x_name, csv_name)
        ys = column(picked, _field(series, "y", "series"), csv_name)
        if "band" in series:
            lo_name, hi_name = series["band"]
            lo = column(picked, lo_name, csv_name)
            hi = column(picked, hi_name, csv_name)
        elif "band_stderr" in series:
            # band edges are one column value away from the curve; nothing
            # is estimated here, the harness already did the statistics
            err = column(picked, series["band_stderr"], csv_name)
            lo = [y - e for y, e in zip(ys, err)]
            hi = [y + e for y, e in zip(ys, err)]
        else:
            lo = hi = None
        order = sorted(range(len(xs)), key=xs.__getitem__)
        xs = [xs[i] for i in order]
        ys = [ys[i] for i in order]
        (line,) = ax.plot(xs, ys, label=series.get("label"))
        if lo is not None:
            lo = [lo[i] for i in order]
            hi = [hi[i] for i in order]
            ax.fill_between(xs, lo, hi, color=line.get_color(), alpha=BAND_ALPHA, linewidth=0)
    ax.set_xlabel(x_spec.get("label", x_name))
    y_spec = panel.get("y", {})
    ax.set_ylabel(y_spec.get("label", ""))
    if x_spec.get("log"):
        ax.set_xscale("log")
    if y_spec.get("log"):
        ax.set_yscale("log")
    if panel.get("title"):
        ax.set_title(panel["title"])
    if any(s.get("label") for s in panel["series"]):
        ax.legend()


def output_path(spec_path):
    """Default PNG path: the spec file name with its suffix swapped for .png."""
    base = os.path.basename(spec_path)
    if base.endswith(SPEC_SUFFIX):
        stem = base[: -len(SPEC_SUFFIX)]
    else:
        stem = os.path.splitext(base)[0]
    return os.path.join(os.path.dirname(os.path.abspath(spec_path)), stem + ".png")


def render(spec_path, out_path=None):
    """Draw every panel of one figure spec and write a single PNG.

    Panels are laid out left to right in spec order unless the spec carries
    an explicit [rows, cols] layout.  Returns the written PNG path.
    """
    spec = load_spec(spec_path)
    base_dir = os.path.dirname(os.path.abspath(spec_path))
    panels = spec["panels"]
    layout = spec.get("layout")
    if layout is None:
        nrows, ncols = 1, len(panels)
    else:
        nrows, ncols = int(layout[0]), int(layout[1])
        if nrows * ncols < len(panels):
            raise PlotError(f"layout {nrows}x{ncols} cannot hold {len(panels)} panels")
    if out_path is None:
        out_path = output_path(spec_path)
    with plt.style.context(STYLE_PATH):
        fig, axes = plt.subplots(
            nrows,
            ncols,
            figsize=(PANEL_WIDTH * ncols, PANEL_HEIGHT * nrows),
            squeeze=False,
            constrained_layout=True,
        )
        flat = axes.ravel()
        try:
            for ax, panel in zip(flat, panels):
                draw_panel(ax, panel, base_dir)
            for ax in flat[len(panels):]:
                ax.set_axis_off()
            if spec.get("title"):
                fig.suptitle(spec["title"])
            fig.savefig(out_path, format="png", dpi=150, metadata=PNG_METADATA)
        finally:
            plt.close(fig)
    return out_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="airbreath-plots",
        description="render a harness figure spec and its CSV tables to PNG",
    )
    parser.add_argument("--spec", required=True, help="path to a figure spec JSON")
    parser.add_argument("--output", help="output PNG path (default: spec name with .png)")
    args = parser.parse_args(argv)
    try:
        out = render(args.spec, args.output)
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
