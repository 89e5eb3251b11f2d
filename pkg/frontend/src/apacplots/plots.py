"""Figure builders for the two CSV schemas.

Trajectory exports carry rows (sample_id, t, x_1, ..., x_d); history files
carry (iter, l0, lt, lhjb, monitor_residual, rel_error_phi, rel_error_rho).
"""

import csv
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import LinearSegmentedColormap

from apacplots import obstacles

# blue at departure, red at arrival
TIME_CMAP = LinearSegmentedColormap.from_list("departure-arrival",
                                              [(0.0, 0.0, 1.0), (1.0, 0.0, 0.0)])

KINDS = ("trajectories", "residuals", "errors")

CURVE_COLUMNS = {
    "residuals": ("monitor_residual",),
    "errors": ("rel_error_phi", "rel_error_rho"),
}


class SchemaError(ValueError):
    pass


@dataclass
class PlotSpec:
    inputs: list
    output: str
    kind: str
    xlim: tuple = None
    ylim: tuple = None
    dims: tuple = (1, 2)          # 1-based coordinate pair to project
    obstacle: str = None          # twin | bottleneck | symmetric
    columns: tuple = None         # override for curve plots

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown plot kind {self.kind!r}")
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")


def read_csv_columns(path, wanted):
    """Columns by name as float arrays; blank cells become NaN."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns: {', '.join(missing)}")
        rows = [[float(row[c]) if row[c] != "" else np.nan for c in wanted]
                for row in reader]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    return {c: data[:, i] for i, c in enumerate(wanted)}


def time_colors(t):
    """Map times to the departure-arrival colormap (t is scaled to [0, 1])."""
    t = np.asarray(t, dtype=np.float64)
    span = t.max() - t.min()
    unit = (t - t.min()) / span if span > 0 else np.zeros_like(t)
    return TIME_CMAP(unit)


def plot_trajectories(spec):
    if len(spec.inputs) != 1:
        raise SchemaError("trajectory plots take exactly one input CSV")
    cx, cy = (f"x_{spec.dims[0]}", f"x_{spec.dims[1]}")
    cols = read_csv_columns(spec.inputs[0], ["sample_id", "t", cx, cy])

    fig, ax = plt.subplots(figsize=(5, 5))
    if spec.obstacle:
        lo_x, hi_x = spec.xlim or (cols[cx].min() - 1, cols[cx].max() + 1)
        lo_y, hi_y = spec.ylim or (cols[cy].min() - 1, cols[cy].max() + 1)
        xs = np.linspace(lo_x, hi_x, 400)
        ys = np.linspace(lo_y, hi_y, 400)
        mask = obstacles.region_mask(spec.obstacle, xs, ys)
        ax.contourf(xs, ys, mask.astype(float), levels=[0.5, 1.5],
                    colors="none", hatches=["////"])
        ax.contour(xs, ys, mask.astype(float), levels=[0.5],
                   colors="dimgray", linewidths=0.8)
    ax.scatter(cols[cx], cols[cy], c=time_colors(cols["t"]), s=6, linewidths=0)
    ax.set_xlabel(f"$x_{{{spec.dims[0]}}}$")
    ax.set_ylabel(f"$x_{{{spec.dims[1]}}}$")
    if spec.xlim:
        ax.set_xlim(spec.xlim)
    if spec.ylim:
        ax.set_ylim(spec.ylim)
    ax.set_aspect("equal", adjustable="box")
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return spec.output


def plot_curves(spec):
    columns = spec.columns or CURVE_COLUMNS[spec.kind]
    fig, ax = plt.subplots(figsize=(6, 4))
    drawn = 0
    for path in spec.inputs:
        cols = read_csv_columns(path, ["iter", *columns])
        stem = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
        for col in columns:
            keep = ~np.isnan(cols[col])
            if not np.any(keep):
                continue
            label = f"{stem}: {col}" if (len(spec.inputs) > 1 or len(columns) > 1) \
                else stem
            ax.plot(cols["iter"][keep], cols[col][keep], label=label)
            drawn += 1
    if drawn == 0:
        raise SchemaError("no plottable values in the requested columns")
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel(", ".join(columns))
    if spec.xlim:
        ax.set_xlim(spec.xlim)
    if spec.ylim:
        ax.set_ylim(spec.ylim)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return spec.output


def render(spec):
    if spec.kind == "trajectories":
        return plot_trajectories(spec)
    return plot_curves(spec)
