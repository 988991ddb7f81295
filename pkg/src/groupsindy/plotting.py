"""SVG figures drawn from the CSV tables an experiment report writes."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "groupsindy"  # stable element ids
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _read(path: Path) -> tuple[list[str], np.ndarray, list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    numeric = []
    for row in body:
        vals = []
        for v in row:
            try:
                vals.append(float(v))
            except ValueError:
                vals.append(np.nan)
        numeric.append(vals)
    return header, np.array(numeric, dtype=float).reshape(len(body), len(header)), body


def _save(fig, path: Path) -> Path:
    # fixed metadata keeps the SVG byte-stable between runs
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def plot_trajectories(csv_path, svg_path, group_col: str = "source") -> Path:
    """Phase-space plot: x1 vs x2 (or x1 vs t for scalar states), one line per group."""
    header, data, _ = _read(Path(csv_path))
    g = header.index(group_col) if group_col in header else None
    value_cols = [k for k, h in enumerate(header) if h not in (group_col, "t")]
    t_col = header.index("t")
    fig, ax = plt.subplots(figsize=(6, 4.5))
    groups = np.unique(data[:, g]) if g is not None else [None]
    for key in groups:
        rows = data if key is None else data[data[:, g] == key]
        label = None if key is None else f"{group_col} {int(key)}"
        if len(value_cols) >= 2:
            ax.plot(rows[:, value_cols[0]], rows[:, value_cols[1]], lw=0.7, label=label)
        else:
            ax.plot(rows[:, t_col], rows[:, value_cols[0]], lw=0.7, label=label)
    if len(value_cols) >= 2:
        ax.set_xlabel(header[value_cols[0]])
        ax.set_ylabel(header[value_cols[1]])
    else:
        ax.set_xlabel("t")
        ax.set_ylabel(header[value_cols[0]])
    if g is not None and len(groups) <= 10:
        ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, Path(svg_path))


def plot_coefficient_map(csv_path, svg_path) -> Path:
    """Segment-by-term image of recovered coefficients."""
    header, data, _ = _read(Path(csv_path))
    seg = data[:, header.index("segment")].astype(int)
    term = data[:, header.index("term_index")].astype(int)
    val = data[:, header.index("coefficient")]
    img = np.zeros((term.max() + 1, seg.max()))
    img[term, seg - 1] = val
    fig, ax = plt.subplots(figsize=(7, 4))
    lim = np.max(np.abs(img)) or 1.0
    im = ax.imshow(img, aspect="auto", cmap="RdBu_r", vmin=-lim, vmax=lim,
                   extent=(0.5, seg.max() + 0.5, term.max() + 0.5, -0.5))
    ax.set_xlabel("segment")
    ax.set_ylabel("term index")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return _save(fig, Path(svg_path))


def plot_bars(csv_path, svg_path, x: str, y: str) -> Path:
    header, data, _ = _read(Path(csv_path))
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(data[:, header.index(x)], data[:, header.index(y)])
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    fig.tight_layout()
    return _save(fig, Path(svg_path))


def plot_trace(csv_path, svg_path) -> Path:
    """Objective against iteration, one line per component, log scale."""
    header, data, _ = _read(Path(csv_path))
    comp, it, F = (data[:, header.index(c)] for c in ("component", "iteration", "F"))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for j in np.unique(comp):
        sel = comp == j
        ax.plot(it[sel], F[sel], marker="o", ms=3, label=f"component {int(j)}")
    if np.all(F > 0):
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("F")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, Path(svg_path))


def render_report_figures(directory) -> list[Path]:
    """Render an SVG next to every known figure CSV found in ``directory``."""
    d = Path(directory)
    out = []
    if (d / "state_space.csv").exists():
        header = _read(d / "state_space.csv")[0]
        group = "regime" if "regime" in header else "source"
        out.append(plot_trajectories(d / "state_space.csv", d / "state_space.svg", group))
    if (d / "velocity_space.csv").exists():
        out.append(plot_trajectories(d / "velocity_space.csv", d / "velocity_space.svg"))
    if (d / "coefficient_map.csv").exists():
        out.append(plot_coefficient_map(d / "coefficient_map.csv", d / "coefficient_map.svg"))
    if (d / "objective_trace.csv").exists():
        out.append(plot_trace(d / "objective_trace.csv", d / "objective_trace.svg"))
    if (d / "segment_residuals.csv").exists():
        out.append(plot_bars(d / "segment_residuals.csv", d / "segment_residuals.svg", "segment", "residual"))
    return out
