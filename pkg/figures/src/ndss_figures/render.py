"""Render publication-style figures from ndss experiment CSVs.

Each figure kind binds to one CSV schema; missing columns or an empty file
abort before any drawing.  Rendering never re-runs estimators or
simulations: the only data reduction applied is a per-group median when a
CSV carries one row per seed and the figure needs one curve per group.
Output is deterministic (Agg backend, fixed dpi, fixed fonts, stable
ordering of plot elements), so identical CSVs yield identical image bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["FigureJob", "SchemaMismatchError", "EmptyCsvError", "prepare",
           "render", "KINDS"]

DPI = 150

# fixed styling per series key so images stay comparable across runs
_FAMILY_STYLE = {"uniform": ("C0", "o"), "gaussian": ("C1", "s"),
                 "laplace": ("C2", "^")}
_METHOD_STYLE = {"ols": ("C0", "o"), "causality": ("C1", "s")}
_DESIGN_STYLE = {"gaussian": ("C1", "-"), "uniform": ("C0", "--"),
                 "boundary": ("C3", "-.")}

_REQUIRED = {
    "fig5": ["sigma_v_sq", "T", "seed", "error_norm"],
    "fig6": ["family", "epsilon", "delta_mc", "delta_closed", "runs"],
    "fig7": ["T", "method", "seed", "frobenius_error"],
    "fig8a": ["noise_design", "k", "node", "state"],
    "fig8b": ["noise_design", "k", "deviation"],
    "fig8c": ["noise_design", "k", "topo_error_at_k"],
}

KINDS = tuple(_REQUIRED)


class SchemaMismatchError(ValueError):
    """The CSV lacks columns the figure kind requires."""


class EmptyCsvError(ValueError):
    """The CSV has no data rows."""


@dataclass(frozen=True)
class FigureJob:
    csv_path: str
    kind: str
    out_path: str
    log_x: Optional[bool] = None  # None = the kind's default
    log_y: Optional[bool] = None

    def __post_init__(self):
        if self.kind not in _REQUIRED:
            raise ValueError(f"unknown figure kind {self.kind!r}")


def _read_csv(path) -> dict[str, list[str]]:
    lines = [ln.rstrip("\n") for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise EmptyCsvError(f"{path}: empty CSV")
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    if not rows:
        raise EmptyCsvError(f"{path}: no data rows in CSV")
    return {name: [row[i] for row in rows] for i, name in enumerate(header)}


def _columns_for(job: FigureJob) -> dict[str, np.ndarray]:
    cols = _read_csv(job.csv_path)
    missing = [c for c in _REQUIRED[job.kind] if c not in cols]
    if missing:
        raise SchemaMismatchError(
            f"{job.csv_path}: missing columns {missing} for kind {job.kind}")
    out = {}
    for name, values in cols.items():
        if name in ("family", "method", "noise_design"):
            out[name] = np.asarray(values)
        else:
            out[name] = np.asarray([float(v) for v in values])
    return out


def _median_series(x, y, keys, key_values):
    """Per-key (sorted x, median y at each x) pairs, in stable key order."""
    series = {}
    for key in key_values:
        mask = keys == key
        xs = np.unique(x[mask])
        med = np.asarray([np.median(y[mask & (x == xv)]) for xv in xs])
        series[key] = (xs, med)
    return series


def prepare(job: FigureJob) -> dict:
    """Load and shape the plot series for a job (used by render and tests)."""
    cols = _columns_for(job)
    if job.kind == "fig5":
        groups = sorted(set(cols["sigma_v_sq"]))
        return {"series": _median_series(cols["T"], cols["error_norm"],
                                         cols["sigma_v_sq"], groups)}
    if job.kind == "fig6":
        out = {}
        for family in ("uniform", "gaussian", "laplace"):
            mask = cols["family"] == family
            order = np.argsort(cols["epsilon"][mask])
            out[family] = (cols["epsilon"][mask][order],
                           cols["delta_mc"][mask][order],
                           cols["delta_closed"][mask][order])
        return {"series": out}
    if job.kind == "fig7":
        methods = [m for m in ("ols", "causality") if m in set(cols["method"])]
        return {"series": _median_series(cols["T"], cols["frobenius_error"],
                                         cols["method"], methods)}
    designs = [d for d in ("gaussian", "uniform", "boundary")
               if d in set(cols["noise_design"])]
    if job.kind == "fig8a":
        out = {}
        for design in designs:
            dmask = cols["noise_design"] == design
            for node in sorted(set(cols["node"][dmask].astype(int))):
                mask = dmask & (cols["node"] == node)
                order = np.argsort(cols["k"][mask])
                out[(design, int(node))] = (cols["k"][mask][order],
                                            cols["state"][mask][order])
        return {"series": out, "designs": designs}
    value = "deviation" if job.kind == "fig8b" else "topo_error_at_k"
    out = {}
    for design in designs:
        mask = cols["noise_design"] == design
        ks = np.unique(cols["k"][mask])
        vals = np.asarray([np.median(cols[value][mask & (cols["k"] == kv)])
                           for kv in ks])
        keep = ~np.isnan(vals)
        out[design] = (ks[keep], vals[keep])
    return {"series": out}


def _finish(fig, ax, job: FigureJob, default_log_x: bool, default_log_y: bool,
            xlabel: str, ylabel: str, title: str):
    log_x = default_log_x if job.log_x is None else job.log_x
    log_y = default_log_y if job.log_y is None else job.log_y
    if log_x:
        ax.set_xscale("log")
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(job.out_path, dpi=DPI)
    plt.close(fig)


def render(job: FigureJob) -> str:
    """Render the job to its output image and return the path."""
    data = prepare(job)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if job.kind == "fig5":
        for sv, (xs, med) in data["series"].items():
            ax.plot(xs, med, marker="o", label=f"sigma_v^2 = {sv:g}")
        _finish(fig, ax, job, True, True, "observation window T",
                "median estimation error", "initial-state estimation error")
    elif job.kind == "fig6":
        for family, (color, marker) in _FAMILY_STYLE.items():
            if family not in data["series"]:
                continue
            eps, mc, closed = data["series"][family]
            ax.plot(eps, closed, color=color, label=f"{family} (closed form)")
            ax.plot(eps, mc, color=color, marker=marker, linestyle="none",
                    label=f"{family} (monte carlo)")
        _finish(fig, ax, job, False, False, "epsilon",
                "disclosure probability delta", "(eps, delta) state secrecy")
    elif job.kind == "fig7":
        for method, (color, marker) in _METHOD_STYLE.items():
            if method not in data["series"]:
                continue
            xs, med = data["series"][method]
            ax.plot(xs, med, color=color, marker=marker, label=method)
        _finish(fig, ax, job, True, True, "observation number T",
                "median Frobenius error", "topology inference error")
    elif job.kind == "fig8a":
        inset = ax.inset_axes([0.55, 0.55, 0.4, 0.4])
        for (design, node), (ks, states) in data["series"].items():
            color, style = _DESIGN_STYLE[design]
            label = design if node == 1 else None
            ax.plot(ks, states, color=f"C{node - 1}", linestyle=style,
                    linewidth=0.9, label=label)
            keep = ks < 20
            inset.plot(ks[keep], states[keep], color=f"C{node - 1}",
                       linestyle=style, linewidth=0.9)
        inset.set_title("k < 20", fontsize=8)
        _finish(fig, ax, job, False, False, "iteration k", "state",
                "defended state trajectories")
    elif job.kind == "fig8b":
        for design, (ks, vals) in data["series"].items():
            color, style = _DESIGN_STYLE[design]
            ax.plot(ks, vals, color=color, linestyle=style, label=design)
        _finish(fig, ax, job, False, True, "iteration k",
                "max deviation from consensus", "convergence accuracy")
    else:  # fig8c
        for design, (ks, vals) in data["series"].items():
            color, style = _DESIGN_STYLE[design]
            ax.plot(ks, vals, color=color, linestyle=style, label=design)
        _finish(fig, ax, job, False, False, "iteration k",
                "topology inference error", "attack error under defense noise")
    return job.out_path
