"""Static SVG line charts for filter trajectories and error curves."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import EvalReport, PipelineRun  # noqa: E402

# fixed ids and no timestamp keep repeated runs byte-identical
matplotlib.rcParams["svg.hashsalt"] = "cvqueue"


def _save(fig, path, provenance: str | None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None, "Creator": "cvqueue"}
    if provenance:
        metadata["Description"] = provenance
    fig.savefig(path, format="svg", metadata=metadata)
    plt.close(fig)
    return path


def plot_parameter_trajectories(run: PipelineRun, path, title: str = "", provenance: str | None = None) -> Path:
    """Filtered lambda and p against the truth, one panel per parameter."""
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    cycles = np.arange(run.n_true.size)
    for ax, attr, truth, label in ((axes[0], "lam", run.lam_true, "arrival rate [veh/s]"),
                                   (axes[1], "p", run.p_true, "penetration rate")):
        ax.step(cycles, truth, where="mid", color="black", lw=1.5, label="truth")
        for name, trace in run.filters.items():
            ax.plot(cycles, getattr(trace, attr), lw=1.0, label=name)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        ax.legend(loc="best", fontsize=8)
    axes[-1].set_xlabel("cycle")
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    return _save(fig, path, provenance)


def plot_queue_estimates(run: PipelineRun, path, estimators: Iterable[str] | None = None,
                         title: str = "", provenance: str | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(9, 4))
    cycles = np.arange(run.n_true.size)
    ax.plot(cycles, run.n_true, color="black", lw=1.5, label="true N")
    for name in estimators or run.estimates:
        if name in ("QLE1", "QLE2", "QLE3"):
            continue
        ax.plot(cycles, run.estimates[name].n_hat, lw=1.0, label=name)
    ax.set_xlabel("cycle")
    ax.set_ylabel("queue length [veh]")
    ax.grid(alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path, provenance)


def plot_error_vs_p(reports: Iterable[EvalReport], path, group_of=None, p_of=None,
                    provenance: str | None = None) -> Path:
    """sqrt(V(D)) against penetration rate, one panel per arrival rate.

    ``group_of`` and ``p_of`` map a report's ``config_id`` to its panel key and
    p value; the defaults parse ids of the form ``lam<value>_p<value>``.
    """
    group_of = group_of or (lambda cid: cid.split("_p")[0])
    p_of = p_of or (lambda cid: float(cid.split("_p")[1]))
    panels: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for r in reports:
        panels[group_of(r.config_id)][r.estimator_id].append((p_of(r.config_id), r.sqrt_vd))

    keys = sorted(panels)
    fig, axes = plt.subplots(1, len(keys), figsize=(3.2 * len(keys), 3.4), squeeze=False)
    for ax, key in zip(axes[0], keys):
        for name, pts in panels[key].items():
            pts.sort()
            ax.plot([x for x, _ in pts], [y for _, y in pts], marker="o", ms=3, lw=1.0, label=name)
        ax.set_title(key)
        ax.set_xlabel("p")
        ax.set_yscale("log")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("sqrt(V(D)) [veh]")
    axes[0][-1].legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path, provenance)
