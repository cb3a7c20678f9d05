"""Figure rendering for the report outputs.

Every function takes already-computed results and saves one PNG next to the
delimited data it illustrates.  Uses the Agg backend so runs work headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

from .dynamics import PerturbPair, SetTrace  # noqa: E402
from .network import SolveResult  # noqa: E402
from .tcoeff import EnsembleRecord  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_ensemble_scatter(records: Sequence[EnsembleRecord], path: str | Path) -> Path:
    """Coefficient vs resistance, one color per concentration."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    concs = sorted({round(r.c_v, 12) for r in records})
    cmap = plt.get_cmap("viridis")
    for i, c in enumerate(concs):
        rs = [r for r in records if round(r.c_v, 12) == c]
        ax.scatter(
            [r.r0 for r in rs],
            [r.t_alpha * 1e3 for r in rs],
            s=12,
            alpha=0.6,
            color=cmap(i / max(len(concs) - 1, 1)),
            label=f"{c:.0%}",
        )
    ax.axhline(0.0, color="gray", lw=0.8, ls="--")
    ax.set_xscale("log")
    ax.set_xlabel("R0 (ohm)")
    ax.set_ylabel("T_alpha (1e-3 / K)")
    ax.legend(title="vacancy conc.", fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_current_map(result: SolveResult, density: np.ndarray, path: str | Path) -> Path:
    """Bond currents drawn as line segments shaded by normalized magnitude."""
    grid = result.grid
    from .lattice import bond_arrays

    a_idx, b_idx, _ = bond_arrays(grid)
    cols = grid.cols
    segs = []
    for a, b in zip(a_idx, b_idx):
        ra, ca = divmod(int(a), cols)
        rb, cb = divmod(int(b), cols)
        segs.append([(ca, -ra), (cb, -rb)])
    lc = LineCollection(segs, cmap="inferno", array=density, linewidths=1.5)
    fig, ax = plt.subplots(figsize=(4, 5))
    ax.add_collection(lc)
    occ_r, occ_c = np.nonzero(grid.occupied)
    ax.scatter(occ_c, -occ_r, s=4, c="k", zorder=3)
    ax.set_xlim(-1, cols)
    ax.set_ylim(-grid.rows, 1)
    ax.set_aspect("equal")
    ax.set_axis_off()
    fig.colorbar(lc, ax=ax, label="normalized |I|")
    return _save(fig, path)


def plot_set_traces(traces: Sequence[SetTrace], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for tr in traces:
        color = "tab:red" if tr.final_t_alpha > 0 else "tab:blue"
        ax.plot(np.array(tr.pulse_conductances) * 1e6, lw=0.8, alpha=0.6, color=color)
    if traces:
        ax.axhline(traces[0].target_g * 1e6, color="k", ls="--", lw=0.8)
    ax.set_xlabel("pulse index")
    ax.set_ylabel("read conductance (uS)")
    ax.set_title("red: final T_alpha > 0, blue: < 0", fontsize=9)
    fig.tight_layout()
    return _save(fig, path)


def plot_perturb_shift(pairs: Sequence[PerturbPair], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.scatter(
        [p.before.r0 for p in pairs],
        [p.before.t_alpha * 1e3 for p in pairs],
        s=14, alpha=0.6, label="before",
    )
    ax.scatter(
        [p.after.r0 for p in pairs],
        [p.after.t_alpha * 1e3 for p in pairs],
        s=14, alpha=0.6, marker="x", label="after",
    )
    ax.axhline(0.0, color="gray", lw=0.8, ls="--")
    ax.set_xscale("log")
    ax.set_xlabel("R0 (ohm)")
    ax.set_ylabel("T_alpha (1e-3 / K)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_accuracy_sweep(summary_rows: Sequence[dict], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for comp, style, label in ((0, "o--", "uncompensated"), (1, "s-", "compensated")):
        rows = sorted(
            (r for r in summary_rows if r["compensated_flag"] == comp),
            key=lambda r: r["temperature_K"],
        )
        if not rows:
            continue
        temps = [r["temperature_K"] for r in rows]
        ax.plot(temps, [100 * r["mean_accuracy"] for r in rows], style, label=f"{label} (mean)")
        ax.fill_between(
            temps,
            [100 * r["p5_accuracy"] for r in rows],
            [100 * r["mean_accuracy"] for r in rows],
            alpha=0.15,
        )
    ax.set_xlabel("temperature (K)")
    ax.set_ylabel("accuracy (%)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_training_curve(losses: Sequence[float], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(range(len(losses)), losses, "o-")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    fig.tight_layout()
    return _save(fig, path)
