"""Optional PNG renderings of the figure series (Agg backend, no display needed)."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be chosen first)

from .ehr import ObservationWindow  # noqa: E402
from .report import fig3_series, fig4_best  # noqa: E402
from .results import NA, ResultsTable  # noqa: E402

_META = {"Software": None}


def _xlabels(windows):
    return sorted(set(windows), key=lambda w: ObservationWindow.parse(w).sort_key)


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_fig3(results: ResultsTable, out_dir: str | Path) -> list[Path]:
    """One figure per (mode, split): mean AUROC per window per source, with the variant band."""
    series = defaultdict(list)
    for task, mode, source, split, window, n, mean, _sd, lo, hi in fig3_series(results):
        if mean != NA:
            series[(mode, split)].append((task, source, window, float(mean), float(lo), float(hi)))
    paths = []
    for (mode, split), pts in series.items():
        tasks = list(dict.fromkeys(p[0] for p in pts))
        fig, axes = plt.subplots(1, len(tasks), figsize=(5 * len(tasks), 3.6), squeeze=False, sharey=True)
        for ax, task in zip(axes[0], tasks):
            sub = [p for p in pts if p[0] == task]
            xs = _xlabels(p[2] for p in sub)
            for source in dict.fromkeys(p[1] for p in sub):
                by_w = {p[2]: p for p in sub if p[1] == source}
                idx = [i for i, w in enumerate(xs) if w in by_w]
                m = [by_w[xs[i]][3] for i in idx]
                ax.plot(idx, m, marker="o", label=source)
                # the normal band can leave [0, 1]; clip for display only
                lo = np.clip([by_w[xs[i]][4] for i in idx], 0.0, 1.0)
                hi = np.clip([by_w[xs[i]][5] for i in idx], 0.0, 1.0)
                ax.fill_between(idx, lo, hi, alpha=0.2)
            ax.set_xticks(range(len(xs)), xs)
            ax.set_title(f"{task} ({mode}, {split})")
            ax.set_xlabel("window (months)")
            ax.grid(alpha=0.3)
        axes[0][0].set_ylabel("mean AUROC")
        axes[0][-1].legend(fontsize=8)
        fig.tight_layout()
        paths.append(_save(fig, Path(out_dir) / f"fig3_{mode}_{split}.png"))
    return paths


def plot_fig4(results: ResultsTable, out_dir: str | Path) -> list[Path]:
    """One figure per split: best AUROC per window, a panel per (task, source), a line per mode."""
    rows = [r for r in fig4_best(results) if r[6] != NA]
    paths = []
    for split in dict.fromkeys(r[2] for r in rows):
        sub = [r for r in rows if r[2] == split]
        panels = list(dict.fromkeys((r[0], r[1]) for r in sub))
        fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 3.4), squeeze=False, sharey=True)
        for ax, (task, source) in zip(axes[0], panels):
            pts = [r for r in sub if r[0] == task and r[1] == source]
            xs = _xlabels(r[3] for r in pts)
            for mode in dict.fromkeys(r[4] for r in pts):
                by_w = {r[3]: float(r[6]) for r in pts if r[4] == mode}
                idx = [i for i, w in enumerate(xs) if w in by_w]
                ax.plot(idx, [by_w[xs[i]] for i in idx], marker="s", label=mode)
            ax.set_xticks(range(len(xs)), xs)
            ax.set_title(f"{task} / {source}")
            ax.grid(alpha=0.3)
        axes[0][0].set_ylabel(f"best AUROC ({split})")
        axes[0][-1].legend(fontsize=8)
        fig.tight_layout()
        paths.append(_save(fig, Path(out_dir) / f"fig4_{split}.png"))
    return paths


def render_figures(results: ResultsTable, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir) / "figures"
    return plot_fig3(results, out) + plot_fig4(results, out)
