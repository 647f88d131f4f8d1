"""CSV persistence and optional SVG charts.

CSV files are comma-delimited UTF-8 with a header row; numbers are written
with ``repr`` so the output never depends on the locale.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .learning import LearningSummary
from .sim import BatchResult

__all__ = [
    "write_csv",
    "sibling",
    "simulation_rows",
    "summary_rows",
    "play_count_rows",
    "learning_rows",
    "regret_rows",
    "save_curves_svg",
]

SIM_HEADER = ["run_id", "seed", "t", "policy", "arm", "reward", "cumulative"]


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def sibling(path: str | Path, suffix: str) -> Path:
    """``out.csv`` -> ``out_<suffix>.csv``."""
    path = Path(path)
    return path.with_name(f"{path.stem}_{suffix}{path.suffix or '.csv'}")


def simulation_rows(batch: BatchResult):
    for policy, traces in batch.traces.items():
        for tr in traces:
            run_id = f"{policy.value}-{tr.seed}"
            cum = tr.cumulative
            for t in range(tr.horizon):
                yield run_id, tr.seed, t + 1, policy.value, int(tr.actions[t]), int(tr.rewards[t]), int(cum[t])


def summary_rows(batch: BatchResult):
    for policy, s in batch.summaries.items():
        yield policy.value, len(batch.seeds), batch.horizon, s.final_mean, s.final_stderr


SUMMARY_HEADER = ["policy", "n_seeds", "horizon", "final_mean", "final_stderr"]
PLAYS_HEADER = ["policy", "arm", "mean_plays", "stderr_plays"]


def play_count_rows(batch: BatchResult):
    for policy, s in batch.summaries.items():
        counts = s.play_counts.astype(float)
        n = counts.shape[0]
        se = counts.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(counts.shape[1])
        for arm, (m, e) in enumerate(zip(counts.mean(axis=0), se)):
            yield policy.value, arm, float(m), float(e)


def learning_header(n_arms: int) -> list[str]:
    return SIM_HEADER + ["regret", "mismatch"] + [f"true_mass_arm{i}" for i in range(n_arms)]


def learning_rows(summary: LearningSummary):
    for run in summary.runs:
        tr, rep = run.trace, run.report
        run_id = f"learn-{tr.seed}"
        cum = tr.cumulative
        flags = np.diff(rep.mismatch, prepend=0)
        for t in range(tr.horizon):
            yield (run_id, tr.seed, t + 1, tr.policy.value, int(tr.actions[t]), int(tr.rewards[t]), int(cum[t]),
                   float(rep.regret[t]), int(flags[t]), *(float(x) for x in rep.true_mass[t]))


def regret_header(n_arms: int) -> list[str]:
    return (["t", "regret_mean", "regret_stderr", "random_regret_mean", "mismatch_mean"]
            + [f"true_mass_mean_arm{i}" for i in range(n_arms)])


def regret_rows(summary: LearningSummary):
    for t in range(summary.regret_mean.shape[0]):
        yield (t + 1, float(summary.regret_mean[t]), float(summary.regret_stderr[t]),
               float(summary.random_regret_mean[t]), float(summary.mismatch_mean[t]),
               *(float(x) for x in summary.true_mass_mean[t]))


def save_curves_svg(curves: dict[str, tuple[np.ndarray, np.ndarray]], path: str | Path,
                    title: str = "", ylabel: str = "cumulative reward") -> Path:
    """Mean curves with a one-standard-error band.  Needs matplotlib (the ``plot`` extra)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, (mean, se) in curves.items():
        t = np.arange(1, mean.shape[0] + 1)
        ax.plot(t, mean, label=label, linewidth=1.4)
        ax.fill_between(t, mean - se, mean + se, alpha=0.25)
    ax.set_xlabel("time step")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
