"""Delimited output and figures for difftest summaries."""

from __future__ import annotations

import csv
from pathlib import Path

from .difftest import Summary


def write_csv(summary: Summary, path: Path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rule", "pass", "fail", "vacuous"])
        w.writerows(summary.rows())
    return path


def plot_summary(summary: Summary, path: Path) -> Path:
    """Stacked bar chart of pass/fail/vacuous counts per rule."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = summary.rows()
    names = [r[0] for r in rows]
    passed = [r[1] for r in rows]
    failed = [r[2] for r in rows]
    vacuous = [r[3] for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(names) + 2), 4))
    xs = range(len(names))
    ax.bar(xs, passed, label="pass", color="#4c9a2a")
    ax.bar(xs, vacuous, bottom=passed, label="vacuous", color="#b0b0b0")
    ax.bar(xs, failed, bottom=[p + v for p, v in zip(passed, vacuous)], label="fail", color="#c0392b")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(names, rotation=70, fontsize=7)
    ax.set_ylabel("cases")
    ax.set_title(f"difftest seed={summary.seed}, {summary.cases} cases")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_report(summary: Summary, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return write_csv(summary, out / "summary.csv"), plot_summary(summary, out / "summary.png")
