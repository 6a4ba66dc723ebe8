"""Bench report rendering: delimited per-file timings plus a figure.

The bench harness measures local/no-shim and latency-shimmed loads; the
absolute numbers are environment-dependent, so they are recorded, never
asserted.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .history import BenchReport

CSV_NAME = "load_times.csv"
FIGURE_NAME = "load_times.png"


def write_bench_report(report: BenchReport, out_dir: Path) -> tuple[Path, Path]:
    """Write load_times.csv and load_times.png into out_dir; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    csv_path = out_dir / CSV_NAME
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "ts", "filename", "seconds"])
        for i, (ts, name, seconds) in enumerate(report.per_file):
            writer.writerow([i, ts, name, f"{seconds:.6f}"])

    png_path = out_dir / FIGURE_NAME
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    indices = range(report.files)
    per_file_ms = [1000.0 * s for _, _, s in report.per_file]
    cumulative = []
    acc = 0.0
    for _, _, s in report.per_file:
        acc += s
        cumulative.append(acc)

    ax1.plot(indices, per_file_ms, lw=0.8)
    if report.files:
        ax1.axhline(1000.0 * report.s_per_file, color="tab:red", ls="--",
                    label=f"mean {1000.0 * report.s_per_file:.1f} ms/file")
        ax1.legend(loc="upper right", fontsize=8)
    ax1.set_ylabel("per-file load (ms)")
    ax1.set_title(f"segment load: {report.files} files, {report.total_s:.2f} s total")

    ax2.plot(indices, cumulative, lw=1.2, color="tab:green")
    ax2.set_xlabel("file index")
    ax2.set_ylabel("cumulative (s)")
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return csv_path, png_path
