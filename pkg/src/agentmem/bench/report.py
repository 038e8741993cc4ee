"""Benchmark report output: stdout tables, JSON, CSV, and PNG figures.

Every suite writes <suite>.json, <suite>.csv, and <suite>.png side by
side in the output directory.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .suites import BenchReport

FIG_SIZE = (7.0, 4.2)
FIG_DPI = 130


def format_table(rows: list[dict]) -> str:
    if not rows:
        return "(no rows)"
    cols = list(rows[0].keys())
    for row in rows[1:]:
        for key in row:
            if key not in cols:
                cols.append(key)

    def cell(value) -> str:
        if value is None:
            return "-"
        if isinstance(value, float):
            return f"{value:.3f}"
        if isinstance(value, bool):
            return "yes" if value else "no"
        return str(value)

    table = [[cell(r.get(c)) for c in cols] for r in rows]
    widths = [max(len(c), *(len(t[i]) for t in table)) for i, c in enumerate(cols)]
    lines = [
        "  ".join(c.ljust(w) for c, w in zip(cols, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for t in table:
        lines.append("  ".join(v.ljust(w) for v, w in zip(t, widths)))
    return "\n".join(lines)


def print_report(report: BenchReport) -> None:
    print(f"\n== {report.suite} ==  ({report.environment})")
    for note in report.notes:
        print(f"note: {note}")
    print(format_table(report.rows))
    scalars = {
        k: v
        for k, v in report.summary.items()
        if isinstance(v, (int, float, str, bool))
    }
    if scalars:
        print("summary: " + ", ".join(
            f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
            for k, v in scalars.items()
        ))


def write_outputs(
    report: BenchReport, out_dir: str | Path, json_path: Optional[str | Path] = None
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    jpath = Path(json_path) if json_path else out / f"{report.suite}.json"
    jpath.write_text(json.dumps(report.to_dict(), indent=1), encoding="utf-8")
    written.append(jpath)

    cpath = out / f"{report.suite}.csv"
    if report.rows:
        cols: list[str] = []
        for row in report.rows:
            for key in row:
                if key not in cols:
                    cols.append(key)
        with open(cpath, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            writer.writerows(report.rows)
        written.append(cpath)

    fig = _figure_for(report)
    if fig is not None:
        fpath = out / f"{report.suite}.png"
        fig.savefig(fpath, dpi=FIG_DPI, bbox_inches="tight")
        plt.close(fig)
        written.append(fpath)
    return written


def _figure_for(report: BenchReport):
    maker = {
        "latency": _latency_fig,
        "concurrency": _concurrency_fig,
        "graph": _graph_fig,
        "ablation": _ablation_fig,
        "trust": _trust_fig,
    }.get(report.suite)
    if maker is None or not report.rows:
        return None
    return maker(report)


def _latency_fig(report: BenchReport):
    sizes = [r["memories"] for r in report.rows]
    med = [r["median_ms"] for r in report.rows]
    p95 = [r["p95_ms"] for r in report.rows]
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ax.plot(sizes, med, "o-", label="median")
    ax.plot(sizes, p95, "s--", label="p95")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("memories")
    ax.set_ylabel("recall latency (ms)")
    ax.set_title("Search latency by store size")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return fig


def _concurrency_fig(report: BenchReport):
    writers = [r["writers"] for r in report.rows]
    ops = [r["ops_per_sec"] for r in report.rows]
    p95 = [r["p95_ms"] for r in report.rows]
    fig, ax1 = plt.subplots(figsize=FIG_SIZE)
    ax1.bar([str(w) for w in writers], ops, color="#4878b0", label="ops/sec")
    ax1.set_xlabel("concurrent writers")
    ax1.set_ylabel("ops/sec")
    ax2 = ax1.twinx()
    ax2.plot([str(w) for w in writers], p95, "ro-", label="p95 latency")
    ax2.set_ylabel("p95 latency (ms)")
    ax1.set_title("Concurrent write throughput (zero contention errors)")
    return fig


def _graph_fig(report: BenchReport):
    sizes = [r["memories"] for r in report.rows]
    dur = [r["duration_s"] for r in report.rows]
    comm = [r["communities_l0"] for r in report.rows]
    fig, ax1 = plt.subplots(figsize=FIG_SIZE)
    ax1.plot(sizes, dur, "o-", color="#4878b0")
    ax1.set_xlabel("memories")
    ax1.set_ylabel("build time (s)", color="#4878b0")
    ax1.set_xscale("log")
    ax2 = ax1.twinx()
    ax2.plot(sizes, comm, "s--", color="#d65f5f")
    ax2.set_ylabel("top-level communities", color="#d65f5f")
    ax1.set_title("Knowledge-graph rebuild scaling")
    ax1.grid(True, alpha=0.3)
    return fig


def _ablation_fig(report: BenchReport):
    configs = [r["config"] for r in report.rows]
    import numpy as np

    x = np.arange(len(configs))
    width = 0.27
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ax.bar(x - width, [r["mrr"] for r in report.rows], width, label="MRR")
    ax.bar(x, [r["ndcg5"] for r in report.rows], width, label="NDCG@5")
    ax.bar(x + width, [r["ndcg10"] for r in report.rows], width, label="NDCG@10")
    ax.set_xticks(x)
    ax.set_xticklabels(configs, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_title("Layer ablation: retrieval quality")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    return fig


def _trust_fig(report: BenchReport):
    trajectory = report.summary.get("sleeper_trajectory") or []
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4.2))
    if trajectory:
        ax1.plot(range(1, len(trajectory) + 1), trajectory, color="#d65f5f")
        ax1.axhline(0.3, color="gray", linestyle="--", label="enforcement threshold")
        ax1.axvline(len(trajectory) // 2, color="gray", linestyle=":", label="switch point")
        ax1.set_xlabel("operation")
        ax1.set_ylabel("posterior trust")
        ax1.set_title("Sleeper agent trajectory")
        ax1.legend(fontsize=8)
    labels, benign, malicious = [], [], []
    for row in report.rows:
        labels.append(row["scenario"])
        benign.append(row.get("benign_trust") or 0.0)
        malicious.append(row.get("malicious_trust") or 0.0)
    import numpy as np

    x = np.arange(len(labels))
    ax2.bar(x - 0.18, benign, 0.36, label="benign")
    ax2.bar(x + 0.18, malicious, 0.36, label="malicious")
    ax2.axhline(0.3, color="gray", linestyle="--")
    ax2.set_xticks(x)
    ax2.set_xticklabels(labels, rotation=15, ha="right")
    ax2.set_ylabel("posterior trust")
    ax2.set_title("Trust separation by scenario")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    return fig
