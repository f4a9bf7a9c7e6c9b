"""Report output: per-metric TSV files and matplotlib figures from benchmark rows."""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bench import ALGORITHMS, BenchRow, aggregate, commonly_solved, summary_table  # noqa: E402

EMPTY = "EMPTY"


def _algorithms(rows: Sequence[BenchRow]) -> list[str]:
    present = {r.algorithm for r in rows}
    return [a for a in ALGORITHMS if a in present] + sorted(present - set(ALGORITHMS))


def metric_tables(rows: Sequence[BenchRow]) -> dict[str, str]:
    """TSV text per metric, one line per n_objects and one column (group) per algorithm."""
    aggs = {(a.algorithm, a.n_objects): a for a in aggregate(rows)}
    algs = _algorithms(rows)
    sizes = sorted({r.n_objects for r in rows})
    tables = {}

    def count_table(fn):
        lines = ["n_objects\t" + "\t".join(algs)]
        for n in sizes:
            vals = [fn(aggs[(a, n)]) if (a, n) in aggs else EMPTY for a in algs]
            lines.append(f"{n}\t" + "\t".join(vals))
        return "\n".join(lines) + "\n"

    tables["success_rate"] = count_table(lambda a: f"{a.success_rate:.4f}")
    tables["timeouts"] = count_table(lambda a: str(a.timeout))
    tables["infeasible"] = count_table(lambda a: str(a.infeasible))

    def quart_table(attr):
        head = ["n_objects"] + [f"{a}_{q}" for a in algs for q in ("q1", "median", "q3")]
        lines = ["\t".join(head)]
        for n in sizes:
            cells = []
            for a in algs:
                q = getattr(aggs[(a, n)], attr) if (a, n) in aggs else None
                cells += [f"{v:.4f}" for v in q] if q else [EMPTY] * 3
            lines.append(f"{n}\t" + "\t".join(cells))
        return "\n".join(lines) + "\n"

    tables["actions"] = quart_table("actions")
    tables["runtime"] = quart_table("runtime")
    return tables


def _grouped_bars(ax, sizes, algs, values, ylabel):
    width = 0.8 / max(len(algs), 1)
    x = np.arange(len(sizes))
    for k, a in enumerate(algs):
        ax.bar(x + (k - (len(algs) - 1) / 2) * width, values[a], width, label=a)
    ax.set_xticks(x, [str(n) for n in sizes])
    ax.set_xlabel("number of objects")
    ax.set_ylabel(ylabel)


def _grouped_boxes(ax, sizes, algs, data, ylabel):
    width = 0.8 / max(len(algs), 1)
    for k, a in enumerate(algs):
        pos = np.arange(len(sizes)) + (k - (len(algs) - 1) / 2) * width
        series = [data[a][i] if data[a][i] else [np.nan] for i in range(len(sizes))]
        bp = ax.boxplot(series, positions=pos, widths=width * 0.9, patch_artist=True,
                        manage_ticks=False)
        color = f"C{k}"
        for box in bp["boxes"]:
            box.set_facecolor(color)
        bp["boxes"][0].set_label(a)
    ax.set_xticks(np.arange(len(sizes)), [str(n) for n in sizes])
    ax.set_xlabel("number of objects")
    ax.set_ylabel(ylabel)


def render_figures(rows: Sequence[BenchRow], out_dir) -> list[str]:
    """Two PNGs: outcome counts and the commonly-solved action/runtime distributions."""
    aggs = {(a.algorithm, a.n_objects): a for a in aggregate(rows)}
    algs = _algorithms(rows)
    sizes = sorted({r.n_objects for r in rows})
    paths = []

    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    _grouped_bars(a1, sizes, algs, {a: [aggs[(a, n)].success_rate if (a, n) in aggs else 0
                                        for n in sizes] for a in algs}, "success rate")
    a1.set_ylim(0, 1.05)
    _grouped_bars(a2, sizes, algs, {a: [aggs[(a, n)].timeout if (a, n) in aggs else 0
                                        for n in sizes] for a in algs}, "timed-out trials")
    a1.legend(fontsize=8)
    fig.tight_layout()
    p = os.path.join(out_dir, "outcomes.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    common = commonly_solved(rows)
    solved = [r for r in rows if (r.trial_id, r.n_objects) in common]
    fig, (b1, b2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for ax, attr, label in ((b1, "n_actions", "actions"), (b2, "elapsed_s", "runtime (s)")):
        data = {a: [[getattr(r, attr) for r in solved if r.algorithm == a and r.n_objects == n]
                    for n in sizes] for a in algs}
        _grouped_boxes(ax, sizes, algs, data, label)
    if not solved:
        b1.set_title("no trial solved by every algorithm", fontsize=9)
    else:
        b1.legend(fontsize=8)
    fig.tight_layout()
    p = os.path.join(out_dir, "solved_subset.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths


def write_report(rows: Sequence[BenchRow], out_dir, figures: bool = True) -> list[str]:
    """Summary table, per-metric TSVs and (optionally) figures; returns the written paths."""
    if not rows:
        raise ValueError("no result rows to report")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    p = os.path.join(out_dir, "summary.tsv")
    with open(p, "w") as f:
        f.write(summary_table(aggregate(rows)))
    written.append(p)
    for name, text in metric_tables(rows).items():
        p = os.path.join(out_dir, f"{name}.tsv")
        with open(p, "w") as f:
            f.write(text)
        written.append(p)
    if figures:
        written += render_figures(rows, out_dir)
    return written
