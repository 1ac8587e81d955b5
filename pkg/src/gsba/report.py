"""Experiment output: machine-readable records, a human-readable summary
table, and matplotlib figures rendered next to the delimited files.

Directory layout written by `write_report`:
    config.json        config snapshot
    summary.json       metrics (ASR, avg steps, ledger, query counts)
    summary.txt        table mirroring the result layout of the harness
    outcomes.ndjson    one pixel-free record per attacked sample
    histogram.csv      10-bin step histogram
    adversarial.npz    original/adversarial pixel pairs of verified successes
    histogram.png      step-histogram bar chart
    examples.png       image grid: originals vs adversarial examples
Budget sweeps additionally write sweep.csv and sweep.png.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .harness import ExperimentReport


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def summary_table(reports: dict[str, ExperimentReport]) -> str:
    """Rows of (attack, ASR %, avg steps) like the tables in the write-ups."""
    name_w = max([len(k) for k in reports] + [8])
    lines = [f"{'attack':<{name_w}}  {'ASR':>7}  {'AVG steps':>9}"]
    lines.append("-" * (name_w + 20))
    for name, rep in reports.items():
        asr = f"{100 * rep.asr:.1f}%"
        steps = _fmt(rep.avg_steps)
        lines.append(f"{name:<{name_w}}  {asr:>7}  {steps:>9}")
    return "\n".join(lines) + "\n"


def write_histogram_csv(path, report: ExperimentReport) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_left", "bin_right", "count"])
        edges = report.histogram_edges
        for i, count in enumerate(report.step_histogram):
            writer.writerow([edges[i], edges[i + 1], count])


def render_histogram(path, report: ExperimentReport, title: str = "steps to success") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    edges = np.asarray(report.histogram_edges)
    lefts, widths = edges[:-1], np.diff(edges)
    if np.allclose(widths, 0):  # all successes at step 1
        ax.bar(range(1, 11), report.step_histogram, color="#4878d0")
        ax.set_xticks(range(1, 11))
    else:
        ax.bar(lefts, report.step_histogram, width=widths, align="edge", color="#4878d0")
    ax.set_xlabel("attack steps")
    ax.set_ylabel("verified successes")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_examples_grid(path, report: ExperimentReport, max_pairs: int = 8) -> None:
    """Top row originals, bottom row the corresponding adversarial images."""
    pairs = [(o.original, o.adversarial) for o in report.outcomes if o.verified and o.adversarial is not None]
    pairs = pairs[:max_pairs]
    if not pairs:
        return
    fig, axes = plt.subplots(2, len(pairs), figsize=(1.2 * len(pairs), 2.6), squeeze=False)
    for j, (orig, adv) in enumerate(pairs):
        for row, img in enumerate((orig, adv)):
            arr = img.numpy()
            arr = arr[0] if arr.shape[0] == 1 else arr.transpose(1, 2, 0)
            axes[row][j].imshow(arr, cmap="gray", vmin=0, vmax=1)
            axes[row][j].set_axis_off()
    axes[0][0].set_title("original", fontsize=8, loc="left")
    axes[1][0].set_title("adversarial", fontsize=8, loc="left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(out_dir, report: ExperimentReport, name: str = "attack") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as f:
        json.dump(report.config, f, indent=2, default=str)
    with open(out / "summary.json", "w") as f:
        json.dump(report.summary(), f, indent=2)
    with open(out / "summary.txt", "w") as f:
        f.write(summary_table({name: report}))
    with open(out / "outcomes.ndjson", "w") as f:
        for o in report.outcomes:
            f.write(json.dumps(o.record()) + "\n")
    write_histogram_csv(out / "histogram.csv", report)
    verified = [o for o in report.outcomes if o.verified and o.adversarial is not None]
    if verified:
        np.savez_compressed(
            out / "adversarial.npz",
            sample_ids=np.array([o.sample_id for o in verified]),
            originals=np.stack([o.original.numpy() for o in verified]),
            adversarials=np.stack([o.adversarial.numpy() for o in verified]),
        )
    render_histogram(out / "histogram.png", report, title=f"{name}: steps to success")
    render_examples_grid(out / "examples.png", report)
    return out


def write_sweep(out_dir, sweep_results) -> Path:
    """Persist (fraction, ASR) pairs as CSV and a line figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(fraction, rep.asr) for fraction, rep in sweep_results]
    with open(out / "sweep.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["budget_fraction", "asr"])
        writer.writerows(rows)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot([r[0] for r in rows], [100 * r[1] for r in rows], marker="o", color="#4878d0")
    ax.set_xlabel("fraction of training query budget")
    ax.set_ylabel("ASR (%)")
    ax.set_ylim(0, 100)
    ax.set_title("attack success vs training budget")
    fig.tight_layout()
    fig.savefig(out / "sweep.png", dpi=120)
    plt.close(fig)
    return out


def _render_histogram_csv(csv_path: Path) -> Path:
    rows = list(csv.DictReader(open(csv_path)))
    counts = [int(r["count"]) for r in rows]
    edges = np.array([float(r["bin_left"]) for r in rows] + [float(rows[-1]["bin_right"])])
    fig, ax = plt.subplots(figsize=(5, 3.2))
    widths = np.diff(edges)
    if np.allclose(widths, 0):
        ax.bar(range(1, len(counts) + 1), counts, color="#4878d0")
        ax.set_xticks(range(1, len(counts) + 1))
    else:
        ax.bar(edges[:-1], counts, width=widths, align="edge", color="#4878d0")
    ax.set_xlabel("attack steps")
    ax.set_ylabel("verified successes")
    fig.tight_layout()
    out = csv_path.with_suffix(".png")
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def _render_examples_npz(npz_path: Path, max_pairs: int = 8) -> Path:
    with np.load(npz_path) as f:
        originals, adversarials = f["originals"][:max_pairs], f["adversarials"][:max_pairs]
    fig, axes = plt.subplots(2, len(originals), figsize=(1.2 * len(originals), 2.6), squeeze=False)
    for j in range(len(originals)):
        for row, img in enumerate((originals[j], adversarials[j])):
            arr = img[0] if img.shape[0] == 1 else img.transpose(1, 2, 0)
            axes[row][j].imshow(arr, cmap="gray", vmin=0, vmax=1)
            axes[row][j].set_axis_off()
    axes[0][0].set_title("original", fontsize=8, loc="left")
    axes[1][0].set_title("adversarial", fontsize=8, loc="left")
    fig.tight_layout()
    out = npz_path.parent / "examples.png"
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def _render_sweep_csv(csv_path: Path) -> Path:
    rows = list(csv.DictReader(open(csv_path)))
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(
        [float(r["budget_fraction"]) for r in rows],
        [100 * float(r["asr"]) for r in rows],
        marker="o",
        color="#4878d0",
    )
    ax.set_xlabel("fraction of training query budget")
    ax.set_ylabel("ASR (%)")
    ax.set_ylim(0, 100)
    fig.tight_layout()
    out = csv_path.with_suffix(".png")
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def rerender(run_dir) -> list[Path]:
    """Re-render every figure in a finished run directory (recursively)
    from its delimited files."""
    run_dir = Path(run_dir)
    rendered = []
    for csv_path in sorted(run_dir.rglob("histogram.csv")):
        rendered.append(_render_histogram_csv(csv_path))
    for npz_path in sorted(run_dir.rglob("adversarial.npz")):
        rendered.append(_render_examples_npz(npz_path))
    for csv_path in sorted(run_dir.rglob("sweep.csv")):
        rendered.append(_render_sweep_csv(csv_path))
    return rendered


def write_comparison(out_dir, reports: dict[str, ExperimentReport]) -> Path:
    """Summary table + per-attack files for a set of scored attacks."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.txt", "w") as f:
        f.write(summary_table(reports))
    with open(out / "summary.json", "w") as f:
        json.dump({k: r.summary() for k, r in reports.items()}, f, indent=2)
    for name, rep in reports.items():
        write_report(out / name.replace("+", "plus_"), rep, name=name)
    return out
