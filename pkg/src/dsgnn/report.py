"""Report rendering: delimited outputs, PGM maps, and matplotlib figures.

All files are written atomically (temp file + rename).
"""

from __future__ import annotations

import csv
import io
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def atomic_write_text(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def atomic_write_bytes(path: str, payload: bytes):
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def write_csv(path: str, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf)
    if header:
        writer.writerow(header)
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def write_pgm(path: str, values: np.ndarray, max_val: int | None = None):
    """ASCII (P2) PGM of a 2-D integer array."""
    values = np.asarray(values)
    if max_val is None:
        max_val = max(int(values.max()), 1)
    lines = [f"P2", f"{values.shape[1]} {values.shape[0]}", str(max_val)]
    for row in values:
        lines.append(" ".join(str(int(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def quantize_for_pgm(values: np.ndarray, levels: int = 255) -> np.ndarray:
    """Scale a real-valued map to 0..levels for PGM output."""
    values = np.asarray(values, dtype=float)
    lo, hi = values.min(), values.max()
    if hi - lo < 1e-12:
        return np.zeros_like(values, dtype=int)
    return np.round((values - lo) / (hi - lo) * levels).astype(int)


def write_label_map(out_base: str, labels: np.ndarray):
    """Integer label map as plain text grid + PGM + PNG figure."""
    text = "\n".join(" ".join(str(int(v)) for v in row) for row in labels)
    atomic_write_text(out_base + ".txt", text + "\n")
    write_pgm(out_base + ".pgm", labels, max_val=max(int(labels.max()), 1))
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(labels, cmap="tab10", interpolation="nearest")
    ax.set_title(os.path.basename(out_base))
    ax.set_xticks([])
    ax.set_yticks([])
    _save_fig(fig, out_base + ".png")


def write_heatmap(out_base: str, values: np.ndarray, title: str = ""):
    """Real-valued map as CSV + PGM + PNG figure."""
    write_csv(out_base + ".csv", None, [[f"{v:.6g}" for v in row] for row in values])
    write_pgm(out_base + ".pgm", quantize_for_pgm(values), max_val=255)
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    im = ax.imshow(values, cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, shrink=0.85)
    if title:
        ax.set_title(title)
    _save_fig(fig, out_base + ".png")


def write_loss_curves(out_base: str, curves: list):
    """Per-fold loss curves as CSV + PNG figure."""
    max_len = max((len(c) for c in curves), default=0)
    rows = []
    for epoch in range(max_len):
        rows.append([epoch] + [
            f"{c[epoch]:.6g}" if epoch < len(c) else "" for c in curves
        ])
    write_csv(out_base + ".csv",
              ["epoch"] + [f"fold{i}" for i in range(len(curves))], rows)
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, c in enumerate(curves):
        ax.plot(range(len(c)), c, label=f"fold {i}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("joint loss")
    ax.legend()
    _save_fig(fig, out_base + ".png")


def write_run_report(out_dir: str, report):
    """RunReport as CSV + text summary + loss-curve figure."""
    os.makedirs(out_dir, exist_ok=True)
    rows = [[i, f"{m:.10g}"] for i, m in enumerate(report.fold_maes)]
    rows.append(["mean", f"{report.mean_mae:.10g}"])
    write_csv(os.path.join(out_dir, "report.csv"), ["fold", "mae"], rows)
    lines = [
        f"variant: {report.config.get('variant')}",
        f"seed: {report.seed}",
        f"wall_time_s: {report.wall_time:.1f}",
        "fold MAEs: " + ", ".join(f"{m:.6g}" for m in report.fold_maes),
        f"mean MAE: {report.mean_mae:.6g}",
        "config: " + ", ".join(f"{k}={v}" for k, v in sorted(report.config.items())),
    ]
    atomic_write_text(os.path.join(out_dir, "summary.txt"), "\n".join(lines) + "\n")
    write_loss_curves(os.path.join(out_dir, "loss_curves"), report.loss_curves)


def write_ablation_table(out_base: str, reports: dict):
    """Variant comparison as CSV + bar-chart figure."""
    rows = [
        [name, f"{rep.mean_mae:.10g}"] + [f"{m:.10g}" for m in rep.fold_maes]
        for name, rep in reports.items()
    ]
    n_folds = max((len(r.fold_maes) for r in reports.values()), default=0)
    write_csv(out_base + ".csv",
              ["variant", "mean_mae"] + [f"fold{i}_mae" for i in range(n_folds)], rows)
    fig, ax = plt.subplots(figsize=(7, 4))
    names = list(reports)
    ax.bar(names, [reports[n].mean_mae for n in names])
    ax.set_ylabel("mean MAE")
    ax.tick_params(axis="x", rotation=30)
    _save_fig(fig, out_base + ".png")


def _save_fig(fig, path: str):
    tmp = path + ".tmp.png"
    fig.savefig(tmp, dpi=120, bbox_inches="tight")
    plt.close(fig)
    os.replace(tmp, path)
