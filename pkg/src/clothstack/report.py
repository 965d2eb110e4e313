"""Report rendering: delimited metric tables plus matplotlib figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricReport  # noqa: E402

_CSV_COLUMNS = ("layer", "chamfer_mm", "normal_consistency",
                "ir_refined_percent", "ir_registered_percent")


def write_report_csv(path, report: MetricReport) -> Path:
    """One row per layer, empty cells for metrics without a reference."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for row in report.per_layer:
            writer.writerow([row.get("layer")]
                            + ["" if row.get(c) is None else f"{row[c]:.6g}"
                               for c in _CSV_COLUMNS[1:]])
    return path


def write_metric_figure(path, report: MetricReport) -> Path:
    """Per-layer bar chart of the reported metrics."""
    layers = [row["layer"] for row in report.per_layer]
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))

    panels = (
        ("chamfer_mm", "Chamfer distance (mm)"),
        ("normal_consistency", "Normal consistency"),
        ("ir_refined_percent", "Intersection ratio (%)"),
    )
    for ax, (key, title) in zip(axes, panels):
        vals = [row.get(key) for row in report.per_layer]
        have = [(l, v) for l, v in zip(layers, vals) if v is not None]
        if have:
            ls, vs = zip(*have)
            ax.bar([str(l) for l in ls], vs, color="#4878a8")
        else:
            ax.text(0.5, 0.5, "no reference", ha="center", va="center",
                    transform=ax.transAxes, color="gray")
        if key == "ir_refined_percent":
            reg = [row.get("ir_registered_percent") for row in report.per_layer]
            if all(v is not None for v in reg):
                ax.plot([str(l) for l in layers], reg, "o--", color="#a85448",
                        label="registered")
                ax.legend(fontsize=8)
        ax.set_title(title, fontsize=10)
        ax.set_xlabel("layer", fontsize=9)
        ax.tick_params(labelsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def write_loss_figure(path, histories) -> Path:
    """Training-loss curves, one line per layer, log-scaled."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, hist in histories:
        ax.plot(hist, label=label, linewidth=0.9)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("Distance-field fitting loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def write_report_files(out_dir, report: MetricReport, loss_dir=None) -> list:
    """Write the CSV table and figures next to the JSON report.

    Returns the list of created paths.
    """
    from .udf import load_loss_history

    out_dir = Path(out_dir)
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    written = [write_report_csv(out_dir / "report.csv", report),
               write_metric_figure(fig_dir / "metrics.png", report)]

    if loss_dir is not None:
        histories = []
        for path in sorted(Path(loss_dir).glob("layer*.loss.csv")):
            histories.append((path.stem.replace(".loss", ""),
                              load_loss_history(path)))
        if histories:
            written.append(write_loss_figure(fig_dir / "loss.png", histories))
    return written
