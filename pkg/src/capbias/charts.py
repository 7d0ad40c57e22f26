"""SVG chart emitters for audit and scoring reports."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "capbias"

import math

import matplotlib.pyplot as plt

SVG_METADATA = {"Date": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path


def bar_chart(
    path: str | Path,
    labels: Sequence[str],
    counts: Sequence[float],
    title: str,
    xlabel: str,
    log_positions: Optional[Sequence[float]] = None,
) -> Path:
    """Vertical bars; log_positions places bars on a log2-scaled axis."""
    fig, ax = plt.subplots(figsize=(7, 3.2))
    if log_positions is not None:
        xs = [math.log2(v) for v in log_positions]
        width = 0.6 * min(
            (b - a for a, b in zip(xs, xs[1:])), default=1.0
        )
        ax.bar(xs, counts, width=width, color="#4878a8")
        ax.set_xticks(xs)
        ax.set_xticklabels(labels, rotation=60, fontsize=7)
    else:
        ax.bar(range(len(labels)), counts, color="#4878a8")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=60, fontsize=7)
    ax.set_title(title, fontsize=10)
    ax.set_xlabel(xlabel, fontsize=8)
    ax.set_ylabel("count", fontsize=8)
    fig.tight_layout()
    return _save(fig, Path(path))


def line_chart(
    path: str | Path,
    series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
    title: str,
    xlabel: str,
    ylabel: str,
) -> Path:
    """One line per named series; series map to (x values, y values)."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for name in sorted(series):
        xs, ys = series[name]
        ax.plot(xs, ys, marker="o", markersize=3, linewidth=1.2, label=name)
    ax.set_title(title, fontsize=10)
    ax.set_xlabel(xlabel, fontsize=8)
    ax.set_ylabel(ylabel, fontsize=8)
    ax.axvline(0.0, color="#999999", linewidth=0.8, linestyle="--")
    if len(series) > 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, Path(path))


def box_chart(
    path: str | Path,
    groups: Mapping[str, Sequence[float]],
    title: str,
    ylabel: str,
) -> Path:
    """Distribution boxes, one per named group."""
    names = sorted(groups)
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(names)), 3.6))
    ax.boxplot([list(groups[n]) for n in names], tick_labels=names)
    ax.set_title(title, fontsize=10)
    ax.set_ylabel(ylabel, fontsize=8)
    ax.tick_params(axis="x", rotation=30, labelsize=7)
    fig.tight_layout()
    return _save(fig, Path(path))


def audit_charts(report, outdir: str | Path) -> list[Path]:
    """Histogram charts for an AuditReport; settings axes are log-scaled."""
    from capbias.audit import FNUMBER_STOPS, ISO_STOPS, SHUTTER_STOPS

    out = Path(outdir)
    written = []
    for hist, stops, name, xlabel in (
        (report.shutter_hist, SHUTTER_STOPS, "shutter", "exposure time (s)"),
        (report.fnumber_hist, FNUMBER_STOPS, "fnumber", "f-number"),
        (report.iso_hist, ISO_STOPS, "iso", "ISO"),
    ):
        stop_values = dict(stops)
        labels = [label for label, _ in stops if label in hist]
        if not labels:
            continue
        counts = [hist[label] for label in labels]
        positions = [float(stop_values[label]) for label in labels]
        # The "other" bucket has no place on a log axis; it stays visible
        # in the CSV counterpart.
        written.append(
            bar_chart(
                out / f"hist_{name}.svg", labels, counts,
                f"{name} histogram", xlabel, log_positions=positions,
            )
        )
    if report.ev_hist:
        bins = sorted(report.ev_hist)
        written.append(
            bar_chart(
                out / "ev_hist.svg", [str(b) for b in bins],
                [report.ev_hist[b] for b in bins], "EV histogram", "EV bin",
            )
        )
    if report.year_hist:
        years = sorted(report.year_hist)
        written.append(
            bar_chart(
                out / "years.svg", [str(y) for y in years],
                [report.year_hist[y] for y in years], "capture years", "year",
            )
        )
    if report.mode_hist:
        keys = [k for k in ("Auto", "Manual", "Unknown") if k in report.mode_hist]
        written.append(
            bar_chart(
                out / "modes.svg", keys, [report.mode_hist[k] for k in keys],
                "exposure modes", "mode",
            )
        )
    return written
