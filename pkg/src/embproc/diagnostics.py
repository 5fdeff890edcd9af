"""Layer-wise feature-variance profiles and their CSV/SVG reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _svg
from .embstore import OccurrenceShard
from .errors import DataError
from .normalize import fit_stats

VARIANCE_CSV_HEADER = ("model", "layer", "mean_var", "max_var", "min_var")


@dataclass(frozen=True)
class VarianceEntry:
    layer: int
    mean_var: float
    max_var: float
    min_var: float

    def __post_init__(self):
        if self.min_var < 0 or self.max_var < self.min_var or not self.mean_var >= 0:
            raise DataError("variance entry must satisfy 0 <= min <= max")


@dataclass
class LayerVarianceProfile:
    """Per-layer summary of per-feature variance for one model."""

    model: str
    entries: list[VarianceEntry]

    def __post_init__(self):
        layers = [e.layer for e in self.entries]
        if sorted(set(layers)) != layers:
            raise DataError(f"profile {self.model!r}: layer indices must be unique and sorted")


def layer_variance(shard: OccurrenceShard) -> VarianceEntry:
    """Population variance per feature, summarized as mean/max/min.

    The per-layer scalar plotted by the variance report is the mean
    over features; max and min are carried along for transparency.
    """
    if len(shard.records) < 2:
        raise DataError(f"layer variance needs at least 2 records, shard has {len(shard.records)}")
    stats = fit_stats(shard.matrix())
    variances = np.square(stats.std)
    return VarianceEntry(
        layer=shard.layer,
        mean_var=float(variances.mean()),
        max_var=float(variances.max()),
        min_var=float(variances.min()),
    )


def variance_report(
    profiles: list[LayerVarianceProfile], out: str | Path, y_limit: float | None = None
) -> tuple[Path, Path]:
    """Write variance.csv and a line-chart variance.svg under ``out``.

    One CSV row per (model, layer); one polyline per model, layer on
    the x-axis, mean feature variance on the y-axis. ``y_limit`` caps
    the y-axis (values beyond it are drawn clamped at the cap).
    """
    if not profiles:
        raise DataError("variance report needs at least one profile")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "variance.csv"
    svg_path = out / "variance.svg"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(VARIANCE_CSV_HEADER)
        for profile in profiles:
            for e in profile.entries:
                writer.writerow(
                    [
                        profile.model,
                        e.layer,
                        repr(float(e.mean_var)),
                        repr(float(e.max_var)),
                        repr(float(e.min_var)),
                    ]
                )
    series = [
        (p.model, [(float(e.layer), e.mean_var) for e in p.entries]) for p in profiles
    ]
    svg = _svg.line_chart(series, x_label="layer", y_label="mean feature variance", y_max=y_limit)
    svg_path.write_text(svg, encoding="utf-8", newline="\n")
    return csv_path, svg_path
