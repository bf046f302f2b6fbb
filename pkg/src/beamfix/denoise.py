"""Stage 2: position de-noising.

Two interchangeable predictors built from the training split's noisy
positions: a grid-indexed lookup table of mean positions, and an MLP
regressing the selected bounding-box center to a position.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import geo, nn
from .dataset import DatasetBundle
from .geo import GeoPosition
from .grid import assign_grid
from .nn import MlpModel, TrainConfig

DEFAULT_HIDDEN_DIMS = (64, 64)


@dataclass(frozen=True)
class LookupTable:
    """Per-grid mean of training-set noisy positions."""

    grid_count: int
    means: dict[int, GeoPosition]
    counts: dict[int, int]

    def __post_init__(self) -> None:
        if set(self.means) != set(self.counts):
            raise ValueError("means and counts must cover the same grids")


def _tx_centers(bundle: DatasetBundle) -> list[tuple[float, float]]:
    centers = []
    for s in bundle.samples:
        tx = s.transmitter()
        if tx is None:
            raise ValueError(f"sample {s.id}: no transmitter detection")
        centers.append((tx.x_center, tx.y_center))
    return centers


def build_lut(
    bundle: DatasetBundle,
    grid_count: int,
    tx_centers: Sequence[tuple[float, float]] | None = None,
) -> LookupTable:
    """Group training samples by grid and store mean noisy lat/lon per grid.

    ``tx_centers`` overrides the labeled transmitter centers with
    identified ones (same order as the samples); by default the labels
    are used. Samples are aggregated in id order.
    """
    if not bundle.samples:
        raise ValueError("cannot build a lookup table from an empty training set")
    centers = list(tx_centers) if tx_centers is not None else _tx_centers(bundle)
    if len(centers) != len(bundle.samples):
        raise ValueError(f"{len(centers)} centers for {len(bundle.samples)} samples")
    pairs = sorted(zip(bundle.samples, centers), key=lambda p: p[0].id)
    groups: dict[int, list[GeoPosition]] = {}
    for s, (x, _) in pairs:
        if s.noisy_position is None:
            raise ValueError(f"sample {s.id}: no noisy position to aggregate")
        groups.setdefault(assign_grid(x, grid_count), []).append(s.noisy_position)
    means = {
        g: geo.mean_position(
            [p.lat_deg for p in members], [p.lon_deg for p in members]
        )
        for g, members in groups.items()
    }
    counts = {g: len(members) for g, members in groups.items()}
    return LookupTable(grid_count, means, counts)


def lut_predict(lut: LookupTable, x_center: float) -> GeoPosition:
    """De-noised position for a bounding-box x-center.

    Empty grids fall back to the nearest populated grid; equidistant
    neighbors resolve to the lower index.
    """
    if not lut.means:
        raise ValueError("lookup table has no populated grids")
    g = assign_grid(x_center, lut.grid_count)
    if g not in lut.means:
        g = min(lut.means, key=lambda k: (abs(k - g), k))
    return lut.means[g]


def train_denoiser(
    bundle: DatasetBundle,
    tx_centers: Sequence[tuple[float, float]],
    config: TrainConfig,
    hidden_dims: Sequence[int] = DEFAULT_HIDDEN_DIMS,
) -> tuple[MlpModel, list[float]]:
    """Regress (x, y) bounding-box center to the noisy position.

    ``tx_centers`` are the identified transmitter centers aligned with the
    bundle's samples; labels are the noisy lat/lon pairs.
    """
    if len(tx_centers) != len(bundle.samples):
        raise ValueError(f"{len(tx_centers)} centers for {len(bundle.samples)} samples")
    targets = []
    for s in bundle.samples:
        if s.noisy_position is None:
            raise ValueError(f"sample {s.id}: no noisy position to train against")
        targets.append((s.noisy_position.lat_deg, s.noisy_position.lon_deg))
    return nn.fit(np.array(tx_centers, dtype=float), np.array(targets), hidden_dims, config)


def mlp_predict(model: MlpModel, center: tuple[float, float]) -> GeoPosition:
    """Forward the center through the trained denoiser; result in degrees."""
    out = nn.predict(model, np.array(center, dtype=float))
    return GeoPosition(float(out[0]), float(out[1]))


def save_lut_csv(lut: LookupTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grid", "count", "mean_lat", "mean_lon"])
        for g in sorted(lut.means):
            pos = lut.means[g]
            writer.writerow([str(g), str(lut.counts[g]), repr(pos.lat_deg), repr(pos.lon_deg)])


def load_lut_csv(path: str | Path, grid_count: int) -> LookupTable:
    means: dict[int, GeoPosition] = {}
    counts: dict[int, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["grid", "count", "mean_lat", "mean_lon"]:
            raise ValueError(f"unexpected lookup table header: {header}")
        for row in reader:
            if not row:
                continue
            g = int(row[0])
            counts[g] = int(row[1])
            means[g] = GeoPosition(float(row[2]), float(row[3]))
    return LookupTable(grid_count, means, counts)
