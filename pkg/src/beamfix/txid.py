"""Stage 1: transmitter identification.

A small MLP learns beam index (one-hot) to bounding-box center; the
detected object nearest that estimate is declared the transmitter.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .dataset import DatasetBundle, Detection, Sample
from .nn import MlpModel, TrainConfig

DEFAULT_HIDDEN_DIMS = (64, 64)


@dataclass(frozen=True)
class TxPrediction:
    """Estimated center, plus the detection actually selected."""

    estimated_center: tuple[float, float]
    selected_index: int
    selected_center: tuple[float, float]


def encode_beam(beam_index: int, num_beams: int) -> np.ndarray:
    """One-hot encoding of a beam index."""
    if not 0 <= beam_index < num_beams:
        raise ValueError(f"beam index {beam_index} outside [0, {num_beams - 1}]")
    v = np.zeros(num_beams)
    v[beam_index] = 1.0
    return v


def train_txid(
    bundle: DatasetBundle,
    config: TrainConfig,
    hidden_dims: Sequence[int] = DEFAULT_HIDDEN_DIMS,
) -> tuple[MlpModel, list[float]]:
    """Fit beam one-hot -> transmitter center on labeled samples.

    Every training sample must carry a transmitter-labeled detection; the
    first sample without one is named in the error.
    """
    q = bundle.metadata.codebook_size
    inputs, targets = [], []
    for s in bundle.samples:
        tx = s.transmitter()
        if tx is None:
            raise ValueError(f"sample {s.id}: no transmitter label to supervise on")
        inputs.append(encode_beam(s.beam_index, q))
        targets.append((tx.x_center, tx.y_center))
    return nn.fit(np.array(inputs), np.array(targets), hidden_dims, config)


def select_bounding_box(
    detections: Sequence[Detection], estimated_center: tuple[float, float]
) -> TxPrediction:
    """Pick the detection with the smallest Euclidean distance to the estimate.

    Ties resolve to the lowest detection index.
    """
    if not detections:
        raise ValueError("cannot select from an empty detection list")
    ex, ey = estimated_center
    best_index = 0
    best_dist = math.inf
    for i, d in enumerate(detections):
        dist = math.hypot(d.x_center - ex, d.y_center - ey)
        if dist < best_dist:
            best_index, best_dist = i, dist
    chosen = detections[best_index]
    return TxPrediction(
        estimated_center=(ex, ey),
        selected_index=best_index,
        selected_center=(chosen.x_center, chosen.y_center),
    )


def identify(model: MlpModel, sample: Sample) -> TxPrediction:
    """Beam -> estimated center -> nearest detection, for one sample.

    The regressed estimate is clipped into the unit square before the
    distance comparison.
    """
    q = model.layer_dims[0]
    raw = nn.predict(model, encode_beam(sample.beam_index, q))
    estimate = (float(np.clip(raw[0], 0.0, 1.0)), float(np.clip(raw[1], 0.0, 1.0)))
    return select_bounding_box(sample.detections, estimate)


def identify_all(model: MlpModel, bundle: DatasetBundle) -> list[TxPrediction]:
    return [identify(model, s) for s in bundle.samples]


def save_predictions_csv(
    sample_ids: Sequence[int], predictions: Sequence[TxPrediction], path: str | Path
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "pred_x", "pred_y", "selected_index", "selected_x", "selected_y"])
        for sid, p in zip(sample_ids, predictions):
            writer.writerow(
                [
                    str(sid),
                    repr(p.estimated_center[0]),
                    repr(p.estimated_center[1]),
                    str(p.selected_index),
                    repr(p.selected_center[0]),
                    repr(p.selected_center[1]),
                ]
            )
