"""Grid assignment, per-grid GPS error statistics, and Gaussian curve fitting.

The normalized image width is divided into Z equal vertical grids. A
sample belongs to the grid containing the x-center of its transmitter
detection. Per-grid average displacement from the grid's mean position is
the site-specific error measure; its distribution is summarized by a
histogram and a least-squares Gaussian fit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Literal, Sequence

import numpy as np

from . import geo
from .geo import GeoPosition

if TYPE_CHECKING:
    from .dataset import Sample

PositionSelector = Literal["ground_truth", "noisy"]


class FitConvergenceError(RuntimeError):
    """Gaussian fit failed to converge; carries the last parameter iterate."""

    def __init__(self, message: str, last_params: tuple[float, float, float]):
        super().__init__(message)
        self.last_params = last_params


def assign_grid(x_center: float, grid_count: int) -> int:
    """Grid index g with g/Z <= x_center < (g+1)/Z; x_center == 1 maps to Z-1."""
    if grid_count < 1:
        raise ValueError(f"grid_count must be >= 1, got {grid_count}")
    if not 0.0 <= x_center <= 1.0:
        raise ValueError(f"x_center {x_center} outside [0, 1]")
    if x_center == 1.0:
        return grid_count - 1
    g = int(math.floor(grid_count * x_center))
    # The float product can land boundary values one cell off; nudge back
    # onto the defining inequality.
    while g + 1 < grid_count and (g + 1) / grid_count <= x_center:
        g += 1
    while g > 0 and g / grid_count > x_center:
        g -= 1
    return min(g, grid_count - 1)


@dataclass(frozen=True, slots=True)
class GridCell:
    count: int
    mean_position: GeoPosition
    avg_displacement_m: float


@dataclass(frozen=True)
class GridTable:
    """Per-grid statistics over the populated grids; empty grids are absent."""

    grid_count: int
    cells: dict[int, GridCell]

    def populated(self) -> list[int]:
        return sorted(self.cells)

    def total_count(self) -> int:
        return sum(c.count for c in self.cells.values())

    def nearest_populated(self, grid: int) -> int:
        """Closest populated grid index; ties resolve to the lower index."""
        if not self.cells:
            raise ValueError("grid table has no populated grids")
        return min(self.cells, key=lambda g: (abs(g - grid), g))


def _select_position(sample: "Sample", selector: PositionSelector) -> GeoPosition:
    if selector == "ground_truth":
        return sample.gt_position
    if selector == "noisy":
        if sample.noisy_position is None:
            raise ValueError(f"sample {sample.id}: no noisy position")
        return sample.noisy_position
    raise ValueError(f"unknown position selector {selector!r}")


def build_grid_table(
    samples: Iterable["Sample"], selector: PositionSelector, grid_count: int
) -> GridTable:
    """Group samples by transmitter x-center and compute per-grid statistics.

    Per grid: the arithmetic mean of latitudes and longitudes, then the
    average haversine displacement between that mean and the members.
    Samples are processed in id order, so the result is independent of the
    input ordering.
    """
    groups: dict[int, list[Sample]] = {}
    for s in sorted(samples, key=lambda s: s.id):
        tx = s.transmitter()
        if tx is None:
            raise ValueError(f"sample {s.id}: no transmitter detection, cannot assign a grid")
        _select_position(s, selector)  # fail early if the position is missing
        groups.setdefault(assign_grid(tx.x_center, grid_count), []).append(s)

    cells: dict[int, GridCell] = {}
    for g, members in groups.items():
        lats = np.array([_select_position(s, selector).lat_deg for s in members])
        lons = np.array([_select_position(s, selector).lon_deg for s in members])
        mean = geo.mean_position(lats, lons)
        disp = geo.haversine_m(mean.lat_deg, mean.lon_deg, lats, lons)
        cells[g] = GridCell(len(members), mean, float(disp.mean()))
    return GridTable(grid_count, cells)


def per_sample_displacements(
    samples: Iterable["Sample"], table: GridTable, selector: PositionSelector
) -> np.ndarray:
    """Each sample's haversine distance to its own grid's mean, in id order."""
    out = []
    for s in sorted(samples, key=lambda s: s.id):
        tx = s.transmitter()
        if tx is None:
            raise ValueError(f"sample {s.id}: no transmitter detection, cannot assign a grid")
        g = assign_grid(tx.x_center, table.grid_count)
        if g not in table.cells:
            raise ValueError(f"sample {s.id}: grid {g} is not populated in the table")
        pos = _select_position(s, selector)
        out.append(geo.haversine_distance(table.cells[g].mean_position, pos))
    return np.array(out)


@dataclass(frozen=True)
class Histogram:
    """Fixed-width bins starting at 0; bin k covers [k*w, (k+1)*w)."""

    bin_width_m: float
    counts: np.ndarray

    def bin_centers(self) -> np.ndarray:
        return (np.arange(len(self.counts)) + 0.5) * self.bin_width_m

    def bin_starts(self) -> np.ndarray:
        return np.arange(len(self.counts)) * self.bin_width_m


def histogram_from_values(values: Sequence[float], bin_width_m: float) -> Histogram:
    """Bin nonnegative values into fixed-width bins starting at 0."""
    if bin_width_m <= 0:
        raise ValueError(f"bin_width_m must be > 0, got {bin_width_m}")
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise ValueError("cannot build a histogram from zero values")
    if np.any(vals < 0):
        raise ValueError("displacement values must be nonnegative")
    idx = np.floor(vals / bin_width_m).astype(int)
    counts = np.bincount(idx, minlength=int(idx.max()) + 1).astype(float)
    return Histogram(bin_width_m, counts)


def displacement_histogram(table: GridTable, bin_width_m: float) -> Histogram:
    """Histogram of the per-grid average displacements over populated grids."""
    if not table.cells:
        raise ValueError("grid table has no populated grids")
    values = [table.cells[g].avg_displacement_m for g in table.populated()]
    return histogram_from_values(values, bin_width_m)


@dataclass(frozen=True)
class GaussianFit:
    amplitude: float
    mean_m: float
    sigma_m: float
    r_squared: float
    adjusted_r_squared: float
    bin_width_m: float
    bin_counts: tuple[float, ...]
    iterations: int


def _gauss(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    a, mu, sigma = params
    return a * np.exp(-((x - mu) ** 2) / (2.0 * sigma**2))


def _gauss_jacobian(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    a, mu, sigma = params
    e = np.exp(-((x - mu) ** 2) / (2.0 * sigma**2))
    return np.column_stack(
        [e, a * e * (x - mu) / sigma**2, a * e * (x - mu) ** 2 / sigma**3]
    )


def fit_gaussian(histogram: Histogram, max_iterations: int = 200) -> GaussianFit:
    """Least-squares Gaussian fit of a displacement histogram.

    Fits A * exp(-(x - mu)^2 / (2 sigma^2)) to bin centers and counts with
    a damped Gauss-Newton iteration (moment-based start, Levenberg damping
    so the residual never increases, stop when the relative SSE change
    drops below 1e-10). Reports R^2 and the 3-parameter adjusted R^2.
    """
    y = np.asarray(histogram.counts, dtype=float)
    if np.count_nonzero(y) < 4:
        raise ValueError(
            f"need at least 4 nonzero bins to fit 3 parameters, got {np.count_nonzero(y)}"
        )
    x = histogram.bin_centers()
    total = y.sum()
    mu0 = float((x * y).sum() / total)
    var0 = float((y * (x - mu0) ** 2).sum() / total)
    if var0 <= 0.0:
        raise ValueError("degenerate histogram: all mass in one bin")
    sst = float(((y - y.mean()) ** 2).sum())
    if sst == 0.0:
        raise ValueError("degenerate histogram: all bins identical")

    params = np.array([float(y.max()), mu0, math.sqrt(var0)])
    sse = float(((y - _gauss(params, x)) ** 2).sum())
    lam = 1e-3
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        residual = y - _gauss(params, x)
        jac = _gauss_jacobian(params, x)
        jtj = jac.T @ jac
        jtr = jac.T @ residual
        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(jtj + lam * np.eye(3), jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            candidate = params + step
            if candidate[2] <= 0.0:
                lam *= 10.0
                continue
            cand_sse = float(((y - _gauss(candidate, x)) ** 2).sum())
            if cand_sse <= sse:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            raise FitConvergenceError(
                f"damping exhausted after {iterations} iterations (SSE {sse:.6g})",
                tuple(float(p) for p in params),
            )
        params = candidate
        lam = max(lam / 10.0, 1e-12)
        converged = sse == 0.0 or (sse - cand_sse) / sse < 1e-10
        sse = cand_sse
        if converged or sse == 0.0:
            break
    else:
        raise FitConvergenceError(
            f"no convergence within {max_iterations} iterations (SSE {sse:.6g})",
            tuple(float(p) for p in params),
        )

    n = len(y)
    r2 = 1.0 - sse / sst
    adjusted = 1.0 - (1.0 - r2) * (n - 1) / (n - 3 - 1)
    return GaussianFit(
        amplitude=float(params[0]),
        mean_m=float(params[1]),
        sigma_m=float(params[2]),
        r_squared=r2,
        adjusted_r_squared=adjusted,
        bin_width_m=histogram.bin_width_m,
        bin_counts=tuple(float(c) for c in y),
        iterations=iterations,
    )


def save_grid_table_csv(table: GridTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grid", "count", "mean_lat", "mean_lon", "avg_displacement_m"])
        for g in table.populated():
            cell = table.cells[g]
            writer.writerow(
                [
                    str(g),
                    str(cell.count),
                    repr(cell.mean_position.lat_deg),
                    repr(cell.mean_position.lon_deg),
                    repr(cell.avg_displacement_m),
                ]
            )


def load_grid_table_csv(path: str | Path, grid_count: int) -> GridTable:
    cells: dict[int, GridCell] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["grid", "count", "mean_lat", "mean_lon", "avg_displacement_m"]:
            raise ValueError(f"unexpected grid table header: {header}")
        for row in reader:
            if not row:
                continue
            g = int(row[0])
            cells[g] = GridCell(
                count=int(row[1]),
                mean_position=GeoPosition(float(row[2]), float(row[3])),
                avg_displacement_m=float(row[4]),
            )
    return GridTable(grid_count, cells)


def save_histogram_csv(histogram: Histogram, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_start_m", "count"])
        for start, count in zip(histogram.bin_starts(), histogram.counts):
            writer.writerow([repr(float(start)), repr(float(count))])
