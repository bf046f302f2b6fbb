import math

import numpy as np
import pytest

from beamfix import geo, grid, simulate
from beamfix.dataset import Direction
from beamfix.denoise import (
    LookupTable,
    build_lut,
    load_lut_csv,
    lut_predict,
    mlp_predict,
    save_lut_csv,
    train_denoiser,
)
from beamfix.geo import GeoPosition, LocalOffset, NoiseSpec
from beamfix.nn import TrainConfig

from conftest import make_bundle, make_sample

BASE = GeoPosition(33.42, -111.93)


def _noisy_sample(sid, x_center, noisy, gt=BASE):
    s = make_sample(sid, x_center, gt)
    return s.__class__(s.id, s.direction, s.detections, s.beam_index, gt, noisy)


class TestBuildLut:
    def test_identical_points_reproduced(self):
        samples = [_noisy_sample(i, 0.205, BASE) for i in range(5)]
        lut = build_lut(make_bundle(samples), 100)
        assert lut.means[20] == BASE
        assert lut.counts[20] == 5

    def test_symmetric_offsets_average_to_center(self):
        # Analytic mean: +-1 m north of the center averages back to it.
        up = geo.apply_offset(BASE, LocalOffset(0.0, 1.0))
        down = geo.apply_offset(BASE, LocalOffset(0.0, -1.0))
        samples = [_noisy_sample(0, 0.205, up), _noisy_sample(1, 0.205, down)]
        lut = build_lut(make_bundle(samples), 100)
        assert abs(lut.means[20].lat_deg - BASE.lat_deg) < 1e-9
        assert abs(lut.means[20].lon_deg - BASE.lon_deg) < 1e-9

    def test_matches_grid_table_means(self, scene, codebook):
        traj = simulate.TrajectoryConfig(120, Direction.LEFT_TO_RIGHT, 0, seed=1)
        bundle = simulate.generate_scenario(scene, codebook, traj, NoiseSpec(0.5, 2))
        lut = build_lut(bundle, 100)
        table = grid.build_grid_table(bundle.samples, "noisy", 100)
        assert set(lut.means) == set(table.cells)
        for g, cell in table.cells.items():
            assert lut.means[g] == cell.mean_position

    def test_empty_bundle_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            build_lut(make_bundle([]), 100)

    def test_missing_noisy_position_named(self):
        samples = [make_sample(3, 0.5, BASE)]
        with pytest.raises(ValueError, match="sample 3"):
            build_lut(make_bundle(samples), 100)

    def test_csv_round_trip(self, tmp_path):
        samples = [_noisy_sample(i, (i + 0.5) / 10, BASE) for i in range(10)]
        lut = build_lut(make_bundle(samples), 10)
        path = tmp_path / "lut.csv"
        save_lut_csv(lut, path)
        assert load_lut_csv(path, 10) == lut


class TestLutPredict:
    def _lut(self, grids):
        means = {
            g: geo.apply_offset(BASE, LocalOffset(float(g), 0.0)) for g in grids
        }
        return LookupTable(100, means, {g: 1 for g in grids})

    def test_populated_grid_returns_its_mean(self):
        lut = self._lut([20, 30])
        assert lut_predict(lut, 0.205) == lut.means[20]

    def test_empty_grid_falls_back_to_nearest(self):
        lut = self._lut([49, 52])
        assert lut_predict(lut, 0.505) == lut.means[49]  # grid 50: distance 1 vs 2

    def test_equidistant_falls_back_to_lower_index(self):
        lut = self._lut([10, 14])
        assert lut_predict(lut, 0.125) == lut.means[10]  # grid 12: tie at distance 2

    def test_fully_empty_rejected(self):
        with pytest.raises(ValueError, match="no populated"):
            lut_predict(LookupTable(100, {}, {}), 0.5)

    def test_residual_shrinks_like_inverse_sqrt_n(self):
        # Standard-error law: mean residual of an N-sample mean scales as
        # 1/sqrt(N); check the 16x count ratio lands within a factor of 2
        # of the predicted 4x residual ratio.
        rng = np.random.default_rng(3)
        sigma = 1.0

        def mean_residual(n, trials=60):
            residuals = []
            for t in range(trials):
                offsets = rng.normal(0, sigma, size=(n, 2))
                samples = [
                    _noisy_sample(
                        i, 0.505, geo.apply_offset(BASE, LocalOffset(float(e), float(no)))
                    )
                    for i, (e, no) in enumerate(offsets)
                ]
                lut = build_lut(make_bundle(samples), 100)
                residuals.append(geo.haversine_distance(lut.means[50], BASE))
            return float(np.mean(residuals))

        small, large = mean_residual(10), mean_residual(160)
        ratio = small / large
        assert 2.0 <= ratio <= 8.0  # ideal 4.0, within a factor of 2


class TestTrainDenoiser:
    def test_constant_position_memorized(self):
        target = geo.apply_offset(BASE, LocalOffset(3.0, -2.0))
        samples = [_noisy_sample(i, 0.4 + 0.01 * i, target) for i in range(8)]
        bundle = make_bundle(samples)
        centers = [(s.transmitter().x_center, s.transmitter().y_center) for s in samples]
        model, _ = train_denoiser(
            bundle, centers, TrainConfig(learning_rate=1e-2, epochs=300, batch_size=4, seed=4)
        )
        for c in centers:
            assert geo.haversine_distance(mlp_predict(model, c), target) < 0.05

    def test_memorizes_single_pair_to_millimeter(self):
        target = geo.apply_offset(BASE, LocalOffset(1.0, 1.0))
        samples = [_noisy_sample(0, 0.61, target)]
        bundle = make_bundle(samples)
        model, _ = train_denoiser(
            bundle,
            [(0.61, 0.5)],
            TrainConfig(learning_rate=1e-2, epochs=800, batch_size=1, seed=5),
        )
        assert geo.haversine_distance(mlp_predict(model, (0.61, 0.5)), target) < 1e-3

    def test_deterministic(self, scene, codebook):
        traj = simulate.TrajectoryConfig(40, Direction.LEFT_TO_RIGHT, 0, seed=6)
        bundle = simulate.generate_scenario(scene, codebook, traj, NoiseSpec(0.5, 7))
        centers = [(s.transmitter().x_center, s.transmitter().y_center) for s in bundle.samples]
        cfg = TrainConfig(epochs=10, seed=8)
        a, _ = train_denoiser(bundle, centers, cfg)
        b, _ = train_denoiser(bundle, centers, cfg)
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))

    def test_identical_queries_identical_outputs(self, scene, codebook):
        traj = simulate.TrajectoryConfig(40, Direction.LEFT_TO_RIGHT, 0, seed=9)
        bundle = simulate.generate_scenario(scene, codebook, traj, NoiseSpec(0.5, 10))
        centers = [(s.transmitter().x_center, s.transmitter().y_center) for s in bundle.samples]
        model, _ = train_denoiser(bundle, centers, TrainConfig(epochs=20, seed=11))
        assert mlp_predict(model, (0.4, 0.5)) == mlp_predict(model, (0.4, 0.5))

    def test_predictions_stay_near_scene(self, scene, codebook):
        # Range oracle: queries across the frame must land within the
        # training scene's bounding box grown by 10 m.
        traj = simulate.TrajectoryConfig(300, Direction.LEFT_TO_RIGHT, 0, seed=12)
        bundle = simulate.generate_scenario(scene, codebook, traj, NoiseSpec(0.5, 13))
        centers = [(s.transmitter().x_center, s.transmitter().y_center) for s in bundle.samples]
        model, _ = train_denoiser(bundle, centers, TrainConfig(epochs=100, seed=14))
        lats = [s.noisy_position.lat_deg for s in bundle.samples]
        lons = [s.noisy_position.lon_deg for s in bundle.samples]
        margin_lat = 10.0 / geo.METERS_PER_DEGREE
        margin_lon = 10.0 / (geo.METERS_PER_DEGREE * math.cos(math.radians(BASE.lat_deg)))
        for x in np.linspace(0, 1, 21):
            p = mlp_predict(model, (float(x), 0.5))
            assert min(lats) - margin_lat <= p.lat_deg <= max(lats) + margin_lat
            assert min(lons) - margin_lon <= p.lon_deg <= max(lons) + margin_lon

    def test_methods_agree_on_low_noise_fixture(self):
        # With coincident per-grid ground truth at 0.1 m noise, both
        # methods estimate the same conditional mean; their predictions
        # should disagree by no more than twice the lookup table's own
        # residual to the truth.
        from beamfix.dataset import inject_noise

        samples = []
        sid = 0
        for g in range(30):
            x = (3 * g + 1.5) / 100
            pos = geo.apply_offset(BASE, LocalOffset(g * 0.5 - 7.0, 11.0))
            for _ in range(12):
                samples.append(make_sample(sid, x, pos))
                sid += 1
        bundle = inject_noise(make_bundle(samples), NoiseSpec(0.1, 30))
        centers = [(s.transmitter().x_center, s.transmitter().y_center) for s in bundle.samples]
        lut = build_lut(bundle, 100, centers)
        model, _ = train_denoiser(
            bundle, centers, TrainConfig(epochs=600, batch_size=64, seed=31)
        )
        lut_residual = float(
            np.mean(
                [
                    geo.haversine_distance(lut.means[grid.assign_grid(x, 100)], s.gt_position)
                    for s, (x, _) in zip(bundle.samples, centers)
                ]
            )
        )
        disagreement = float(
            np.mean(
                [
                    geo.haversine_distance(lut_predict(lut, c[0]), mlp_predict(model, c))
                    for c in centers
                ]
            )
        )
        assert disagreement <= 2.0 * lut_residual

    def test_center_count_mismatch_rejected(self, scene, codebook):
        traj = simulate.TrajectoryConfig(10, Direction.LEFT_TO_RIGHT, 0, seed=15)
        bundle = simulate.generate_scenario(scene, codebook, traj, NoiseSpec(0.5, 16))
        with pytest.raises(ValueError, match="centers"):
            train_denoiser(bundle, [(0.5, 0.5)], TrainConfig(epochs=1))
