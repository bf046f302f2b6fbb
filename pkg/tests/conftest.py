import pytest

from beamfix import simulate
from beamfix.dataset import (
    DatasetBundle,
    DatasetMeta,
    Detection,
    DetectionClass,
    Direction,
    Sample,
)
from beamfix.geo import GeoPosition, NoiseSpec


@pytest.fixture(scope="session")
def codebook():
    return simulate.build_dft_codebook(16, 64)


@pytest.fixture(scope="session")
def scene():
    return simulate.default_scene()


def make_sample(
    sid: int,
    x_center: float,
    position: GeoPosition,
    beam_index: int = 0,
    direction: Direction = Direction.LEFT_TO_RIGHT,
    noisy: GeoPosition | None = None,
    extra_detections: tuple[Detection, ...] = (),
) -> Sample:
    """Hand-built sample with one transmitter detection at the given x."""
    detections = (Detection(DetectionClass.TRANSMITTER, x_center, 0.5),) + extra_detections
    return Sample(sid, direction, detections, beam_index, position, noisy)


def make_bundle(samples, grid_count=100, codebook_size=64, direction=Direction.LEFT_TO_RIGHT):
    meta = DatasetMeta(
        grid_count=grid_count,
        codebook_size=codebook_size,
        direction=direction,
        source="test",
    )
    return DatasetBundle(tuple(samples), meta)


@pytest.fixture
def small_synthetic_bundle(scene, codebook):
    traj = simulate.TrajectoryConfig(
        num_samples=60, direction=Direction.LEFT_TO_RIGHT, num_distractors=2, seed=11
    )
    return simulate.generate_scenario(scene, codebook, traj, NoiseSpec(0.5, 12))
