import numpy as np
import pytest

from focusmamba import ModelConfig, init_weights, run_backbone, synth_suite
from focusmamba.events import SensorGeometry, validate_stream


@pytest.fixture(scope="session")
def default_config():
    return ModelConfig()


@pytest.fixture(scope="session")
def default_weights(default_config):
    return init_weights(default_config)


@pytest.fixture(scope="session")
def suite_runs(default_config, default_weights):
    """(scene, stage outputs, flop report) for the default 20-scene suite."""
    runs = []
    for scene in synth_suite(20):
        outputs, report = run_backbone(scene.image, scene.stream,
                                       default_config, default_weights)
        runs.append((scene, outputs, report))
    return runs


def random_stream(rng, width=64, height=64, window=50_000, count=200):
    geometry = SensorGeometry(width, height, 0, window)
    raw = [
        (int(rng.integers(0, width)), int(rng.integers(0, height)),
         int(rng.integers(0, window + 1)), 1 if rng.uniform() < 0.5 else -1)
        for _ in range(count)
    ]
    return validate_stream(raw, geometry)
