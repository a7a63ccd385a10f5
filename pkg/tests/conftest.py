import numpy as np
import pytest

from psfnet.grid import PsfDataset
from psfnet.network import TrainConfig, train
from psfnet.synth import PRESETS, SamplingGrid, SynthLensSpec, generate_dataset


@pytest.fixture(scope="session")
def lens():
    return SynthLensSpec()


@pytest.fixture(scope="session")
def small_dataset(lens):
    grid = SamplingGrid((-40.0, -10.0, 0.0, 20.0, 45.0), (0.0, 1.0, 2.0, 3.0),
                        (0.0, 90.0, 180.0, 270.0))
    return generate_dataset(lens, grid, 9, 9, 6.5)


@pytest.fixture(scope="session")
def small_model(small_dataset):
    model, _ = train(small_dataset, TrainConfig(hidden_size=16, max_epochs=200, seed=3))
    return model


@pytest.fixture(scope="session")
def series_ab(lens):
    a = generate_dataset(lens, PRESETS["series-a"], 13, 13, 6.5)
    b = generate_dataset(lens, PRESETS["series-b"], 13, 13, 6.5)
    return a.concat(b)


def random_dataset(rng, n, k=5, pitch=6.5):
    fields = np.column_stack([rng.uniform(-50, 50, n), rng.uniform(0, 3, n),
                              rng.uniform(0, 360, n)])
    return PsfDataset(fields, rng.random((n, k, k)), pitch)
