import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from relubits import TrainConfig, init_network, synth_blobs, train  # noqa: E402


def random_net(dims, seed):
    return init_network(dims, seed=seed, weight_init_scale=1.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def blobs_benchmark():
    """Overlapping two-class blobs and a 2-16-2 net trained on them (fixed seeds)."""
    ds = synth_blobs(500, [[-1.0, 0.0], [1.0, 0.0]], 0.5, seed=0)
    cfg = TrainConfig(learning_rate=0.1, epochs=50, batch_size=32, seed=0)
    net = train(init_network([2, 16, 2], seed=0), ds.features, ds.labels, cfg)
    return net, ds
