import json

import numpy as np
import pytest

from rcvb.allocator import MemoryTracker
from rcvb.config import config_from_dict
from rcvb.dataset import gen_splits, write_splits
from rcvb.nn import build_network


def tiny_arch(num_classes=3, c_in=2):
    return [["conv3x3", c_in, 3], ["relu"], ["gap"], ["dense", 3, num_classes]]


@pytest.fixture
def tracker():
    return MemoryTracker()


@pytest.fixture
def tiny_net():
    return build_network("tiny", tiny_arch(), seed=7)


def fast_config_dict(tmp_path, **overrides):
    """A reduced config for quick pipeline runs: one small model, tiny data."""
    d = {
        "seed": 0,
        "clock_mode": "virtual",
        "predicate_mode": "analytic",
        "budget": {"memory_bytes": 2_000_000, "train_seconds": 400.0},
        "size_grid": [8, 12],
        "precisions": ["fp32", "amp"],
        "batch_cap": 64,
        "dataset": {"path": str(tmp_path / "data"), "num_classes": 4,
                    "base_resolution": 16, "channels": 3,
                    "train_count": 64, "val_count": 32, "test_count": 32},
        "zoo": [{
            "id": "t8",
            "cost": {"fixed_bytes": 400.0, "activation_bytes_per_pixel": 180.0,
                     "step_seconds": 5.0, "pixel_seconds": 0.004,
                     "amp_time_factor": 0.75, "amp_activation_factor": 0.5},
            "layers": [["conv3x3", 3, 8], ["relu"], ["gap"], ["dense", 8, 4]],
        }],
    }
    d.update(overrides)
    return d


@pytest.fixture
def fast_config(tmp_path):
    cfg = config_from_dict(fast_config_dict(tmp_path))
    splits = gen_splits(cfg.seed, cfg.dataset.num_classes, cfg.dataset.counts(),
                        cfg.dataset.base_resolution, channels=cfg.dataset.channels,
                        noise_sigma=cfg.dataset.noise_sigma)
    write_splits(cfg.dataset.path, splits)
    return cfg


@pytest.fixture
def fast_config_file(tmp_path):
    d = fast_config_dict(tmp_path)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(d))
    cfg = config_from_dict(d)
    splits = gen_splits(cfg.seed, cfg.dataset.num_classes, cfg.dataset.counts(),
                        cfg.dataset.base_resolution, channels=cfg.dataset.channels,
                        noise_sigma=cfg.dataset.noise_sigma)
    write_splits(cfg.dataset.path, splits)
    return path


def rng(seed=0):
    return np.random.default_rng(seed)
