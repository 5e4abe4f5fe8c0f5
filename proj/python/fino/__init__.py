"""Finite-difference inspired neural operator: data, training and evaluation.

Thin wrappers over the native core. Paths may be str or os.PathLike; JSON
results come back as dicts and fields as float64 numpy arrays.
"""

import json

from . import _core
from ._core import (
    AutodiffError,
    ConfigError,
    Error,
    IoError,
    NumericalError,
    ShapeError,
    geometric_bound,
    sha256,
)

__all__ = [
    "AutodiffError",
    "ConfigError",
    "Error",
    "IoError",
    "Model",
    "NumericalError",
    "ShapeError",
    "bound_check",
    "dataset_from_config",
    "evaluate",
    "generate",
    "geometric_bound",
    "load_dataset",
    "metrics",
    "rollout",
    "sha256",
    "train",
]


def generate(config, out, seed=None, threads=1):
    """Write a dataset file; returns its payload digest and size."""
    return _core.generate(config, out, seed, threads)


def train(config, data, out, seed=None):
    """Train from a config and dataset file, writing the run directory."""
    return _core.train(config, data, out, seed)


def evaluate(ckpt, data, out, config=None):
    return json.loads(_core.evaluate(ckpt, data, out, config))


def rollout(ckpt, data, traj, steps, out):
    """Per-step RMSE of a free rollout of one trajectory."""
    return _core.rollout(ckpt, data, traj, steps, out)


def bound_check(ckpt, data, k_steps, out):
    return json.loads(_core.bound_check(ckpt, data, k_steps, out))


def load_dataset(path):
    """(frames, meta): frames is (n_traj, T, V, H, W)."""
    frames, meta = _core.load_dataset(path)
    return frames, json.loads(meta)


def dataset_from_config(config, threads=1):
    """Generate in memory from a config dict (same schema as the JSON files)."""
    frames, meta = _core.dataset_from_config(json.dumps(config), threads)
    return frames, json.loads(meta)


def metrics(pred, target, band_cuts=None):
    """rmse, nrmse, max_error, crmse and Fourier-band RMSE of 5-D arrays."""
    k1, k2 = band_cuts if band_cuts is not None else (0.0, 0.0)
    return json.loads(_core.metrics(pred, target, k1, k2))


class Model:
    """A trained model loaded from a checkpoint file."""

    def __init__(self, checkpoint):
        self._m = _core.Model(checkpoint)

    def __call__(self, x):
        """(B, C_in, H, W) features to (B, V, H, W) next frames."""
        return self._m.forward(x)

    @property
    def config(self):
        return json.loads(self._m.config_json)

    @property
    def train_config(self):
        return json.loads(self._m.train_json)

    @property
    def metrics(self):
        return json.loads(self._m.metrics_json)

    @property
    def parameter_count(self):
        return self._m.parameter_count
