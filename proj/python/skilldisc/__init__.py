# Copyright 2026 The skilldisc Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Unsupervised manipulation skill discovery and transfer."""

import json as _json

import torch as _torch  # noqa: F401  loads libtorch before the extension

from . import _skilldisc
from ._skilldisc import (  # noqa: F401
    CheckpointError,
    ConfigError,
    CorruptionError,
    DegenerateGatingError,
    DomainError,
    Error,
    LoadError,
    MigrationError,
    NonFiniteError,
    ValidationError,
    compose,
    jsd_conjugate_fstar,
    jsd_witness_T,
    scripted_success,
    sparse_reward,
)

__all__ = [
    "afs",
    "compose",
    "config_hash",
    "default_config",
    "evaluate",
    "grasp_ratio",
    "interaction_ratio",
    "jsd_conjugate_fstar",
    "jsd_witness_T",
    "load_manifest",
    "mi_curve",
    "pretrain",
    "random_trajectories",
    "resolve_config",
    "scripted_success",
    "skill_trajectories",
    "sparse_reward",
    "state_entropy",
    "transfer",
]


def _text(value):
    return value if isinstance(value, str) else _json.dumps(value)


def default_config():
    return _json.loads(_skilldisc.default_config())


def resolve_config(file=None, flags=None):
    """Defaults < file < SKILLDISC_* environment < flags."""
    return _json.loads(_skilldisc.resolve_config(file, _text(flags or {})))


def config_hash(config):
    return _skilldisc.config_hash(_text(config))


def pretrain(config, out):
    return _json.loads(_skilldisc.pretrain(_text(config), str(out)))


def transfer(config, checkpoint, out):
    """checkpoint=None trains from scratch."""
    ckpt = None if checkpoint is None else str(checkpoint)
    return _json.loads(_skilldisc.transfer(_text(config), ckpt, str(out)))


def evaluate(checkpoint, episodes=50, seed=0):
    return _skilldisc.evaluate(str(checkpoint), episodes, seed)


def load_manifest(checkpoint):
    return _json.loads(_skilldisc.load_manifest(str(checkpoint)))


def random_trajectories(task, n, seed=0):
    return _json.loads(_skilldisc.random_trajectories(task, n, seed))


def skill_trajectories(checkpoint, n, seed=0, deterministic=False):
    return _json.loads(_skilldisc.skill_trajectories(str(checkpoint), n, seed, deterministic))


def grasp_ratio(trajectories, threshold=0.05):
    return _skilldisc.grasp_ratio(_text(trajectories), threshold)


def state_entropy(trajectories, bins_per_axis=10):
    return _skilldisc.state_entropy(_text(trajectories), bins_per_axis)


def interaction_ratio(trajectories, threshold=0.05, frac=0.6):
    return _skilldisc.interaction_ratio(_text(trajectories), threshold, frac)


def afs(checkpoint, target="gating", samples=4096, seed=0, per_feature=False):
    return _json.loads(_skilldisc.afs(str(checkpoint), target, samples, seed, per_feature))


def mi_curve(metrics, key="jsd_bound", window=10):
    return _json.loads(_skilldisc.mi_curve(str(metrics), key, window))
