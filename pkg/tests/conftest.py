# tests/conftest.py - shared fixtures

import numpy as np
import pytest

from config.run_config import RunConfig
from datagen.behavior import collect_quality
from datagen.gridworld import build_pair, default_pair_specs
from mdp_core.mdp import FiniteMDP


def line_metric(n: int) -> np.ndarray:
    idx = np.arange(n, dtype=float)
    return np.abs(idx[:, None] - idx[None, :])


def make_mdp(kernel, reward, gamma=0.5, metric=None, init_dist=None, r_max=1.0) -> FiniteMDP:
    kernel = np.asarray(kernel, dtype=float)
    n_states, n_actions = kernel.shape[:2]
    return FiniteMDP(
        n_states=n_states,
        n_actions=n_actions,
        kernel=kernel,
        reward=np.asarray(reward, dtype=float),
        r_max=r_max,
        gamma=gamma,
        init_dist=np.full(n_states, 1.0 / n_states) if init_dist is None else init_dist,
        metric=line_metric(n_states) if metric is None else metric,
    )


@pytest.fixture
def chain_mdp() -> FiniteMDP:
    """0 -> 1 -> 2 -> 2, reward 1 only in the absorbing state, gamma 0.5"""
    kernel = np.zeros((3, 1, 3))
    kernel[0, 0, 1] = kernel[1, 0, 2] = kernel[2, 0, 2] = 1.0
    return make_mdp(kernel, [[0.0], [0.0], [1.0]], gamma=0.5)


@pytest.fixture
def grid_pair():
    """3x3 kinematic pair (source jams 'right')"""
    return build_pair(*default_pair_specs('kinematic', width=3, height=3, gamma=0.9))


@pytest.fixture
def grid_datasets(grid_pair):
    mdp_src, mdp_tar = grid_pair
    ds_src = collect_quality(mdp_src, 'medium', 400, seed=1, horizon=20, domain='src')
    ds_tar = collect_quality(mdp_tar, 'medium', 150, seed=2, horizon=20, domain='tar')
    return ds_src, ds_tar


@pytest.fixture
def tiny_run_config() -> RunConfig:
    return RunConfig.from_string("""
[grid]
width = 3
height = 3
gamma = 0.9

[data]
n_source = 300
n_target = 100
horizon = 20

[droco]
steps = 40
batch_src = 16
batch_tar = 16
n_members = 3

[eval]
perturb = kinematic:hard
seeds = 0, 1

[sweep]
betas = 0.5, 1.0
seeds = 0
""")
