import json
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from datagen.dataset import OfflineDataset, collect
from datagen.gridworld import build_pair, default_pair_specs
from droco.losses import expectile_values
from droco.trainer import (
    DrocoConfig,
    DrocoTrainer,
    awr_policy,
    load_checkpoint,
    mean_source_q,
    save_checkpoint,
    train,
    train_baseline_merged,
)
from dynamics.ensemble import fit
from mdp_core.mdp import TabularPolicy
from mdp_core.planning import expected_return, greedy_policy, in_support_max, optimal_q_in_sample
from utils.exceptions import ConfigError, DivergenceError, ValidationError


@pytest.fixture
def small_cfg():
    return DrocoConfig(gamma=0.9, n_members=3, batch_src=16, batch_tar=16, steps=60, seed=3)


class TestConfig:
    def test_defaults_valid(self):
        DrocoConfig().validate()

    @pytest.mark.parametrize("overrides, message", [
        ({'beta': -1.0}, "beta"),
        ({'tau': 1.0}, "tau"),
        ({'mu': 0.0}, "mu"),
        ({'n_members': 0}, "n_members"),
        ({'loss_kind': 'cauchy'}, "loss_kind"),
    ])
    def test_invalid(self, overrides, message):
        with pytest.raises(ConfigError, match=message):
            DrocoConfig(**overrides).validate()

    def test_variants(self):
        assert DrocoConfig.fixed_penalty(delta=5.0).beta == 1.0
        baseline = DrocoConfig(beta=0.7).merged_baseline()
        assert (baseline.beta, baseline.loss_kind) == (0.0, 'l2')


def test_awr_policy_weights():
    q = np.array([[1.0, 0.0, 5.0], [0.0, 0.0, 0.0]])
    v = np.array([0.0, 0.0])
    behavior = np.array([[0.5, 0.5, 0.0], [0.0, 0.0, 0.0]])
    support = np.array([[True, True, False], [False, False, False]])
    pi = awr_policy(q, v, behavior, support, awr_alpha=1.0)
    assert_allclose(pi[0], [np.e / (np.e + 1.0), 1.0 / (np.e + 1.0), 0.0])
    assert_allclose(pi[1], 1.0 / 3.0)


class TestTraining:
    def test_zero_steps_returns_initial_tables(self, grid_datasets, grid_pair, small_cfg):
        state = train(*grid_datasets, grid_pair, replace(small_cfg, steps=0))
        assert state.step == 0
        assert_array_equal(state.q, 0.0)
        assert_array_equal(state.v, 0.0)
        assert state.loss_trace == []

    def test_deterministic(self, grid_datasets, grid_pair, small_cfg):
        first = train(*grid_datasets, grid_pair, small_cfg)
        again = train(*grid_datasets, grid_pair, small_cfg)
        assert_array_equal(first.q, again.q)
        assert_array_equal(first.policy, again.policy)

    def test_trace_and_policy(self, grid_datasets, grid_pair, small_cfg):
        state = train(*grid_datasets, grid_pair, small_cfg)
        assert state.step == small_cfg.steps
        assert len(state.loss_trace) == small_cfg.steps
        assert set(state.loss_trace[0]) == {'step', 'v_loss', 'q_loss_src', 'q_loss_tar', 'mean_penalty'}
        assert_allclose(state.policy.sum(axis=1), 1.0)
        assert (state.policy[~state.support.any(axis=1)] > 0).all()

    def test_support_from_both_domains(self, grid_datasets, grid_pair, small_cfg):
        ds_src, ds_tar = grid_datasets
        state = train(ds_src, ds_tar, grid_pair, small_cfg)
        assert_array_equal(state.support, (ds_src.counts + ds_tar.counts) > 0)

    def test_divergence_guard(self, grid_datasets, grid_pair, small_cfg):
        cfg = replace(small_cfg, q_lr=5.0, steps=200)
        with pytest.raises(DivergenceError) as excinfo:
            train(*grid_datasets, grid_pair, cfg)
        diagnostics = excinfo.value.diagnostics
        assert set(diagnostics) == {'table', 'step', 'max_abs', 'guard', 'last_losses'}
        assert diagnostics['max_abs'] > diagnostics['guard']

    def test_empty_datasets_rejected(self, grid_datasets, grid_pair, small_cfg):
        empty = OfflineDataset([], 9, 5)
        with pytest.raises(ValidationError):
            train(empty, grid_datasets[1], grid_pair, small_cfg)
        with pytest.raises(ValidationError):
            train_baseline_merged(grid_datasets[0], empty, small_cfg)

    def test_baseline_without_source(self, grid_datasets, grid_pair, small_cfg):
        state = train_baseline_merged(OfflineDataset([], 9, 5), grid_datasets[1], small_cfg, grid_pair)
        assert state.ensemble is None
        assert state.step == small_cfg.steps

    def test_mismatched_spaces(self, grid_datasets, small_cfg):
        with pytest.raises(ValidationError, match="different spaces"):
            DrocoTrainer(OfflineDataset([], 4, 5), grid_datasets[1], small_cfg, r_max=1.0)


def test_mean_source_q(grid_datasets, grid_pair, small_cfg):
    ds_src, ds_tar = grid_datasets
    state = train(ds_src, ds_tar, grid_pair, small_cfg)
    covered = ds_src.counts > 0
    assert mean_source_q(state, ds_src) == pytest.approx(state.q[covered].mean())
    assert mean_source_q(state, OfflineDataset([], 9, 5)) == 0.0


class TestCheckpoint:
    def test_round_trip(self, tmp_path, grid_datasets, grid_pair, small_cfg):
        state = train(*grid_datasets, grid_pair, small_cfg)
        path = save_checkpoint(state, small_cfg, tmp_path / 'ckpt' / 'checkpoint.json')
        restored, cfg = load_checkpoint(path)
        assert cfg == small_cfg
        assert_array_equal(restored.q, state.q)
        assert_array_equal(restored.support, state.support)
        assert_allclose(restored.ensemble.members, state.ensemble.members)
        assert_array_equal(restored.ensemble.counts, state.ensemble.counts)
        assert restored.step == state.step

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_checkpoint(tmp_path / 'absent.json')

    def test_malformed(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text(json.dumps({'config': {}}))
        with pytest.raises(ValidationError, match="Malformed"):
            load_checkpoint(path)


class TestMinibatches:
    def test_source_rows_first(self, grid_datasets, small_cfg):
        trainer = DrocoTrainer(*grid_datasets, small_cfg, r_max=1.0)
        batch = trainer.draw_batch(np.random.default_rng(0))
        assert len(batch) == small_cfg.batch_src + small_cfg.batch_tar
        assert batch.is_src[:small_cfg.batch_src].all()
        assert not batch.is_src[small_cfg.batch_src:].any()

    def test_penalty_is_zero_without_target_evidence(self, grid_datasets, small_cfg):
        ds_src, ds_tar = grid_datasets
        ensemble = fit(ds_tar, small_cfg.n_members, small_cfg.smoothing_alpha, small_cfg.seed)
        trainer = DrocoTrainer(ds_src, ds_tar, small_cfg, r_max=1.0, ensemble=ensemble)
        batch = ds_src.as_batch("src")
        v = np.linspace(-1.0, 1.0, ds_src.n_states)
        _, penalties, samples = trainer.batch_targets(v, batch, step=0)
        assert samples.shape == (len(batch), small_cfg.n_members + 1)
        assert_array_equal(samples[:, -1], batch.next_states)
        unseen = ds_tar.counts[batch.states, batch.actions] == 0
        assert unseen.any()
        assert_array_equal(penalties[unseen], 0.0)
        assert (penalties >= 0.0).all()

    def test_target_rows_are_not_penalized(self, grid_datasets, small_cfg):
        ds_src, ds_tar = grid_datasets
        ensemble = fit(ds_tar, small_cfg.n_members, small_cfg.smoothing_alpha, small_cfg.seed)
        trainer = DrocoTrainer(ds_src, ds_tar, small_cfg, r_max=1.0, ensemble=ensemble)
        batch = trainer.draw_batch(np.random.default_rng(1))
        targets, penalties, _ = trainer.batch_targets(np.ones(ds_tar.n_states), batch, step=0)
        assert_array_equal(penalties[~batch.is_src], 0.0)
        assert_allclose(targets[~batch.is_src], batch.rewards[~batch.is_src] + small_cfg.gamma)


def _uniform_datasets(mdp):
    behavior = TabularPolicy.uniform(mdp.n_states, mdp.n_actions)
    return (collect(mdp, behavior, 3000, horizon=20, seed=5, domain='src'),
            collect(mdp, behavior, 1500, horizon=20, seed=6, domain='tar'))


@pytest.mark.slow
def test_unpenalized_long_run_matches_in_sample_optimum():
    mdp_src, mdp_tar = build_pair(*default_pair_specs('none', width=3, height=3, gamma=0.9))
    ds_src, ds_tar = _uniform_datasets(mdp_tar)
    cfg = DrocoConfig(beta=0.0, tau=0.99, awr_alpha=50.0, gamma=0.9, n_members=3, batch_src=32, batch_tar=32,
                      steps=20_000, mu=0.05, seed=0)
    state = train(ds_src, ds_tar, (mdp_src, mdp_tar), cfg)

    support = state.support
    best = expected_return(mdp_tar, greedy_policy(optimal_q_in_sample(mdp_tar, support), support))
    learned = expected_return(mdp_tar, state.policy_table())
    assert best > 0.0
    assert learned >= 0.98 * best


def test_expectile_of_trained_q_reaches_support_max(grid_datasets, grid_pair, small_cfg):
    ds_src, ds_tar = grid_datasets
    state = train(ds_src, ds_tar, grid_pair, replace(small_cfg, steps=300))
    trainer = DrocoTrainer(ds_src, ds_tar, small_cfg, r_max=1.0)
    covered = state.support.any(axis=1)
    weights = np.where(state.support, trainer.behavior, 0.0)[covered]
    q = state.q[covered]
    top, _ = in_support_max(q, state.support[covered])
    spread = np.where(state.support[covered], q, np.inf).min(axis=1)
    spread = top - spread
    top_weight = np.where(state.support[covered] & (q == top[:, None]), weights, 0.0).sum(axis=1)

    gaps = []
    for tau in (0.9, 0.99, 0.999, 1.0 - 1e-7):
        gap = top - expectile_values(q, weights, tau)
        assert (gap >= -1e-9).all()
        # tau w_top (top - m) <= (1 - tau) (m - min) bounds the gap
        assert (gap <= (1.0 - tau) / (tau * top_weight) * spread + 1e-9).all()
        gaps.append(gap.max())
    assert gaps == sorted(gaps, reverse=True)
    assert gaps[-1] < 1e-3
