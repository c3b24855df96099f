import numpy as np
import pytest

from config.run_config import RunConfig
from evalharness.orchestrator import (
    SWEEP_COLUMNS,
    ExperimentOrchestrator,
    SweepPoint,
    data_size_study,
    mark_beta_monotone,
)
from evalharness.perturbations import parse_specs
from utils.exceptions import ConfigError


@pytest.fixture
def orchestrator(tiny_run_config):
    return ExperimentOrchestrator(tiny_run_config)


class TestPipelinePieces:
    def test_mdps_follow_grid_section(self, orchestrator):
        mdp_src, mdp_tar = orchestrator.build_mdps()
        assert (mdp_tar.n_states, mdp_tar.n_actions) == (9, 5)
        assert mdp_tar.gamma == 0.9
        assert orchestrator.build_mdps()[0] is mdp_src

    def test_generated_sizes(self, orchestrator):
        ds_src, ds_tar = orchestrator.generate_data(seed=0)
        assert (len(ds_src), len(ds_tar)) == (300, 100)
        assert ds_src.is_src.all() and not ds_tar.is_src.any()
        assert len(orchestrator.generate_data(seed=0, fraction=0.5)[1]) == 50

    def test_droco_config(self, orchestrator):
        cfg = orchestrator.droco_config(seed=4, beta=1.2)
        assert (cfg.gamma, cfg.steps, cfg.n_members, cfg.seed, cfg.beta) == (0.9, 40, 3, 4, 1.2)

    def test_invalid_override(self, orchestrator):
        with pytest.raises(ConfigError):
            orchestrator.droco_config(seed=0, tau=2.0)

    def test_unknown_method(self, orchestrator):
        ds_src, ds_tar = orchestrator.generate_data(seed=0)
        with pytest.raises(ConfigError, match="Unknown method"):
            orchestrator.train_method('cql', ds_src, ds_tar, orchestrator.droco_config(0))

    def test_evaluate_state(self, orchestrator):
        ds_src, ds_tar = orchestrator.generate_data(seed=0)
        state = orchestrator.train_method('droco', ds_src, ds_tar, orchestrator.droco_config(0))
        report = orchestrator.evaluate_state(state, orchestrator.perturbation_specs(), [0, 1])
        assert len(report.rows) == 4


class TestSweep:
    def test_points(self, orchestrator):
        points = orchestrator.sweep_points()
        assert [p.beta for p in points] == [0.5, 1.0]
        assert points[0] == SweepPoint(0.5, 10.0, 1.0, 7, 0)

    def test_empty_grid(self, tiny_run_config):
        tiny_run_config.sweep.betas = []
        with pytest.raises(ConfigError, match="empty"):
            ExperimentOrchestrator(tiny_run_config).sweep_points()

    def test_rows(self, orchestrator):
        rows = orchestrator.run_sweep(orchestrator.sweep_points(), parse_specs(['kinematic:hard']), jobs=2)
        assert len(rows) == 2
        for row in rows:
            assert set(row) == set(SWEEP_COLUMNS)
            assert row['status'] == 'ok'
            assert isinstance(row['beta_monotone'], bool)
            assert np.isfinite(row['mean_q_src'])

    def test_failed_point_is_marked(self, orchestrator):
        rows = orchestrator.run_sweep([SweepPoint(-1.0, 10.0, 1.0, 3, 0)], [])
        assert rows[0]['status'].startswith('failed')
        assert rows[0]['norm_score'] is None


def test_mark_beta_monotone():
    base = {'delta': 10.0, 'fraction': 1.0, 'n_members': 3, 'seed': 0, 'status': 'ok'}
    rows = [{**base, 'beta': 0.0, 'mean_q_src': 2.0}, {**base, 'beta': 1.0, 'mean_q_src': 1.0},
            {**base, 'seed': 1, 'beta': 0.0, 'mean_q_src': 1.0}, {**base, 'seed': 1, 'beta': 1.0, 'mean_q_src': 3.0},
            {**base, 'beta': 0.5, 'status': 'failed: x', 'mean_q_src': None}]
    mark_beta_monotone(rows)
    assert [r.get('beta_monotone') for r in rows] == [True, True, False, False, None]


def test_data_size_study(tiny_run_config):
    report, pivot = data_size_study([0.5, 1.0], tiny_run_config, seeds=[0], specs=parse_specs(['kinematic:hard']))
    frame = report.to_frame()
    assert len(frame) == 2 * 2 * 2
    assert set(frame['method']) == {'droco', 'baseline'}
    assert list(pivot.index.names) == ['method', 'fraction']
    assert len(pivot) == 4


def test_data_size_study_rejects_fractions(tiny_run_config):
    with pytest.raises(ConfigError):
        data_size_study([0.0], tiny_run_config)


def default_grid_config():
    """8x8 kinematic grid with the default data sizes, step count and five evaluation seeds"""
    return RunConfig.from_string("""
[eval]
perturb = kinematic:hard
seeds = 0, 1, 2, 3, 4
""")


@pytest.mark.slow
def test_baseline_degrades_more_with_less_target_data():
    report, _ = data_size_study([0.1, 1.0], default_grid_config())
    small = report.degradation('kinematic_analog', 'hard', method='baseline', fraction=0.1)
    full = report.degradation('kinematic_analog', 'hard', method='baseline', fraction=1.0)
    assert small >= full


@pytest.mark.slow
def test_droco_degrades_no_more_than_baseline():
    run_config = default_grid_config()
    run_config.eval.perturb = ['all']
    report, _ = data_size_study([0.1], run_config)
    frame = report.to_frame()
    for (condition, level), _ in frame[frame['condition'] != 'clean'].groupby(['condition', 'level_or_scale']):
        droco = report.degradation(condition, level, method='droco')
        baseline = report.degradation(condition, level, method='baseline')
        assert droco <= baseline


@pytest.mark.slow
def test_source_q_nonincreasing_in_beta():
    run_config = default_grid_config()
    run_config.sweep.betas = [0.0, 0.5, 1.0, 1.2]
    orchestrator = ExperimentOrchestrator(run_config)
    rows = orchestrator.run_sweep(orchestrator.sweep_points(), [])
    assert all(row['status'] == 'ok' for row in rows)
    assert all(row['beta_monotone'] for row in rows)
