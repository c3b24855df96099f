import json

import numpy as np
import pandas as pd
import pytest

from mdp_core.mdp import TabularQ
from operators.backups import rcb_practical_backup
from utils.exceptions import ConfigError, ValidationError
from verify import checks
from verify.checks import (
    PropCheckResult,
    check_contraction,
    check_dual_ordering,
    check_fixed_point_uniqueness,
    check_limited_overestimation,
    check_operator_identities,
    check_test_time_bound,
    check_train_time_bound,
    sample_ball_perturbation,
    support_condition_instance,
)
from verify.suite import CheckerRegistry, run_all, run_checker, summarize, summary_table, write_summary


class TestPropCheckResult:
    def test_violation_count_bounded(self):
        with pytest.raises(ValidationError):
            PropCheckResult('dual', trials=3, violations=4, max_violation=1.0, seed=0)

    def test_summary(self):
        result = PropCheckResult('dual', trials=3, violations=0, max_violation=-1.0, seed=2, median_gap=1e-6)
        assert result.passed
        assert result.max_violation == 0.0
        assert result.to_summary() == {'prop': 'dual', 'trials': 3, 'violations': 0, 'max_violation': 0.0,
                                       'seed': 2, 'median_gap': 1e-6}
        assert 'median_gap' not in PropCheckResult('contraction', 1, 1, 0.5, 0).to_summary()


class TestCheckersPass:
    def test_contraction(self):
        result = check_contraction(trials=5, seed=1)
        assert result.passed, result.details
        assert result.trials == 5

    def test_dual_ordering(self):
        result = check_dual_ordering(trials=15, seed=2)
        assert result.passed, result.details
        assert result.median_gap is not None

    def test_train_time_bound(self):
        assert check_train_time_bound(trials=3, seed=3).passed

    def test_test_time_bound(self):
        result = check_test_time_bound(trials=2, n_perturbations=4, seed=4)
        assert result.passed, result.details

    def test_limited_overestimation(self):
        result = check_limited_overestimation(trials=2, resamples=300, seed=5)
        assert result.passed, result.details
        assert all(d['exact'] <= d['bound'] + 1e-9 for d in result.details)

    def test_uniqueness_covers_every_kind(self):
        result = check_fixed_point_uniqueness(trials=5, seed=6)
        assert result.passed, result.details
        assert {d['kind'] for d in result.details} == {
            'standard', 'in_sample', 'rcb_exact', 'rcb_practical', 'rcb_ensemble'}

    def test_identities(self):
        result = check_operator_identities(trials=3, seed=7)
        assert result.passed, result.details

    def test_trials_positive(self):
        with pytest.raises(ValidationError):
            check_contraction(trials=0)


def test_deterministic_per_seed():
    first = check_dual_ordering(trials=4, seed=11)
    again = check_dual_ordering(trials=4, seed=11)
    assert [d['lp'] for d in first.details] == [d['lp'] for d in again.details]


class TestMutationsAreCaught:
    def test_broken_huber(self, monkeypatch):
        monkeypatch.setattr(checks, 'huber', lambda a, delta: 0.5 * a * a)
        result = check_operator_identities(trials=2, seed=0)
        assert result.violations == 2
        assert result.max_violation > 100.0

    def test_biased_practical_backup(self, monkeypatch):
        def biased(q, mdp, support, eps, **kwargs):
            return TabularQ(rcb_practical_backup(q, mdp, support, eps, **kwargs).values + 1e-6)

        monkeypatch.setattr(checks, 'rcb_practical_backup', biased)
        assert check_operator_identities(trials=2, seed=0).violations == 2


def test_support_condition_instance():
    instance = support_condition_instance(np.random.default_rng(0), cover_all=True)
    assert (instance['covered'] == instance['support']).all()
    assert instance['eps'] >= 0.0
    assert instance['ds_src'].is_src.all()


def test_ball_perturbation_moves_within_radius():
    rng = np.random.default_rng(1)
    instance = support_condition_instance(rng, cover_all=True)
    mdp = instance['mdp_tar']
    kernel = sample_ball_perturbation(rng, mdp.kernel, mdp.metric, instance['covered'], 0.0)
    np.testing.assert_allclose(kernel, mdp.kernel)
    spread = sample_ball_perturbation(rng, mdp.kernel, mdp.metric, instance['covered'], mdp.diameter)
    np.testing.assert_allclose(spread.sum(axis=-1), 1.0)


class TestSuite:
    def test_resolve(self):
        assert CheckerRegistry.resolve(['all']) == CheckerRegistry.get_all_props()
        assert CheckerRegistry.resolve(None) == CheckerRegistry.get_all_props()
        assert CheckerRegistry.resolve(['identities', 'contraction']) == ['contraction', 'identities']

    def test_unknown_checker(self):
        with pytest.raises(ConfigError, match="Unknown checker"):
            CheckerRegistry.resolve(['prop9'])

    def test_run_checker_override(self):
        assert run_checker('identities', seed=0, trials=2).trials == 2

    def test_run_all_order_and_outputs(self, tmp_path):
        results = run_all(seed=0, props=['identities', 'dual'], trials=2, jobs=2)
        assert [r.prop for r in results] == ['dual', 'identities']

        summary = summarize(results)
        assert summary['passed'] is True
        paths = write_summary(results, tmp_path)
        document = json.loads(open(paths['json']).read())
        assert document['passed'] is True
        frame = pd.read_csv(paths['csv'])
        assert list(frame['prop']) == ['dual', 'identities']
        assert 'identities' in summary_table(results)

    def test_summary_fails_on_any_violation(self):
        results = [PropCheckResult('dual', 2, 0, 0.0, 0), PropCheckResult('contraction', 2, 1, 0.1, 0)]
        assert summarize(results)['passed'] is False
