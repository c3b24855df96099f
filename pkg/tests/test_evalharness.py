import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from config.settings import REPORT_COLUMNS
from evalharness.evaluator import ScoreReference, degradation_pct, evaluate, normalized_score
from evalharness.orchestrator import robustness_curve
from evalharness.perturbations import PerturbationSpec, min_v_relocation, parse_specs, perturb
from evalharness.report import CLEAN, EvalReport
from mdp_core.mdp import TabularPolicy
from mdp_core.planning import expected_return, greedy_policy, optimal_q, policy_eval_exact, policy_iteration
from tests.conftest import line_metric
from utils.exceptions import ConfigError, ValidationError


@pytest.fixture
def expert_policy(grid_pair):
    return greedy_policy(optimal_q(grid_pair[1]))


class TestPerturbationSpec:
    def test_parse_levels(self):
        spec = PerturbationSpec.parse('kinematic:easy')
        assert (spec.kind, spec.level, spec.param) == ('kinematic_analog', 'easy', 0.2)
        assert PerturbationSpec.parse('morph:hard').kind == 'morphology_analog'
        assert PerturbationSpec.parse('minq:medium').param == 0.5

    def test_parse_scale(self):
        spec = PerturbationSpec.parse('minq:0.5')
        assert spec.scale == 0.5
        assert spec.label == '0.5'

    @pytest.mark.parametrize("text", ['kinematic', 'warp:easy', 'kinematic:0.3', 'minq:lots', 'minq:-1'])
    def test_parse_errors(self, text):
        with pytest.raises(ConfigError):
            PerturbationSpec.parse(text)

    def test_scale_only_for_min_v(self):
        with pytest.raises(ConfigError, match="takes a level"):
            PerturbationSpec('kinematic_analog', scale=0.5)

    def test_parse_specs(self):
        assert parse_specs(['none']) == []
        assert len(parse_specs(['all'])) == 9
        assert [s.kind for s in parse_specs(['kinematic:easy,morph:hard', 'minq:0'])] == [
            'kinematic_analog', 'morphology_analog', 'min_v_adversarial']


class TestPerturb:
    def test_zero_levels_leave_kernel(self, grid_pair):
        mdp = grid_pair[1]
        for text in ('kinematic:none', 'morph:none', 'minq:0.0'):
            perturbed = perturb(mdp, PerturbationSpec.parse(text), v_attack=np.zeros(mdp.n_states))
            assert_allclose(perturbed.kernel, mdp.kernel)

    def test_only_kernel_changes(self, grid_pair):
        mdp = grid_pair[1]
        perturbed = perturb(mdp, PerturbationSpec.parse('kinematic:hard'))
        assert not np.allclose(perturbed.kernel, mdp.kernel)
        assert_array_equal(perturbed.reward, mdp.reward)
        assert_array_equal(perturbed.metric, mdp.metric)
        assert perturbed.gamma == mdp.gamma

    def test_min_v_needs_values(self, grid_pair):
        with pytest.raises(ValidationError, match="V"):
            perturb(grid_pair[1], PerturbationSpec.parse('minq:1'))
        with pytest.raises(ValidationError, match="shape"):
            perturb(grid_pair[1], PerturbationSpec.parse('minq:1'), v_attack=np.zeros(3))

    def test_relocation_ties_to_lowest_index(self):
        relocation = min_v_relocation(np.array([1.0, 0.0, 0.0]), line_metric(3), 1.0)
        assert_array_equal(relocation.argmax(axis=1), [1, 1, 1])

    def test_fractional_radius_moves_at_most_scale(self):
        metric = line_metric(4)
        relocation = min_v_relocation(np.array([3.0, 2.0, 1.0, 0.0]), metric, 0.5)
        assert_allclose(relocation.sum(axis=1), 1.0)
        assert ((relocation * metric).sum(axis=1) <= 0.5 + 1e-12).all()
        assert relocation[0, 0] == pytest.approx(0.5)
        assert relocation[0, 1] == pytest.approx(0.5)

    def test_min_v_levels_are_separated(self, grid_pair, expert_policy):
        mdp = grid_pair[1]
        v = policy_eval_exact(mdp, expert_policy).values
        returns = [expected_return(perturb(mdp, PerturbationSpec('min_v_adversarial', level), v_attack=v),
                                   expert_policy)
                   for level in ('easy', 'medium', 'hard')]
        assert returns[0] > returns[1] > returns[2]

    def test_min_v_never_helps_attacked_policy(self, grid_pair, expert_policy):
        mdp = grid_pair[1]
        v = policy_eval_exact(mdp, expert_policy).values
        for scale in (0.5, 1.0, 2.0):
            attacked = perturb(mdp, PerturbationSpec('min_v_adversarial', scale=scale), v_attack=v)
            assert expected_return(attacked, expert_policy) <= expected_return(mdp, expert_policy) + 1e-9


class TestEvaluate:
    def test_exact_chain(self, chain_mdp):
        mean, std = evaluate(TabularPolicy.uniform(3, 1), chain_mdp)
        assert mean == pytest.approx(3.5 / 3.0)
        assert std == 0.0

    def test_monte_carlo_close_to_exact(self, chain_mdp):
        mean, std = evaluate(TabularPolicy.uniform(3, 1), chain_mdp, mode='monte_carlo',
                             n_episodes=4000, horizon=60, seed=1)
        assert mean == pytest.approx(3.5 / 3.0, abs=0.05)
        assert std > 0.0

    def test_monte_carlo_reproducible(self, grid_pair, expert_policy):
        first = evaluate(expert_policy, grid_pair[1], 'monte_carlo', n_episodes=50, horizon=30, seed=4)
        assert first == evaluate(expert_policy, grid_pair[1], 'monte_carlo', n_episodes=50, horizon=30, seed=4)

    def test_invalid_mode_and_shape(self, chain_mdp):
        with pytest.raises(ValidationError, match="Unknown evaluation mode"):
            evaluate(TabularPolicy.uniform(3, 1), chain_mdp, mode='sampled')
        with pytest.raises(ValidationError, match="shape"):
            evaluate(TabularPolicy.uniform(2, 1), chain_mdp)


class TestScores:
    def test_reference_endpoints(self, grid_pair, expert_policy):
        mdp = grid_pair[1]
        reference = ScoreReference.of(mdp)
        assert reference.j_random < reference.j_expert
        assert reference.score(reference.j_expert) == pytest.approx(100.0)
        assert normalized_score(expected_return(mdp, expert_policy), mdp) == pytest.approx(100.0, abs=1e-6)

    def test_degenerate_reference(self, chain_mdp):
        with pytest.raises(ValidationError, match="degenerate"):
            normalized_score(1.0, chain_mdp)

    def test_near_equal_reference_is_degenerate(self):
        reference = ScoreReference(j_random=7.0 / 6.0, j_expert=7.0 / 6.0 - 5.8e-11)
        with pytest.raises(ValidationError, match="degenerate"):
            reference.score(1.0)

    def test_expert_is_exact_optimum(self, grid_pair):
        mdp = grid_pair[1]
        expected = float(mdp.init_dist @ policy_iteration(mdp).values.max(axis=1))
        assert ScoreReference.of(mdp).j_expert == pytest.approx(expected, abs=1e-10)

    def test_degradation(self):
        assert degradation_pct(10.0, 8.0, 0.0) == pytest.approx(20.0)
        assert degradation_pct(10.0, 12.0, 0.0) == pytest.approx(-20.0)
        assert degradation_pct(1.0, 0.5, 1.0) == 0.0


class TestReport:
    @staticmethod
    def row(condition, seed, degradation):
        return {'condition': condition, 'level_or_scale': 'hard', 'seed': seed, 'return_mean': 1.0,
                'return_std': 0.0, 'norm_score': 50.0, 'degradation_pct': degradation}

    def test_csv_columns(self, tmp_path):
        report = EvalReport([self.row('kinematic_analog', 0, 5.0)], [0]).tagged(method='droco')
        frame = pd.read_csv(report.to_csv(tmp_path / 'eval.csv'))
        assert list(frame.columns) == ['method'] + REPORT_COLUMNS

    def test_merge_and_degradation(self):
        first = EvalReport([self.row('kinematic_analog', 0, 4.0)], [0]).tagged(method='droco')
        second = EvalReport([self.row('kinematic_analog', 1, 8.0)], [1, 0]).tagged(method='droco')
        merged = EvalReport.merge([first, second])
        assert merged.seeds == [0, 1]
        assert merged.degradation('kinematic_analog', 'hard', method='droco') == pytest.approx(6.0)
        summary = merged.summary()
        assert len(summary) == 1


class TestRobustnessCurve:
    def test_rows_and_clean_reference(self, grid_pair, expert_policy):
        specs = parse_specs(['kinematic:hard', 'minq:0.0'])
        report = robustness_curve(expert_policy, grid_pair[1], specs, seeds=[0, 1])
        frame = report.to_frame()
        assert len(frame) == 6
        assert (frame.loc[frame['condition'] == CLEAN, 'degradation_pct'] == 0.0).all()
        minq = frame[frame['condition'] == 'min_v_adversarial']
        assert_allclose(minq['degradation_pct'], 0.0, atol=1e-9)
        jammed = frame[frame['condition'] == 'kinematic_analog']
        assert (jammed['degradation_pct'] > 0.0).all()

    def test_parallel_matches_serial(self, grid_pair, expert_policy):
        specs = parse_specs(['morph:medium'])
        serial = robustness_curve(expert_policy, grid_pair[1], specs, seeds=[0, 1, 2])
        parallel = robustness_curve(expert_policy, grid_pair[1], specs, seeds=[0, 1, 2], jobs=3)
        assert serial.rows == parallel.rows

    def test_needs_a_seed(self, grid_pair, expert_policy):
        with pytest.raises(ConfigError):
            robustness_curve(expert_policy, grid_pair[1], [], seeds=[])
