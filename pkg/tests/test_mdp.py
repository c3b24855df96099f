import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mdp_core.mdp import FiniteMDP, TabularPolicy, TabularQ, TabularV, random_mdp, validate
from mdp_core.planning import (
    bellman_residual,
    expected_return,
    greedy_actions,
    optimal_q,
    optimal_q_in_sample,
    policy_eval_exact,
    policy_iteration,
    support_values_with_fallback,
)
from tests.conftest import make_mdp
from utils.exceptions import EmptySupportError, ValidationError


class TestValidate:
    def test_valid_chain(self, chain_mdp):
        validate(chain_mdp)

    def test_row_not_stochastic(self, chain_mdp):
        kernel = chain_mdp.kernel.copy()
        kernel[1, 0, 2] = 0.9
        with pytest.raises(ValidationError, match="not stochastic at \\(1, 0\\)"):
            validate(chain_mdp.with_kernel(kernel))

    def test_gamma_one_rejected(self, chain_mdp):
        chain_mdp.gamma = 1.0
        with pytest.raises(ValidationError, match="gamma"):
            validate(chain_mdp)

    def test_reward_above_r_max(self):
        mdp = make_mdp(np.ones((1, 1, 1)), [[2.0]], r_max=1.0)
        with pytest.raises(ValidationError, match="reward out of range"):
            validate(mdp)

    def test_asymmetric_metric(self):
        mdp = make_mdp(np.full((2, 1, 2), 0.5), [[0.0], [0.0]], metric=np.array([[0.0, 1.0], [2.0, 0.0]]))
        with pytest.raises(ValidationError, match="symmetric"):
            validate(mdp)

    def test_shape_mismatch(self):
        mdp = make_mdp(np.full((2, 1, 2), 0.5), [[0.0], [0.0]])
        mdp.reward = np.zeros((3, 1))
        with pytest.raises(ValidationError, match="reward has shape"):
            validate(mdp)


def test_json_round_trip(chain_mdp):
    restored = FiniteMDP.from_json(chain_mdp.to_json())
    assert_array_equal(restored.kernel, chain_mdp.kernel)
    assert_array_equal(restored.metric, chain_mdp.metric)
    assert restored.gamma == chain_mdp.gamma


def test_from_dict_missing_field(chain_mdp):
    data = chain_mdp.to_dict()
    del data['metric']
    with pytest.raises(ValidationError, match="metric"):
        FiniteMDP.from_dict(data)


def test_random_mdp_respects_branching():
    rng = np.random.default_rng(3)
    mdp = random_mdp(rng, 10, 3, branching=2)
    validate(mdp)
    assert ((mdp.kernel > 0).sum(axis=-1) <= 2).all()


def test_policy_rows_must_be_stochastic():
    with pytest.raises(ValidationError):
        TabularPolicy(np.array([[0.5, 0.4]]))


class TestPolicyEvaluation:
    def test_chain_values(self, chain_mdp):
        v = policy_eval_exact(chain_mdp, TabularPolicy.uniform(3, 1))
        assert_allclose(v.values, [0.5, 1.0, 2.0], atol=1e-9)

    def test_residual_certified(self):
        mdp = random_mdp(np.random.default_rng(0), 8, 3)
        pi = TabularPolicy.uniform(8, 3)
        assert bellman_residual(mdp, pi, policy_eval_exact(mdp, pi)) <= 1e-10

    def test_zero_reward_gives_zero(self):
        mdp = random_mdp(np.random.default_rng(1), 5, 2)
        mdp.reward = np.zeros_like(mdp.reward)
        assert_allclose(policy_eval_exact(mdp, TabularPolicy.uniform(5, 2)).values, 0.0, atol=1e-12)

    def test_expected_return_uses_rho(self, chain_mdp):
        chain_mdp.init_dist = np.array([1.0, 0.0, 0.0])
        assert expected_return(chain_mdp, TabularPolicy.uniform(3, 1)) == pytest.approx(0.5)


class TestInSampleOptimal:
    def test_restricted_support(self):
        # one state, self loop, action 0 pays 1, action 1 pays 0.5; only action 1 in support
        mdp = make_mdp(np.ones((1, 2, 1)), [[1.0, 0.5]], gamma=0.5)
        q = optimal_q_in_sample(mdp, np.array([[False, True]]))
        assert_allclose(q.values, [[1.5, 1.0]], atol=1e-9)

    def test_full_support_matches_policy_iteration(self):
        mdp = random_mdp(np.random.default_rng(7), 6, 3, gamma=0.8)
        assert_allclose(optimal_q(mdp).values, policy_iteration(mdp).values, atol=1e-8)

    def test_empty_support_raises(self):
        mdp = random_mdp(np.random.default_rng(2), 3, 2)
        support = np.array([[True, False], [False, False], [True, True]])
        with pytest.raises(EmptySupportError, match="state 1"):
            optimal_q_in_sample(mdp, support)

    def test_support_as_action_sets(self):
        mdp = make_mdp(np.ones((1, 2, 1)), [[1.0, 0.5]], gamma=0.5)
        q = optimal_q_in_sample(mdp, [[1]])
        assert q.values[0, 1] == pytest.approx(1.0)


def test_greedy_actions_ties_and_support():
    q = np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 3.0]])
    assert_array_equal(greedy_actions(q), [0, 2])
    support = np.array([[False, True, True], [True, True, False]])
    assert_array_equal(greedy_actions(q, support), [1, 1])


def test_support_values_fallback():
    q = np.array([[1.0, 4.0], [2.0, 3.0]])
    support = np.array([[True, False], [False, False]])
    assert_array_equal(support_values_with_fallback(q, support), [1.0, 3.0])


def test_tables_coerce_to_float():
    assert TabularQ([[1, 2]]).values.dtype == float
    assert TabularV([1]).values.dtype == float
