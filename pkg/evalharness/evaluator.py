# evalharness/evaluator.py - exact and Monte Carlo policy evaluation, normalized scores

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from config.settings import DEFAULT_EVAL_EPISODES, DEFAULT_EVAL_HORIZON, SCORE_SPAN_TOL
from mdp_core.mdp import FiniteMDP, TabularPolicy
from mdp_core.planning import expected_return, greedy_policy, policy_iteration
from utils.exceptions import ValidationError
from utils.seeding import make_rng

logger = logging.getLogger(__name__)

EVAL_MODES = ('exact', 'monte_carlo')


def _sample_rows(cdf: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of a cumulative table"""
    u = rng.random(cdf.shape[0])[:, None] * cdf[:, -1:]
    return np.minimum((cdf <= u).sum(axis=1), cdf.shape[1] - 1)


def monte_carlo_return(policy: TabularPolicy, mdp: FiniteMDP, n_episodes: int, horizon: int,
                       seed: int) -> Tuple[float, float]:
    """Mean and std of the discounted return truncated at `horizon`, all episodes stepped together"""
    if horizon <= 0:
        raise ValidationError(f"horizon must be positive, got {horizon}")
    if n_episodes <= 0:
        raise ValidationError(f"n_episodes must be positive, got {n_episodes}")

    rng = make_rng(seed, "evaluate/monte_carlo")
    policy_cdf = np.cumsum(policy.probs, axis=1)
    kernel_cdf = np.cumsum(mdp.kernel, axis=2)
    states = _sample_rows(np.tile(np.cumsum(mdp.init_dist), (n_episodes, 1)), rng)
    returns = np.zeros(n_episodes)
    discount = 1.0
    for _ in range(horizon):
        actions = _sample_rows(policy_cdf[states], rng)
        returns += discount * mdp.reward[states, actions]
        states = _sample_rows(kernel_cdf[states, actions], rng)
        discount *= mdp.gamma
    return float(returns.mean()), float(returns.std())


def evaluate(policy: TabularPolicy, mdp: FiniteMDP, mode: str = 'exact',
             n_episodes: int = DEFAULT_EVAL_EPISODES, horizon: int = DEFAULT_EVAL_HORIZON,
             seed: int = 0) -> Tuple[float, float]:
    """
    Expected return of policy from rho

    Args:
        mode: 'exact' (policy evaluation, std 0) or 'monte_carlo'

    Returns:
        (mean, std)
    """
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValidationError(f"policy shape {policy.probs.shape} does not match MDP")
    if mode == 'exact':
        return expected_return(mdp, policy), 0.0
    if mode == 'monte_carlo':
        return monte_carlo_return(policy, mdp, n_episodes, horizon, seed)
    raise ValidationError(f"Unknown evaluation mode: {mode}. Valid: {', '.join(EVAL_MODES)}")


@dataclass(frozen=True)
class ScoreReference:
    """Returns of the uniform-random and the optimal policy on one MDP"""

    j_random: float
    j_expert: float

    @classmethod
    def of(cls, mdp: FiniteMDP) -> "ScoreReference":
        j_random = expected_return(mdp, TabularPolicy.uniform(mdp.n_states, mdp.n_actions))
        j_expert = expected_return(mdp, greedy_policy(policy_iteration(mdp)))
        return cls(j_random, j_expert)

    def score(self, ret: float) -> float:
        span = self.j_expert - self.j_random
        if abs(span) <= SCORE_SPAN_TOL * max(1.0, abs(self.j_random), abs(self.j_expert)):
            raise ValidationError("degenerate normalized score: expert and random returns coincide")
        return 100.0 * (ret - self.j_random) / span


def normalized_score(ret: float, mdp_tar: FiniteMDP) -> float:
    """(J - J_random) / (J_expert - J_random) x 100"""
    return ScoreReference.of(mdp_tar).score(ret)


def degradation_pct(clean: float, perturbed: float, random_floor: float) -> float:
    """(clean - perturbed) / |clean - random floor| x 100; 0 when clean sits on the floor"""
    span = abs(clean - random_floor)
    if span < 1e-12:
        return 0.0
    return 100.0 * (clean - perturbed) / span
