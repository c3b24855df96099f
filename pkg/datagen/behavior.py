# datagen/behavior.py - behavior policies for the four data qualities

import logging
from typing import Dict, Tuple

import numpy as np

from config.settings import DEFAULT_HORIZON, EXPERT_EPSILON, MEDIUM_EPSILON, QUALITIES
from datagen.dataset import OfflineDataset, collect
from mdp_core.mdp import FiniteMDP, TabularPolicy
from mdp_core.planning import greedy_actions, optimal_q
from utils.exceptions import ConfigError
from utils.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

# mix quality -> component qualities, concatenated 50/50
MIX_COMPONENTS: Dict[str, Tuple[str, str]] = {
    'medium_replay_mix': ('replay', 'medium'),
    'medium_expert_mix': ('medium', 'expert'),
}


def epsilon_greedy(q: np.ndarray, epsilon: float) -> TabularPolicy:
    n_states, n_actions = q.shape
    probs = np.full((n_states, n_actions), epsilon / n_actions)
    probs[np.arange(n_states), greedy_actions(q)] += 1.0 - epsilon
    return TabularPolicy(probs)


def replay_policy(q: np.ndarray, seed: int) -> TabularPolicy:
    """Per-state epsilon drawn from [medium epsilon, 1]: a spread of early-training policies"""
    n_states, n_actions = q.shape
    eps = make_rng(seed, "behavior/replay").uniform(MEDIUM_EPSILON, 1.0, size=n_states)
    probs = eps[:, None] / n_actions * np.ones((n_states, n_actions))
    probs[np.arange(n_states), greedy_actions(q)] += 1.0 - eps
    return TabularPolicy(probs)


def _component_policy(q: np.ndarray, quality: str, seed: int) -> TabularPolicy:
    if quality == 'expert':
        return epsilon_greedy(q, EXPERT_EPSILON)
    if quality == 'medium':
        return epsilon_greedy(q, MEDIUM_EPSILON)
    return replay_policy(q, seed)


def make_behavior(mdp: FiniteMDP, quality: str, seed: int) -> TabularPolicy:
    """
    Behavior policy for a data quality

    Args:
        mdp: Environment the policy acts in
        quality: One of medium, expert, medium_replay_mix, medium_expert_mix
        seed: Root seed (only the replay component is random)

    Returns:
        TabularPolicy; a mix returns the state-wise average of its two components
    """
    if quality not in QUALITIES:
        raise ConfigError(f"Unknown quality: {quality}. Valid: {', '.join(QUALITIES)}")
    q = optimal_q(mdp).values
    if quality in MIX_COMPONENTS:
        first, second = MIX_COMPONENTS[quality]
        probs = 0.5 * (_component_policy(q, first, seed).probs + _component_policy(q, second, seed).probs)
        return TabularPolicy(probs)
    return _component_policy(q, quality, seed)


def collect_quality(mdp: FiniteMDP, quality: str, n: int, seed: int,
                    horizon: int = DEFAULT_HORIZON, domain: str = "tar") -> OfflineDataset:
    """
    Collect n records at a data quality; mixes concatenate n//2 + (n - n//2) rollouts

    Raises:
        ConfigError: on an unknown quality tag
    """
    if quality not in QUALITIES:
        raise ConfigError(f"Unknown quality: {quality}. Valid: {', '.join(QUALITIES)}")
    if quality not in MIX_COMPONENTS:
        return collect(mdp, make_behavior(mdp, quality, seed), n, horizon, seed, domain)

    q = optimal_q(mdp).values
    first, second = MIX_COMPONENTS[quality]
    n_first = n // 2
    parts = []
    for label, part_quality, part_n in (('a', first, n_first), ('b', second, n - n_first)):
        if part_n == 0:
            continue
        part_seed = derive_seed(seed, f"quality/{label}")
        parts.append(collect(mdp, _component_policy(q, part_quality, seed), part_n, horizon, part_seed, domain))
    logger.info("Collected %s %s dataset: %d records", domain, quality, n)
    return OfflineDataset.concat(parts)
