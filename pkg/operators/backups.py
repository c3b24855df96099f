# operators/backups.py - in-sample and robust cross-domain Bellman backups

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from datagen.dataset import OfflineDataset, TransitionBatch
from dynamics.ensemble import EnsembleDynamics, expected_min_table, sample_batch
from mdp_core.mdp import FiniteMDP, TabularQ
from mdp_core.planning import as_support_mask, in_support_max, support_values_with_fallback
from mdp_core.transport import robust_inf_over_w1_ball
from utils.exceptions import EmptySupportError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UncertaintySpec:
    """State uncertainty set U_eps(s') = {s : d(s', s) <= eps} restricted to supported states"""

    eps: float
    metric: np.ndarray
    support_mask: np.ndarray

    def __post_init__(self):
        if self.eps < 0:
            raise ValidationError(f"eps must be nonnegative, got {self.eps}")

    def ball(self, state: int) -> np.ndarray:
        """Supported states within eps of `state`; {state} when none are"""
        members = np.flatnonzero((self.metric[state] <= self.eps) & self.support_mask.any(axis=1))
        return members if len(members) else np.array([state])


def _source_mask(source_mask: Optional[np.ndarray], shape: Tuple[int, int]) -> np.ndarray:
    if source_mask is None:
        return np.ones(shape, dtype=bool)
    source_mask = np.asarray(source_mask, dtype=bool)
    if source_mask.shape != shape:
        raise ValidationError(f"source mask has shape {source_mask.shape}, expected {shape}")
    return source_mask


def _merge_branches(mdp_src: FiniteMDP, mdp_tar: Optional[FiniteMDP], source: np.ndarray,
                    source_mask: Optional[np.ndarray], v: np.ndarray) -> np.ndarray:
    """Source-branch values on masked pairs, r + gamma P_tar v elsewhere"""
    mask = _source_mask(source_mask, source.shape)
    if mask.all():
        return source
    if mdp_tar is None:
        raise ValidationError("a target MDP is required when some pairs use the target branch")
    target = mdp_tar.reward + mdp_tar.gamma * mdp_tar.kernel @ v
    return np.where(mask, source, target)


def _check_eps(eps: float) -> None:
    if eps is None or eps < 0:
        raise ValidationError(f"eps must be nonnegative, got {eps}")


def in_sample_backup(q: TabularQ, mdp: FiniteMDP, support) -> TabularQ:
    """
    Q'(s, a) = r + gamma E_{s'}[max_{a' in support(s')} Q(s', a')]

    Raises:
        EmptySupportError: if a reachable next state has no supported action
    """
    mask = as_support_mask(support, mdp.n_states, mdp.n_actions)
    v, empty = in_support_max(q.values, mask)
    reachable = mdp.kernel.sum(axis=(0, 1)) > 0
    blocked = np.flatnonzero(empty & reachable)
    if len(blocked):
        raise EmptySupportError(f"empty support at reachable state {int(blocked[0])}")
    return TabularQ(mdp.reward + mdp.gamma * mdp.kernel @ v)


def standard_backup(q: TabularQ, mdp: FiniteMDP) -> TabularQ:
    return TabularQ(mdp.reward + mdp.gamma * mdp.kernel @ q.values.max(axis=1))


def rcb_exact_backup(q: TabularQ, mdp_src: FiniteMDP, mdp_tar: Optional[FiniteMDP], support, eps: float,
                     source_mask: Optional[np.ndarray] = None) -> TabularQ:
    """
    Source branch: r + gamma inf over the W1 ball of radius eps around P_src(.|s, a)

    Args:
        q: Current table
        mdp_src: Source MDP (rewards and kernel of the source branch)
        mdp_tar: Target MDP for pairs outside source_mask (may be None when every pair is source)
        support: Behavior support mask or per-state action sets
        eps: W1 budget
        source_mask: Boolean [s, a] of pairs backed up by the source branch; all pairs if None
    """
    _check_eps(eps)
    mask = as_support_mask(support, mdp_src.n_states, mdp_src.n_actions)
    v = support_values_with_fallback(q.values, mask)
    chosen = _source_mask(source_mask, mask.shape)

    robust = np.zeros((mdp_src.n_states, mdp_src.n_actions))
    for s, a in zip(*np.nonzero(chosen)):
        robust[s, a] = robust_inf_over_w1_ball(mdp_src.kernel[s, a], v, mdp_src.metric, eps)
    source = mdp_src.reward + mdp_src.gamma * robust
    return TabularQ(_merge_branches(mdp_src, mdp_tar, source, source_mask, v))


def ball_min_values(v: np.ndarray, metric: np.ndarray, support: np.ndarray, eps: float) -> np.ndarray:
    """min over supported states within eps of each s'; v(s') when the ball holds none"""
    in_ball = (metric <= eps) & support.any(axis=1)[None, :]
    values = np.where(in_ball, v[None, :], np.inf).min(axis=1)
    return np.where(in_ball.any(axis=1), values, v)


def rcb_practical_backup(q: TabularQ, mdp_src: FiniteMDP, support, eps: float,
                         mdp_tar: Optional[FiniteMDP] = None,
                         source_mask: Optional[np.ndarray] = None) -> TabularQ:
    """Source branch: r + gamma E_{s' ~ P_src}[min over U_eps(s') of max_{a' in support} Q]"""
    _check_eps(eps)
    mask = as_support_mask(support, mdp_src.n_states, mdp_src.n_actions)
    v = support_values_with_fallback(q.values, mask)
    source = mdp_src.reward + mdp_src.gamma * mdp_src.kernel @ ball_min_values(v, mdp_src.metric, mask, eps)
    return TabularQ(_merge_branches(mdp_src, mdp_tar, source, source_mask, v))


def rcb_ensemble_expected_backup(q: TabularQ, mdp_tar: FiniteMDP, ensemble: EnsembleDynamics, support,
                                 source_mask: Optional[np.ndarray] = None) -> TabularQ:
    """Kernel-mode ensemble target: r + gamma E[min_i v(s'_i)] with s'_i ~ member i independently"""
    mask = as_support_mask(support, mdp_tar.n_states, mdp_tar.n_actions)
    if ensemble.members.shape[1:] != mdp_tar.kernel.shape:
        raise ValidationError("ensemble state out of range for this MDP")
    v = support_values_with_fallback(q.values, mask)
    source = mdp_tar.reward + mdp_tar.gamma * expected_min_table(ensemble, v)
    return TabularQ(_merge_branches(mdp_tar, mdp_tar, source, source_mask, v))


def rcb_ensemble_backup(q: Union[TabularQ, np.ndarray], batch: Union[OfflineDataset, TransitionBatch],
                        ensemble: EnsembleDynamics, support, gamma: float,
                        rng: Optional[np.random.Generator] = None,
                        samples: Optional[np.ndarray] = None,
                        values: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-record ensemble targets

    Source records get r + gamma min_i V(s'_i) with s'_i drawn from member i; target records
    get r + gamma V(sp). V defaults to max_{a' in support(s)} Q(s, a').

    Args:
        q: Q table, bare or wrapped in TabularQ
        samples: Optional precomputed draws [batch, k]; one per member drawn with rng otherwise
        values: Optional state values [s] used in place of the support max of Q

    Returns:
        (targets [batch], samples)
    """
    q_values = q.values if isinstance(q, TabularQ) else np.asarray(q, dtype=float)
    if q_values.ndim != 2 or (ensemble.n_states, ensemble.n_actions) != q_values.shape:
        raise ValidationError("ensemble state out of range for this Q table")
    if values is None:
        v = support_values_with_fallback(q_values, as_support_mask(support, *q_values.shape))
    else:
        v = np.asarray(values, dtype=float)
        if v.shape != (ensemble.n_states,):
            raise ValidationError(f"values have shape {v.shape}, expected {(ensemble.n_states,)}")

    if samples is None:
        if rng is None:
            raise ValidationError("either samples or rng is required")
        samples = sample_batch(ensemble, batch.states, batch.actions, rng)
    samples = np.asarray(samples, dtype=int)
    if samples.ndim != 2 or samples.shape[0] != len(batch) or (len(batch) and samples.shape[1] < 1):
        raise ValidationError(f"samples have shape {samples.shape}, expected ({len(batch)}, k) with k >= 1")
    if samples.size and (samples.min() < 0 or samples.max() >= ensemble.n_states):
        raise ValidationError("ensemble state out of range")

    worst = v[samples].min(axis=1) if samples.size else np.zeros(len(batch))
    next_values = np.where(batch.is_src, worst, v[batch.next_states])
    return batch.rewards + gamma * next_values, samples
