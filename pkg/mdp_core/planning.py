# mdp_core/planning.py - exact planning oracles

import logging
from typing import Optional, Tuple

import numpy as np

from config.settings import FIXED_POINT_TOL, MAX_SWEEPS
from mdp_core.mdp import FiniteMDP, TabularPolicy, TabularQ, TabularV
from utils.exceptions import ConvergenceError, EmptySupportError, ValidationError

logger = logging.getLogger(__name__)


def full_support(n_states: int, n_actions: int) -> np.ndarray:
    return np.ones((n_states, n_actions), dtype=bool)


def as_support_mask(support, n_states: int, n_actions: int) -> np.ndarray:
    """Accept a boolean [s, a] mask or a per-state sequence of action sets"""
    if isinstance(support, np.ndarray) and support.dtype == bool:
        if support.shape != (n_states, n_actions):
            raise ValidationError(f"support mask has shape {support.shape}, expected {(n_states, n_actions)}")
        return support
    mask = np.zeros((n_states, n_actions), dtype=bool)
    for s, actions in enumerate(support):
        for a in actions:
            mask[s, int(a)] = True
    return mask


def in_support_max(q: np.ndarray, support: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    max_{a in support(s)} Q(s, a) per state

    Returns:
        (values, empty) where empty marks states without any in-support action;
        their value is left at 0
    """
    empty = ~support.any(axis=1)
    masked = np.where(support, q, -np.inf)
    values = masked.max(axis=1)
    values[empty] = 0.0
    return values, empty


def support_values_with_fallback(q: np.ndarray, support: np.ndarray) -> np.ndarray:
    """In-support max, falling back to max over all actions at unsupported states"""
    values, empty = in_support_max(q, support)
    if empty.any():
        values[empty] = q[empty].max(axis=1)
    return values


def _bellman_policy(mdp: FiniteMDP, pi: TabularPolicy, v: np.ndarray) -> np.ndarray:
    r_pi = np.einsum('sa,sa->s', pi.probs, mdp.reward)
    p_pi = np.einsum('sa,sat->st', pi.probs, mdp.kernel)
    return r_pi + mdp.gamma * p_pi @ v


def policy_eval_exact(mdp: FiniteMDP, pi: TabularPolicy, tol: float = FIXED_POINT_TOL,
                      max_sweeps: int = MAX_SWEEPS) -> TabularV:
    """
    Solve V = r_pi + gamma P_pi V and certify the Bellman residual

    Args:
        mdp: Valid MDP
        pi: Policy table
        tol: Required sup-norm residual ||V - T^pi V||

    Returns:
        TabularV with residual <= tol
    """
    if tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    if pi.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValidationError(f"policy shape {pi.probs.shape} does not match MDP")

    r_pi = np.einsum('sa,sa->s', pi.probs, mdp.reward)
    p_pi = np.einsum('sa,sat->st', pi.probs, mdp.kernel)
    v = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * p_pi, r_pi)

    # refine by iteration when the linear solve is not accurate enough
    for _ in range(max_sweeps):
        new_v = r_pi + mdp.gamma * p_pi @ v
        residual = float(np.max(np.abs(new_v - v))) if v.size else 0.0
        if residual <= tol:
            return TabularV(v)
        v = new_v

    raise ConvergenceError(f"policy evaluation residual above {tol} after {max_sweeps} sweeps")


def bellman_residual(mdp: FiniteMDP, pi: TabularPolicy, v: TabularV) -> float:
    return float(np.max(np.abs(_bellman_policy(mdp, pi, v.values) - v.values)))


def policy_q(mdp: FiniteMDP, pi: TabularPolicy, tol: float = FIXED_POINT_TOL) -> TabularQ:
    v = policy_eval_exact(mdp, pi, tol).values
    return TabularQ(mdp.reward + mdp.gamma * mdp.kernel @ v)


def expected_return(mdp: FiniteMDP, pi: TabularPolicy, tol: float = FIXED_POINT_TOL) -> float:
    """E_{s0 ~ rho}[V^pi(s0)]"""
    return float(mdp.init_dist @ policy_eval_exact(mdp, pi, tol).values)


def optimal_q_in_sample(mdp: FiniteMDP, support, tol: float = FIXED_POINT_TOL,
                        max_sweeps: int = MAX_SWEEPS, init: Optional[np.ndarray] = None) -> TabularQ:
    """
    Fixed point of Q(s,a) <- r + gamma E_{s'}[max_{a' in support(s')} Q(s', a')]

    Raises:
        EmptySupportError: if any state has an empty support set
    """
    mask = as_support_mask(support, mdp.n_states, mdp.n_actions)
    empty = ~mask.any(axis=1)
    if empty.any():
        raise EmptySupportError(f"empty support at state {int(np.flatnonzero(empty)[0])}")

    q = np.zeros((mdp.n_states, mdp.n_actions)) if init is None else np.array(init, dtype=float)
    for sweep in range(max_sweeps):
        v, _ = in_support_max(q, mask)
        new_q = mdp.reward + mdp.gamma * mdp.kernel @ v
        change = float(np.max(np.abs(new_q - q)))
        q = new_q
        if change <= tol:
            logger.debug("in-sample value iteration converged after %d sweeps", sweep + 1)
            return TabularQ(q)

    raise ConvergenceError(f"in-sample value iteration did not converge within {max_sweeps} sweeps")


def optimal_q(mdp: FiniteMDP, tol: float = FIXED_POINT_TOL) -> TabularQ:
    return optimal_q_in_sample(mdp, full_support(mdp.n_states, mdp.n_actions), tol)


def greedy_actions(q: np.ndarray, support: Optional[np.ndarray] = None) -> np.ndarray:
    """Argmax per state restricted to support; lowest index wins ties"""
    masked = q if support is None else np.where(support, q, -np.inf)
    actions = np.argmax(masked, axis=1)
    if support is not None:
        empty = ~support.any(axis=1)
        actions[empty] = np.argmax(q[empty], axis=1)
    return actions


def greedy_policy(q: TabularQ, support: Optional[np.ndarray] = None) -> TabularPolicy:
    n_actions = q.values.shape[1]
    return TabularPolicy.deterministic(greedy_actions(q.values, support), n_actions)


def policy_iteration(mdp: FiniteMDP, max_iterations: int = 10_000) -> TabularQ:
    """Exact optimal Q by policy iteration with linear-solve evaluation"""
    actions = np.zeros(mdp.n_states, dtype=int)
    states = np.arange(mdp.n_states)
    for _ in range(max_iterations):
        p_pi = mdp.kernel[states, actions]
        r_pi = mdp.reward[states, actions]
        v = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * p_pi, r_pi)
        q = mdp.reward + mdp.gamma * mdp.kernel @ v
        best = np.argmax(q, axis=1)
        # keep the current action unless strictly improved
        improved = q[states, best] > q[states, actions] + 1e-12
        if not improved.any():
            return TabularQ(q)
        actions = np.where(improved, best, actions)
    raise ConvergenceError("policy iteration did not stabilise")
