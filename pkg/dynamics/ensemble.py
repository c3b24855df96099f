# dynamics/ensemble.py - bootstrap ensemble of categorical target-dynamics models

import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from datagen.dataset import OfflineDataset
from mdp_core.mdp import FiniteMDP
from utils.exceptions import ValidationError
from utils.seeding import make_rng
from utils.validators import MDPValidator

logger = logging.getLogger(__name__)


@dataclass
class EnsembleDynamics:
    """N categorical next-state models; members[i, s, a] is a distribution over s'"""

    members: np.ndarray   # [n, s, a, s']
    smoothing_alpha: float
    trained_on: str
    rng_seed: int
    counts: Optional[np.ndarray] = None   # bootstrap next-state counts behind each member

    def __post_init__(self):
        self.members = np.asarray(self.members, dtype=float)
        if self.members.ndim != 4 or self.members.shape[0] < 1:
            raise ValidationError(f"members must have shape [n, s, a, s'] with n >= 1, got {self.members.shape}")
        if self.members.shape[1] != self.members.shape[3]:
            raise ValidationError(f"members must map the state space onto itself, got {self.members.shape}")
        ok, errors = MDPValidator.validate_stochastic_rows(self.members, label="ensemble member")
        if not ok:
            raise ValidationError(errors[0])
        if self.counts is not None:
            self.counts = np.asarray(self.counts, dtype=float)
            if self.counts.shape != self.members.shape:
                raise ValidationError(f"counts shape {self.counts.shape} does not match members {self.members.shape}")
            if (self.counts < 0).any():
                raise ValidationError("bootstrap counts must be nonnegative")

    @property
    def n_members(self) -> int:
        return self.members.shape[0]

    @property
    def n_states(self) -> int:
        return self.members.shape[1]

    @property
    def n_actions(self) -> int:
        return self.members.shape[2]

    def check_pair(self, s: int, a: int) -> None:
        if not (0 <= s < self.n_states and 0 <= a < self.n_actions):
            raise ValidationError(f"(s={s}, a={a}) outside the ensemble's ({self.n_states}, {self.n_actions}) space")

    def to_dict(self) -> Dict:
        return {
            'members': self.members.tolist(),
            'smoothing_alpha': self.smoothing_alpha,
            'trained_on': self.trained_on,
            'rng_seed': self.rng_seed,
            'counts': self.counts.astype(int).tolist() if self.counts is not None else None,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "EnsembleDynamics":
        return cls(
            members=data['members'],
            smoothing_alpha=float(data['smoothing_alpha']),
            trained_on=str(data['trained_on']),
            rng_seed=int(data['rng_seed']),
            counts=data.get('counts'),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "EnsembleDynamics":
        return cls.from_dict(json.loads(text))


def smoothed_rows(next_counts: np.ndarray, smoothing_alpha: float) -> np.ndarray:
    """(count + alpha) / (total + alpha |S|); unvisited rows come out uniform"""
    n_states = next_counts.shape[-1]
    totals = next_counts.sum(axis=-1, keepdims=True)
    return (next_counts + smoothing_alpha) / (totals + smoothing_alpha * n_states)


def fit(dataset_tar: OfflineDataset, n_members: int, smoothing_alpha: float, seed: int) -> EnsembleDynamics:
    """
    Fit each member by smoothed categorical MLE on its own bootstrap resample

    Args:
        dataset_tar: Target-domain records
        n_members: Ensemble size N
        smoothing_alpha: Add-alpha smoothing
        seed: Root seed; member i resamples from stream ("ensemble/fit", i)

    Returns:
        EnsembleDynamics
    """
    if len(dataset_tar) == 0:
        raise ValidationError("cannot fit an ensemble on an empty dataset")
    if n_members < 1:
        raise ValidationError(f"n_members must be >= 1, got {n_members}")
    if smoothing_alpha <= 0:
        raise ValidationError(f"smoothing_alpha must be positive, got {smoothing_alpha}")

    n = len(dataset_tar)
    shape = (dataset_tar.n_states, dataset_tar.n_actions, dataset_tar.n_states)
    counts = np.zeros((n_members,) + shape)
    for i in range(n_members):
        idx = make_rng(seed, "ensemble/fit", i).integers(0, n, size=n)
        np.add.at(counts[i], (dataset_tar.states[idx], dataset_tar.actions[idx], dataset_tar.next_states[idx]), 1.0)
    members = smoothed_rows(counts, smoothing_alpha)

    logger.debug("Fit %d-member ensemble on %d records", n_members, n)
    return EnsembleDynamics(members, float(smoothing_alpha), dataset_tar.fingerprint, int(seed), counts)


def sample_set(ens: EnsembleDynamics, s: int, a: int, seed: int) -> List[int]:
    """One categorical draw per member at (s, a)"""
    ens.check_pair(s, a)
    rng = make_rng(seed, "ensemble/sample")
    return [int(x) for x in sample_batch(ens, np.array([s]), np.array([a]), rng)[0]]


def sample_batch(ens: EnsembleDynamics, states: np.ndarray, actions: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    """
    Draw one next state per member for every (s, a) in the batch

    Returns:
        int array [batch, n_members]
    """
    states, actions = _check_query(ens, states, actions)
    return _categorical_draws(ens.members[:, states, actions], rng)


def sample_informed(ens: EnsembleDynamics, states: np.ndarray, actions: np.ndarray, fallback: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """
    Draw one next state per member from its unsmoothed bootstrap counts

    A member whose resample never visited (s, a) returns `fallback` for that row
    instead of a draw from the uniform smoothing prior. Ensembles built without
    counts use sample_batch.

    Args:
        fallback: int [batch]; usually the observed next states

    Returns:
        int array [batch, n_members]
    """
    if ens.counts is None:
        return sample_batch(ens, states, actions, rng)
    states, actions = _check_query(ens, states, actions)
    fallback = np.asarray(fallback, dtype=int)
    if fallback.shape != states.shape:
        raise ValidationError(f"fallback has shape {fallback.shape}, expected {states.shape}")

    rows = ens.counts[:, states, actions]                        # [n, batch, s']
    informed = rows.sum(axis=-1) > 0                             # [n, batch]
    draws = _categorical_draws(np.where(informed[..., None], rows, 1.0), rng)
    return np.where(informed.T, draws, fallback[:, None])


def _check_query(ens: EnsembleDynamics, states, actions) -> Tuple[np.ndarray, np.ndarray]:
    states = np.asarray(states, dtype=int)
    actions = np.asarray(actions, dtype=int)
    if states.shape != actions.shape:
        raise ValidationError(f"states {states.shape} and actions {actions.shape} differ in shape")
    if len(states) and (states.min() < 0 or states.max() >= ens.n_states
                        or actions.min() < 0 or actions.max() >= ens.n_actions):
        raise ValidationError("ensemble query outside the state/action space")
    return states, actions


def _categorical_draws(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw per row of unnormalized weights [n, batch, s']; returns [batch, n]"""
    cdf = np.cumsum(weights, axis=-1)
    n_members, n_rows = weights.shape[:2]
    u = rng.random((n_rows, n_members)).T[..., None] * cdf[..., -1:]
    return (cdf <= u).sum(axis=-1).T

def tv_error(ens: EnsembleDynamics, mdp_tar: FiniteMDP, mask: Optional[np.ndarray] = None) -> float:
    """
    max over members and (s, a) of TV(member row, true row)

    Args:
        mask: Optional boolean [s, a]; restricts the max to selected pairs
    """
    if ens.members.shape[1:] != mdp_tar.kernel.shape:
        raise ValidationError(f"ensemble shape {ens.members.shape[1:]} does not match kernel {mdp_tar.kernel.shape}")
    tv = 0.5 * np.abs(ens.members - mdp_tar.kernel[None]).sum(axis=-1).max(axis=0)
    if mask is not None:
        tv = tv[mask]
    return float(tv.max()) if tv.size else 0.0


def expected_min_table(ens: EnsembleDynamics, v: np.ndarray) -> np.ndarray:
    """
    E[min_i v(X_i)] with independent X_i ~ member i, for every (s, a)

    With states ranked by value, P(min rank >= k) is the product over members
    of their tail mass from rank k, so E[min] = sum_k v_(k) (T(k) - T(k+1)).
    """
    v = np.asarray(v, dtype=float)
    order = np.argsort(v, kind='stable')
    ranked = ens.members[..., order]
    tails = np.flip(np.cumsum(np.flip(ranked, axis=-1), axis=-1), axis=-1)
    survival = np.clip(tails, 0.0, 1.0).prod(axis=0)                     # [s, a, k]
    next_survival = np.concatenate([survival[..., 1:], np.zeros(survival.shape[:-1] + (1,))], axis=-1)
    return (survival - next_survival) @ v[order]
