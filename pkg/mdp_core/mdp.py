# mdp_core/mdp.py - tabular MDP and value tables

import json
import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from config.settings import STOCHASTIC_TOL
from utils.exceptions import ValidationError
from utils.validators import MDPValidator

logger = logging.getLogger(__name__)


@dataclass
class FiniteMDP:
    """Complete tabular MDP with a state pseudo-metric"""

    n_states: int
    n_actions: int
    kernel: np.ndarray      # [s, a, s']
    reward: np.ndarray      # [s, a]
    r_max: float
    gamma: float
    init_dist: np.ndarray   # [s]
    metric: np.ndarray      # [s, s]

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=float)
        self.reward = np.asarray(self.reward, dtype=float)
        self.init_dist = np.asarray(self.init_dist, dtype=float)
        self.metric = np.asarray(self.metric, dtype=float)
        self.n_states = int(self.n_states)
        self.n_actions = int(self.n_actions)
        self.r_max = float(self.r_max)
        self.gamma = float(self.gamma)

    @property
    def value_bound(self) -> float:
        """r_max / (1 - gamma)"""
        return self.r_max / (1.0 - self.gamma)

    @property
    def diameter(self) -> float:
        return float(self.metric.max()) if self.metric.size else 0.0

    def with_kernel(self, kernel: np.ndarray) -> "FiniteMDP":
        """Copy of this MDP with a different transition kernel"""
        return FiniteMDP(
            n_states=self.n_states,
            n_actions=self.n_actions,
            kernel=np.array(kernel, dtype=float),
            reward=self.reward.copy(),
            r_max=self.r_max,
            gamma=self.gamma,
            init_dist=self.init_dist.copy(),
            metric=self.metric.copy(),
        )

    def to_dict(self) -> Dict:
        return {
            'n_states': self.n_states,
            'n_actions': self.n_actions,
            'kernel': self.kernel.tolist(),
            'reward': self.reward.tolist(),
            'gamma': self.gamma,
            'init_dist': self.init_dist.tolist(),
            'metric': self.metric.tolist(),
            'r_max': self.r_max,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "FiniteMDP":
        missing = [k for k in ('n_states', 'n_actions', 'kernel', 'reward', 'gamma',
                               'init_dist', 'metric', 'r_max') if k not in data]
        if missing:
            raise ValidationError(f"MDP document missing fields: {', '.join(missing)}")
        mdp = cls(
            n_states=data['n_states'],
            n_actions=data['n_actions'],
            kernel=data['kernel'],
            reward=data['reward'],
            r_max=data['r_max'],
            gamma=data['gamma'],
            init_dist=data['init_dist'],
            metric=data['metric'],
        )
        validate(mdp)
        return mdp

    def to_json(self) -> str:
        # json writes floats with repr, i.e. up to 17 significant digits
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "FiniteMDP":
        return cls.from_dict(json.loads(text))


@dataclass
class TabularQ:
    values: np.ndarray  # [s, a]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "TabularQ":
        return cls(np.zeros((n_states, n_actions)))


@dataclass
class TabularV:
    values: np.ndarray  # [s]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


@dataclass
class TabularPolicy:
    probs: np.ndarray  # [s, a]

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        ok, errors = MDPValidator.validate_stochastic_rows(self.probs, label="policy")
        if not ok:
            raise ValidationError(errors[0])

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions: np.ndarray, n_actions: int) -> "TabularPolicy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((len(actions), n_actions))
        probs[np.arange(len(actions)), actions] = 1.0
        return cls(probs)


def validate(mdp: FiniteMDP) -> None:
    """
    Check every FiniteMDP invariant

    Raises:
        ValidationError: naming the first violated invariant with indices
    """
    checks = [
        MDPValidator.validate_shapes(mdp.n_states, mdp.n_actions, mdp.kernel,
                                     mdp.reward, mdp.init_dist, mdp.metric),
    ]
    if checks[0][0]:
        checks += [
            MDPValidator.validate_stochastic_rows(mdp.kernel, label="kernel"),
            MDPValidator.validate_reward(mdp.reward, mdp.r_max),
            MDPValidator.validate_stochastic_rows(mdp.init_dist, label="init_dist"),
            MDPValidator.validate_metric(mdp.metric),
        ]
    if not 0.0 < mdp.gamma < 1.0:
        checks.append((False, [f"gamma must lie in (0, 1), got {mdp.gamma}"]))

    for ok, errors in checks:
        if not ok:
            raise ValidationError(errors[0])


def support_of(row: np.ndarray, threshold: float = 0.0) -> np.ndarray:
    """Indices carrying strictly positive probability"""
    return np.flatnonzero(np.asarray(row) > threshold)


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int,
               gamma: Optional[float] = None, r_max: float = 1.0,
               branching: Optional[int] = None) -> FiniteMDP:
    """
    Random valid MDP for property checks

    Args:
        rng: Random generator
        n_states, n_actions: Sizes
        gamma: Discount (drawn from [0.5, 0.95] if None)
        r_max: Reward bound
        branching: Max number of next states per (s, a); dense if None

    Returns:
        FiniteMDP whose metric is Euclidean distance between random 2-D points
    """
    if gamma is None:
        gamma = float(rng.uniform(0.5, 0.95))

    kernel = np.zeros((n_states, n_actions, n_states))
    width = n_states if branching is None else max(1, min(branching, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            k = int(rng.integers(1, width + 1))
            targets = rng.choice(n_states, size=k, replace=False)
            kernel[s, a, targets] = rng.dirichlet(np.ones(k))
    # renormalize against dirichlet round-off
    kernel /= kernel.sum(axis=-1, keepdims=True)

    points = rng.uniform(0.0, 3.0, size=(n_states, 2))
    metric = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    metric = 0.5 * (metric + metric.T)
    np.fill_diagonal(metric, 0.0)

    mdp = FiniteMDP(
        n_states=n_states,
        n_actions=n_actions,
        kernel=kernel,
        reward=rng.uniform(-r_max, r_max, size=(n_states, n_actions)),
        r_max=r_max,
        gamma=gamma,
        init_dist=rng.dirichlet(np.ones(n_states)),
        metric=metric,
    )
    validate(mdp)
    return mdp


def is_stochastic(rows: np.ndarray) -> bool:
    return bool(np.all(rows >= 0) and np.all(np.abs(rows.sum(axis=-1) - 1.0) <= STOCHASTIC_TOL))
