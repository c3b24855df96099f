# datagen/gridworld.py - source/target gridworld pairs with dynamics shifts

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Tuple, Union

import numpy as np

from config.settings import (
    ACTION_NAMES,
    DEFAULT_GAMMA,
    DEFAULT_GOAL_REWARD,
    DEFAULT_HEIGHT,
    DEFAULT_SLIP,
    DEFAULT_STEP_REWARD,
    DEFAULT_WIDTH,
    DOWN,
    LEFT,
    MOVE_ACTIONS,
    RIGHT,
    STAY,
    UP,
)
from mdp_core.mdp import FiniteMDP, validate
from utils.exceptions import ConfigError, ValidationError
from utils.validators import RangeValidator

logger = logging.getLogger(__name__)

SHIFT_KINDS = ("none", "kinematic_analog", "morphology_analog")
N_ACTIONS = len(ACTION_NAMES)


def action_index(action: Union[int, str]) -> int:
    if isinstance(action, str):
        if action not in ACTION_NAMES:
            raise ConfigError(f"Unknown action: {action}")
        return ACTION_NAMES.index(action)
    if not 0 <= int(action) < N_ACTIONS:
        raise ConfigError(f"Unknown action: {action}")
    return int(action)


@dataclass(frozen=True)
class ShiftSpec:
    """Dynamics shift applied on top of the base grid kernel"""

    kind: str = "none"
    jammed_action: Union[int, str] = "up"
    jam_prob: float = 0.0
    rotation: int = 90
    mix_weight: float = 0.0

    @classmethod
    def none(cls) -> "ShiftSpec":
        return cls()

    @classmethod
    def kinematic(cls, jammed_action: Union[int, str] = "up", jam_prob: float = 1.0) -> "ShiftSpec":
        return cls(kind="kinematic_analog", jammed_action=jammed_action, jam_prob=jam_prob)

    @classmethod
    def morphology(cls, rotation: int = 90, mix_weight: float = 0.3) -> "ShiftSpec":
        return cls(kind="morphology_analog", rotation=rotation, mix_weight=mix_weight)


@dataclass(frozen=True)
class GridSpec:
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    slip_prob: float = DEFAULT_SLIP
    goal_cell: int = -1
    step_reward: float = DEFAULT_STEP_REWARD
    goal_reward: float = DEFAULT_GOAL_REWARD
    gamma: float = DEFAULT_GAMMA
    shift: ShiftSpec = field(default_factory=ShiftSpec)

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def goal(self) -> int:
        """Goal index; -1 means the bottom-right cell"""
        return self.n_states - 1 if self.goal_cell == -1 else self.goal_cell

    def validate(self) -> None:
        ok, errors = RangeValidator.validate(
            {
                'width': self.width,
                'height': self.height,
                'slip_prob': self.slip_prob,
                'gamma': self.gamma,
                'jam_prob': self.shift.jam_prob,
                'mix_weight': self.shift.mix_weight,
            },
            {
                'width': (1, None, True, False),
                'height': (1, None, True, False),
                'slip_prob': (0.0, 1.0, True, False),
                'gamma': (0.0, 1.0, False, False),
                'jam_prob': (0.0, 1.0, True, True),
                'mix_weight': (0.0, 1.0, True, True),
            },
        )
        if not 0 <= self.goal < self.n_states:
            ok = False
            errors.append(f"goal_cell {self.goal_cell} outside a {self.width}x{self.height} grid")
        if self.shift.kind not in SHIFT_KINDS:
            ok = False
            errors.append(f"Unknown shift kind: {self.shift.kind}")
        if self.shift.rotation % 90 != 0:
            ok = False
            errors.append(f"rotation must be a multiple of 90, got {self.shift.rotation}")
        if not ok:
            raise ConfigError("; ".join(errors))
        action_index(self.shift.jammed_action)

    def shared_fields(self) -> Tuple:
        return (self.width, self.height, self.slip_prob, self.goal,
                self.step_reward, self.goal_reward, self.gamma)


def move(state: int, action: int, width: int, height: int) -> int:
    """Deterministic move; walls keep the agent in place"""
    row, col = divmod(state, width)
    if action == UP:
        row = max(row - 1, 0)
    elif action == DOWN:
        row = min(row + 1, height - 1)
    elif action == LEFT:
        col = max(col - 1, 0)
    elif action == RIGHT:
        col = min(col + 1, width - 1)
    return row * width + col


def manhattan_metric(width: int, height: int) -> np.ndarray:
    rows, cols = np.divmod(np.arange(width * height), width)
    return (np.abs(rows[:, None] - rows[None, :]) + np.abs(cols[:, None] - cols[None, :])).astype(float)


def base_kernel(spec: GridSpec) -> np.ndarray:
    """Slippery grid kernel: intended move w.p. 1 - slip, uniform over all actions w.p. slip"""
    n = spec.n_states
    kernel = np.zeros((n, N_ACTIONS, n))
    for s in range(n):
        if s == spec.goal:
            kernel[s, :, s] = 1.0
            continue
        for a in range(N_ACTIONS):
            for executed in range(N_ACTIONS):
                prob = spec.slip_prob / N_ACTIONS + (1.0 - spec.slip_prob) * (executed == a)
                if prob > 0:
                    kernel[s, a, move(s, executed, spec.width, spec.height)] += prob
    return kernel


def jam_actions(kernel: np.ndarray, actions: Iterable[int], jam_prob: float) -> np.ndarray:
    """Jammed actions behave as 'stay' with probability jam_prob"""
    jammed = kernel.copy()
    for a in actions:
        jammed[:, a] = (1.0 - jam_prob) * kernel[:, a] + jam_prob * kernel[:, STAY]
    return jammed


def rotate_actions(kernel: np.ndarray, rotation: int) -> np.ndarray:
    """Kernel in which every move action executes the move rotated clockwise by `rotation` degrees"""
    steps = (rotation // 90) % 4
    rotated = kernel.copy()
    for a in MOVE_ACTIONS:
        rotated[:, a] = kernel[:, MOVE_ACTIONS[(a + steps) % 4]]
    return rotated


def mix_rotation(kernel: np.ndarray, rotation: int, mix_weight: float) -> np.ndarray:
    return (1.0 - mix_weight) * kernel + mix_weight * rotate_actions(kernel, rotation)


def apply_shift(kernel: np.ndarray, shift: ShiftSpec) -> np.ndarray:
    if shift.kind == "kinematic_analog":
        return jam_actions(kernel, [action_index(shift.jammed_action)], shift.jam_prob)
    if shift.kind == "morphology_analog":
        return mix_rotation(kernel, shift.rotation, shift.mix_weight)
    return kernel.copy()


def build_mdp(spec: GridSpec) -> FiniteMDP:
    spec.validate()
    n = spec.n_states
    reward = np.full((n, N_ACTIONS), float(spec.step_reward))
    reward[spec.goal, :] = spec.goal_reward

    init_dist = np.ones(n)
    if n > 1:
        init_dist[spec.goal] = 0.0
    init_dist /= init_dist.sum()

    r_max = max(abs(spec.step_reward), abs(spec.goal_reward)) or 1.0
    mdp = FiniteMDP(
        n_states=n,
        n_actions=N_ACTIONS,
        kernel=apply_shift(base_kernel(spec), spec.shift),
        reward=reward,
        r_max=r_max,
        gamma=spec.gamma,
        init_dist=init_dist,
        metric=manhattan_metric(spec.width, spec.height),
    )
    validate(mdp)
    return mdp


def build_pair(spec_src: GridSpec, spec_tar: GridSpec) -> Tuple[FiniteMDP, FiniteMDP]:
    """
    Build source and target MDPs that differ only in their kernels

    Raises:
        ValidationError: if the specs disagree on any shared field
    """
    if spec_src.shared_fields() != spec_tar.shared_fields():
        raise ValidationError(
            f"spec mismatch on shared fields: {spec_src.shared_fields()} vs {spec_tar.shared_fields()}"
        )
    mdp_src = build_mdp(spec_src)
    mdp_tar = build_mdp(spec_tar)
    logger.info("Built %dx%d grid pair (source shift: %s)", spec_src.width, spec_src.height, spec_src.shift.kind)
    return mdp_src, mdp_tar


def default_pair_specs(shift: str = "kinematic", jammed_action: Union[int, str] = "right",
                       jam_prob: float = 1.0, rotation: int = 90, mix_weight: float = 0.3,
                       **grid_kwargs) -> Tuple[GridSpec, GridSpec]:
    """Spec pair for the named source shift: 'kinematic', 'morph' or 'none'"""
    shifts: Dict[str, ShiftSpec] = {
        'none': ShiftSpec.none(),
        'kinematic': ShiftSpec.kinematic(jammed_action, jam_prob),
        'morph': ShiftSpec.morphology(rotation, mix_weight),
    }
    if shift not in shifts:
        raise ConfigError(f"Unknown shift: {shift}")
    target = GridSpec(**grid_kwargs)
    return replace(target, shift=shifts[shift]), target
