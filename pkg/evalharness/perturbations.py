# evalharness/perturbations.py - test-time dynamics perturbations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from config.settings import (
    KINEMATIC_LEVELS,
    MIN_V_SCALES,
    MORPHOLOGY_LEVELS,
    MORPHOLOGY_TEST_ROTATION,
    MOVE_ACTIONS,
    PERTURBATION_KINDS,
    PERTURBATION_LEVELS,
)
from datagen.gridworld import jam_actions, mix_rotation
from mdp_core.mdp import FiniteMDP, validate
from utils.exceptions import ConfigError, ValidationError

logger = logging.getLogger(__name__)

# command-line aliases
KIND_ALIASES = {
    'kinematic': 'kinematic_analog',
    'kinematic_analog': 'kinematic_analog',
    'morph': 'morphology_analog',
    'morphology': 'morphology_analog',
    'morphology_analog': 'morphology_analog',
    'minq': 'min_v_adversarial',
    'minv': 'min_v_adversarial',
    'min_v_adversarial': 'min_v_adversarial',
}

LEVEL_MAPS = {
    'kinematic_analog': KINEMATIC_LEVELS,
    'morphology_analog': MORPHOLOGY_LEVELS,
    'min_v_adversarial': MIN_V_SCALES,
}


@dataclass(frozen=True)
class PerturbationSpec:
    """A perturbation kind at a named level, or at an explicit scale for min_v"""

    kind: str
    level: Optional[str] = None
    scale: Optional[float] = None

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ConfigError(f"Unknown perturbation kind: {self.kind}")
        if self.level is None and self.scale is None:
            raise ConfigError(f"{self.kind} needs a level or a scale")
        if self.level is not None and self.level not in LEVEL_MAPS[self.kind]:
            raise ConfigError(f"Unknown level '{self.level}' for {self.kind}")
        if self.scale is not None:
            if self.kind != 'min_v_adversarial':
                raise ConfigError(f"{self.kind} takes a level, not a scale")
            if self.scale < 0:
                raise ConfigError(f"min_v scale must be nonnegative, got {self.scale}")

    @property
    def param(self) -> float:
        """jam_prob, mix_weight or ball radius"""
        if self.scale is not None:
            return float(self.scale)
        return float(LEVEL_MAPS[self.kind][self.level])

    @property
    def label(self) -> str:
        return self.level if self.level is not None else f"{self.scale:g}"

    @classmethod
    def parse(cls, text: str) -> "PerturbationSpec":
        """'kinematic:easy', 'morph:hard', 'minq:0.5' or 'minq:medium'"""
        kind, sep, value = text.strip().partition(':')
        if not sep or kind not in KIND_ALIASES:
            raise ConfigError(f"Cannot parse perturbation '{text}'")
        kind = KIND_ALIASES[kind]
        if value in LEVEL_MAPS[kind]:
            return cls(kind, level=value)
        if kind != 'min_v_adversarial':
            raise ConfigError(f"Unknown level '{value}' for {kind}")
        try:
            return cls(kind, scale=float(value))
        except ValueError:
            raise ConfigError(f"Cannot parse min_v scale '{value}'")


def parse_specs(items: List[str]) -> List[PerturbationSpec]:
    """Expand command-line items; 'none' adds nothing, 'all' adds every kind at every level"""
    specs = []
    for item in items:
        for token in str(item).split(','):
            token = token.strip()
            if not token or token == 'none':
                continue
            if token == 'all':
                specs.extend(PerturbationSpec(kind, level=level)
                             for kind in PERTURBATION_KINDS for level in PERTURBATION_LEVELS)
            else:
                specs.append(PerturbationSpec.parse(token))
    return specs


def _ball_minimizers(v_attack: np.ndarray, metric: np.ndarray, radius: float) -> np.ndarray:
    """One-hot map sending each state to the V-minimizer of its closed radius ball; ties to the lowest index"""
    target = np.argmin(np.where(metric <= radius, v_attack[None, :], np.inf), axis=1)
    relocation = np.zeros_like(metric, dtype=float)
    relocation[np.arange(len(target)), target] = 1.0
    return relocation


def min_v_relocation(v_attack: np.ndarray, metric: np.ndarray, scale: float) -> np.ndarray:
    """
    Row-stochastic map M[s', s_bar] moving each next state towards low V within distance `scale`

    With lo the largest realized distance <= scale and hi the next one, rows mix the lo-ball and
    hi-ball minimizers with weight (scale - lo) / (hi - lo) on hi, so every row moves at most
    `scale` in expectation. Scales at or past the diameter use the full-ball minimizer.
    """
    metric = np.asarray(metric, dtype=float)
    distances = np.unique(metric)
    lo = distances[distances <= scale].max()
    above = distances[distances > scale]
    relocation = _ball_minimizers(v_attack, metric, lo)
    if len(above) == 0 or scale == lo:
        return relocation
    hi = above.min()
    weight = (scale - lo) / (hi - lo)
    return (1.0 - weight) * relocation + weight * _ball_minimizers(v_attack, metric, hi)


def perturb(mdp_tar: FiniteMDP, spec: PerturbationSpec, v_attack: Optional[np.ndarray] = None) -> FiniteMDP:
    """
    Copy of mdp_tar with an edited kernel; rewards, gamma, rho and metric are untouched

    Args:
        mdp_tar: Clean target MDP
        spec: Perturbation
        v_attack: State values of the evaluated agent (required for min_v)
    """
    if spec.kind == 'kinematic_analog':
        kernel = jam_actions(mdp_tar.kernel, MOVE_ACTIONS, spec.param)
    elif spec.kind == 'morphology_analog':
        kernel = mix_rotation(mdp_tar.kernel, MORPHOLOGY_TEST_ROTATION, spec.param)
    elif spec.kind == 'min_v_adversarial':
        if v_attack is None:
            raise ValidationError("min_v perturbation needs the attacked agent's V")
        v_attack = np.asarray(v_attack, dtype=float)
        if v_attack.shape != (mdp_tar.n_states,):
            raise ValidationError(f"V has shape {v_attack.shape}, expected ({mdp_tar.n_states},)")
        kernel = mdp_tar.kernel @ min_v_relocation(v_attack, mdp_tar.metric, spec.param)
    else:
        raise ConfigError(f"Unresolved perturbation: {spec}")

    perturbed = mdp_tar.with_kernel(kernel)
    validate(perturbed)
    return perturbed
