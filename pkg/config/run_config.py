# config/run_config.py - environment config and sectioned run documents

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Tuple

from dotenv import load_dotenv

from config.settings import (
    BETA_GRID,
    DEFAULT_GAMMA,
    DEFAULT_GOAL_REWARD,
    DEFAULT_HEIGHT,
    DEFAULT_HORIZON,
    DEFAULT_N_MEMBERS,
    DEFAULT_N_SOURCE,
    DEFAULT_N_TARGET,
    DEFAULT_SLIP,
    DEFAULT_SMOOTHING_ALPHA,
    DEFAULT_STEP_REWARD,
    DEFAULT_WIDTH,
)
from utils.exceptions import ConfigError

# Load environment variables
load_dotenv()


class Config:
    """Base configuration"""
    OUTPUT_DIR = os.environ.get('DROCO_OUTPUT_DIR', 'runs')
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_FORMAT = os.environ.get('LOG_FORMAT', 'text')
    SHOW_PROGRESS = os.environ.get('DROCO_PROGRESS', 'True').lower() == 'true'


class DevelopmentConfig(Config):
    """Development configuration"""
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'DEBUG')


class TestingConfig(Config):
    """Testing configuration"""
    OUTPUT_DIR = os.environ.get('DROCO_OUTPUT_DIR', 'test-runs')
    SHOW_PROGRESS = False


config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'default': Config,
}


def get_config(env=None):
    """Get configuration class"""
    if env is None:
        env = os.environ.get('DROCO_ENV', 'default')
    return config.get(env, config['default'])


@dataclass
class GridSection:
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    slip_prob: float = DEFAULT_SLIP
    goal_cell: int = -1
    step_reward: float = DEFAULT_STEP_REWARD
    goal_reward: float = DEFAULT_GOAL_REWARD
    gamma: float = DEFAULT_GAMMA
    shift: str = 'kinematic'
    jammed_action: str = 'right'
    jam_prob: float = 1.0
    rotation: int = 90
    mix_weight: float = 0.3


@dataclass
class DataSection:
    n_source: int = DEFAULT_N_SOURCE
    n_target: int = DEFAULT_N_TARGET
    quality_src: str = 'medium'
    quality_tar: str = 'medium'
    horizon: int = DEFAULT_HORIZON
    fraction: float = 1.0


@dataclass
class DrocoSection:
    beta: float = 0.5
    delta: float = 10.0
    tau: float = 0.7
    awr_alpha: float = 3.0
    n_members: int = DEFAULT_N_MEMBERS
    smoothing_alpha: float = DEFAULT_SMOOTHING_ALPHA
    q_lr: float = 0.1
    v_lr: float = 0.1
    batch_src: int = 128
    batch_tar: int = 128
    steps: int = 50_000
    mu: float = 0.005
    loss_kind: str = 'huber'


@dataclass
class EvalSection:
    perturb: List[str] = field(default_factory=lambda: ['all'])
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    mode: str = 'exact'
    n_episodes: int = 1000
    horizon: int = 200


@dataclass
class SweepSection:
    betas: List[float] = field(default_factory=lambda: list(BETA_GRID))
    deltas: List[float] = field(default_factory=lambda: [10.0])
    fractions: List[float] = field(default_factory=lambda: [1.0])
    n_members: List[int] = field(default_factory=lambda: [DEFAULT_N_MEMBERS])
    seeds: List[int] = field(default_factory=lambda: [0])


@dataclass
class RunSection:
    seed: int = 0
    output_dir: str = ''
    jobs: int = 1


SECTIONS: Dict[str, type] = {
    'grid': GridSection,
    'data': DataSection,
    'droco': DrocoSection,
    'eval': EvalSection,
    'sweep': SweepSection,
    'run': RunSection,
}

_LIST_ITEM_TYPES = {
    ('eval', 'perturb'): str,
    ('eval', 'seeds'): int,
    ('sweep', 'betas'): float,
    ('sweep', 'deltas'): float,
    ('sweep', 'fractions'): float,
    ('sweep', 'n_members'): int,
    ('sweep', 'seeds'): int,
}


def _coerce(section: str, key: str, raw: str, default):
    """Convert a raw INI string to the type of the section default"""
    text = raw.strip()
    try:
        if isinstance(default, bool):
            if text.lower() not in ('true', 'false', '1', '0', 'yes', 'no'):
                raise ValueError(text)
            return text.lower() in ('true', '1', 'yes')
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, list):
            item_type = _LIST_ITEM_TYPES[(section, key)]
            return [item_type(item.strip()) for item in text.split(',') if item.strip()]
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse '{raw}' as {type(default).__name__}")
    return text


@dataclass
class RunConfig:
    """Complete run document: grid pair, data, trainer, evaluation, sweep and run sections"""

    grid: GridSection = field(default_factory=GridSection)
    data: DataSection = field(default_factory=DataSection)
    droco: DrocoSection = field(default_factory=DrocoSection)
    eval: EvalSection = field(default_factory=EvalSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    run: RunSection = field(default_factory=RunSection)

    @classmethod
    def from_string(cls, text: str) -> "RunConfig":
        """
        Parse a sectioned key-value document

        Raises:
            ConfigError: on unknown sections, unknown keys or untyped values
        """
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"Malformed config: {e}")

        run_config = cls()
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError(f"Unknown config section: [{section}]")
            target = getattr(run_config, section)
            known = {f.name for f in fields(target)}
            for key, raw in parser.items(section):
                if key not in known:
                    raise ConfigError(f"Unknown key in [{section}]: {key}")
                setattr(target, key, _coerce(section, key, raw, getattr(target, key)))
        return run_config

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        return cls.from_string(path.read_text(encoding='utf-8'))

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_string(self) -> str:
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            for key, value in asdict(getattr(self, name)).items():
                if isinstance(value, list):
                    value = ", ".join(str(v) for v in value)
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)

    def config_hash(self) -> str:
        """Short digest of everything except the run section"""
        payload = {k: v for k, v in self.to_dict().items() if k != 'run'}
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode('utf-8')).hexdigest()
        return digest[:12]

    def run_dir(self, seed: int = None, output_dir: str = None) -> Path:
        """<output_dir>/<config-hash>-s<seed>"""
        root = output_dir or self.run.output_dir or get_config().OUTPUT_DIR
        seed = self.run.seed if seed is None else seed
        return Path(root) / f"{self.config_hash()}-s{seed}"

    def ensure_run_dir(self, seed: int = None, output_dir: str = None) -> Path:
        path = self.run_dir(seed, output_dir)
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"Cannot create run directory {path}: {e}")
        return path


def grid_fields(section: GridSection) -> Tuple[Dict, Dict]:
    """Split a grid section into (GridSpec kwargs, shift kwargs)"""
    spec_kwargs = {
        'width': section.width,
        'height': section.height,
        'slip_prob': section.slip_prob,
        'goal_cell': section.goal_cell,
        'step_reward': section.step_reward,
        'goal_reward': section.goal_reward,
        'gamma': section.gamma,
    }
    shift_kwargs = {
        'shift': section.shift,
        'jammed_action': section.jammed_action,
        'jam_prob': section.jam_prob,
        'rotation': section.rotation,
        'mix_weight': section.mix_weight,
    }
    return spec_kwargs, shift_kwargs
