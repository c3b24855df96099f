# datagen package

from datagen.behavior import collect_quality, make_behavior
from datagen.dataset import (
    OfflineDataset,
    TransitionBatch,
    TransitionRecord,
    collect,
    load_dataset,
    save_dataset,
    subsample,
)
from datagen.gridworld import GridSpec, ShiftSpec, build_mdp, build_pair, default_pair_specs

__all__ = [
    'GridSpec',
    'OfflineDataset',
    'ShiftSpec',
    'TransitionBatch',
    'TransitionRecord',
    'build_mdp',
    'build_pair',
    'collect',
    'collect_quality',
    'default_pair_specs',
    'load_dataset',
    'make_behavior',
    'save_dataset',
    'subsample',
]
