# droco package

from droco.losses import expectile_loss, expectile_values, huber, td_target, value_penalty
from droco.trainer import (
    DrocoConfig,
    DrocoTrainer,
    TrainState,
    load_checkpoint,
    mean_source_q,
    save_checkpoint,
    train,
    train_baseline_merged,
)

__all__ = [
    'DrocoConfig',
    'DrocoTrainer',
    'TrainState',
    'expectile_loss',
    'expectile_values',
    'huber',
    'load_checkpoint',
    'mean_source_q',
    'save_checkpoint',
    'td_target',
    'train',
    'train_baseline_merged',
    'value_penalty',
]
