# operators/factory.py - backup kinds and the tag -> backup map

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from dynamics.ensemble import EnsembleDynamics
from mdp_core.mdp import FiniteMDP, TabularQ
from mdp_core.planning import as_support_mask, full_support
from operators.backups import (
    UncertaintySpec,
    in_sample_backup,
    rcb_ensemble_expected_backup,
    rcb_exact_backup,
    rcb_practical_backup,
    standard_backup,
)
from utils.exceptions import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class BackupKind:
    """A fully parameterized kernel-mode backup"""

    tag: str
    mdp: FiniteMDP                        # source MDP for rcb kinds, target MDP for rcb_ensemble
    support: Optional[np.ndarray] = None
    eps: Optional[float] = None
    mdp_tar: Optional[FiniteMDP] = None
    ensemble: Optional[EnsembleDynamics] = None
    source_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.tag not in BackupFactory.BACKUP_MAP:
            raise ConfigError(f"Unknown backup kind: {self.tag}. Valid: {', '.join(BackupFactory.BACKUP_MAP)}")
        if self.support is None:
            self.support = full_support(self.mdp.n_states, self.mdp.n_actions)
        else:
            self.support = as_support_mask(self.support, self.mdp.n_states, self.mdp.n_actions)
        if self.tag in ('rcb_exact', 'rcb_practical') and self.eps is None:
            raise ConfigError(f"backup kind {self.tag} requires eps")
        if self.tag == 'rcb_ensemble' and self.ensemble is None:
            raise ConfigError("backup kind rcb_ensemble requires an ensemble")

    @property
    def gamma(self) -> float:
        return self.mdp.gamma

    @property
    def uncertainty(self) -> Optional[UncertaintySpec]:
        if self.eps is None:
            return None
        return UncertaintySpec(float(self.eps), self.mdp.metric, self.support)

    def apply(self, q: TabularQ) -> TabularQ:
        return BackupFactory.get_backup(self.tag)(self, q)


def _standard(kind: BackupKind, q: TabularQ) -> TabularQ:
    return standard_backup(q, kind.mdp)


def _in_sample(kind: BackupKind, q: TabularQ) -> TabularQ:
    return in_sample_backup(q, kind.mdp, kind.support)


def _rcb_exact(kind: BackupKind, q: TabularQ) -> TabularQ:
    return rcb_exact_backup(q, kind.mdp, kind.mdp_tar, kind.support, kind.uncertainty.eps, kind.source_mask)


def _rcb_practical(kind: BackupKind, q: TabularQ) -> TabularQ:
    return rcb_practical_backup(q, kind.mdp, kind.support, kind.uncertainty.eps,
                                mdp_tar=kind.mdp_tar, source_mask=kind.source_mask)


def _rcb_ensemble(kind: BackupKind, q: TabularQ) -> TabularQ:
    return rcb_ensemble_expected_backup(q, kind.mdp, kind.ensemble, kind.support, kind.source_mask)


class BackupFactory:
    """Resolves backup tags to kernel-mode backup functions"""

    BACKUP_MAP: Dict[str, Callable[[BackupKind, TabularQ], TabularQ]] = {
        'standard': _standard,
        'in_sample': _in_sample,
        'rcb_exact': _rcb_exact,
        'rcb_practical': _rcb_practical,
        'rcb_ensemble': _rcb_ensemble,
    }

    @staticmethod
    def get_backup(tag: str) -> Callable[[BackupKind, TabularQ], TabularQ]:
        if tag not in BackupFactory.BACKUP_MAP:
            raise ConfigError(f"Unknown backup kind: {tag}")
        return BackupFactory.BACKUP_MAP[tag]

    @staticmethod
    def get_all_tags():
        return list(BackupFactory.BACKUP_MAP)
