# operators/fixed_point.py - fixed-point iteration and support-condition radii

import logging
from typing import Optional

import numpy as np

from config.settings import FIXED_POINT_TOL, MAX_SWEEPS, SUPPORT_PROB_THRESHOLD
from datagen.dataset import OfflineDataset
from mdp_core.mdp import FiniteMDP, TabularQ
from operators.factory import BackupKind
from utils.exceptions import ConvergenceError, ValidationError
from utils.exporters import ResultExporter

logger = logging.getLogger(__name__)


def fixed_point(kind: BackupKind, init: Optional[TabularQ] = None, tol: float = FIXED_POINT_TOL,
                max_sweeps: int = MAX_SWEEPS) -> TabularQ:
    """
    Iterate a backup until the sup-norm change is at most tol

    Raises:
        ConvergenceError: if max_sweeps is exceeded
    """
    if tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    q = init if init is not None else TabularQ.zeros(kind.mdp.n_states, kind.mdp.n_actions)
    for sweep in range(max_sweeps):
        new_q = kind.apply(q)
        change = float(np.max(np.abs(new_q.values - q.values)))
        q = new_q
        if change <= tol:
            logger.debug("%s fixed point after %d sweeps", kind.tag, sweep + 1)
            return q
    raise ConvergenceError(f"{kind.tag} backup did not converge within {max_sweeps} sweeps")


def source_transitions(ds_src: OfflineDataset) -> np.ndarray:
    """Distinct (s, a, sp) triples among source-tagged records"""
    src = ds_src.is_src
    if not src.any():
        return np.zeros((0, 3), dtype=int)
    triples = np.stack([ds_src.states[src], ds_src.actions[src], ds_src.next_states[src]], axis=1)
    return np.unique(triples, axis=0)


def _target_support(mdp_tar: FiniteMDP, s: int, a: int) -> np.ndarray:
    return np.flatnonzero(mdp_tar.kernel[s, a] > SUPPORT_PROB_THRESHOLD)


def required_eps(ds_src: OfflineDataset, mdp_tar: FiniteMDP) -> float:
    """
    Smallest eps with support(P_tar(.|s, a)) inside U_eps(s'_src) for every source record

    Returns:
        max over source records of max over target-support states of d(s'_src, s'_tar)
    """
    eps = 0.0
    for s, a, sp in source_transitions(ds_src):
        support = _target_support(mdp_tar, s, a)
        if len(support):
            eps = max(eps, float(mdp_tar.metric[sp, support].max()))
    return eps


def compute_c_threshold(ds_src: OfflineDataset, mdp_tar: FiniteMDP, eps: float) -> float:
    """
    Largest c with U_c(s'_tar) inside U_eps(s'_src) for every source record and target-support s'_tar

    Returns:
        c, the state-space diameter when U_eps always covers everything, or -inf
        when even U_0 containment fails
    """
    if eps < 0:
        raise ValidationError(f"eps must be nonnegative, got {eps}")
    metric = mdp_tar.metric
    diameter = mdp_tar.diameter
    c = diameter

    for s, a, sp in source_transitions(ds_src):
        outside = metric[sp] > eps
        for target in _target_support(mdp_tar, s, a):
            distances = metric[target]
            if (outside & (distances <= 0)).any():
                return -np.inf
            if not outside.any():
                continue
            limit = distances[outside].min()
            c = min(c, float(distances[distances < limit].max()))
    return float(c)


def export_fixed_point(q: TabularQ, path) -> str:
    """Write a fixed point as CSV (state, action, q_value)"""
    return ResultExporter.export_q_table(q.values, path)
