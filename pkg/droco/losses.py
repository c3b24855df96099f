# droco/losses.py - regression losses, value penalty and penalized TD targets

from typing import Union

import numpy as np

from datagen.dataset import OfflineDataset, TransitionBatch, TransitionRecord
from dynamics.ensemble import EnsembleDynamics, sample_set
from utils.exceptions import ValidationError


def _as_output(values):
    values = np.asarray(values, dtype=float)
    return float(values) if values.ndim == 0 else values


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise ValidationError(f"tau must lie in (0, 1), got {tau}")


def _check_delta(delta: float) -> None:
    if delta <= 0:
        raise ValidationError(f"delta must be positive, got {delta}")


def expectile_loss(u, tau: float):
    """|tau - 1(u < 0)| u^2"""
    _check_tau(tau)
    u = np.asarray(u, dtype=float)
    return _as_output(np.abs(tau - (u < 0)) * u ** 2)


def expectile_grad(u, tau: float):
    """d/du of expectile_loss"""
    _check_tau(tau)
    u = np.asarray(u, dtype=float)
    return _as_output(2.0 * np.abs(tau - (u < 0)) * u)


def huber(a, delta: float):
    """0.5 a^2 inside |a| < delta, delta (|a| - delta / 2) outside"""
    _check_delta(delta)
    a = np.asarray(a, dtype=float)
    abs_a = np.abs(a)
    return _as_output(np.where(abs_a < delta, 0.5 * a ** 2, delta * (abs_a - 0.5 * delta)))


def huber_grad(a, delta: float):
    _check_delta(delta)
    return _as_output(np.clip(np.asarray(a, dtype=float), -delta, delta))


def value_penalty(record: TransitionRecord, v: np.ndarray, ensemble: EnsembleDynamics = None,
                  seed: int = 0, samples=None) -> float:
    """
    V(sp) - min over member samples of V(s'_i) for source records, 0 for target records

    Args:
        record: Transition
        v: State values
        ensemble: Fitted ensemble (unused when samples are given)
        seed: Seed for sample_set
        samples: Optional member draws at (record.s, record.a)
    """
    if record.domain != "src":
        return 0.0
    if samples is None:
        if ensemble is None:
            raise ValidationError("an ensemble or explicit samples are required for source records")
        samples = sample_set(ensemble, record.s, record.a, seed)
    v = np.asarray(v, dtype=float)
    return float(v[record.sp] - v[np.asarray(samples, dtype=int)].min())


def value_penalties(batch: Union[OfflineDataset, TransitionBatch], v: np.ndarray, samples: np.ndarray) -> np.ndarray:
    """Batched value_penalty with member draws [batch, n_members]"""
    if len(batch) == 0:
        return np.zeros(0)
    worst = v[samples].min(axis=1)
    return np.where(batch.is_src, v[batch.next_states] - worst, 0.0)


def td_target(record: TransitionRecord, v: np.ndarray, penalty: float, beta: float, gamma: float) -> float:
    """r + gamma (V(sp) - beta penalty)"""
    return float(record.r + gamma * (v[record.sp] - beta * penalty))


def td_targets(batch: Union[OfflineDataset, TransitionBatch], v: np.ndarray, penalties: np.ndarray,
               beta: float, gamma: float) -> np.ndarray:
    return batch.rewards + gamma * (v[batch.next_states] - beta * penalties)


def expectile_values(q: np.ndarray, weights: np.ndarray, tau: float, iterations: int = 200) -> np.ndarray:
    """
    Full-batch tau-expectile of Q(s, .) under per-state action weights

    Solves sum_a w(a) |tau - 1(Q(s, a) < m)| (Q(s, a) - m) = 0 for m by bisection;
    states with zero weight use uniform weights.
    """
    _check_tau(tau)
    q = np.asarray(q, dtype=float)
    weights = np.asarray(weights, dtype=float)
    totals = weights.sum(axis=1, keepdims=True)
    weights = np.where(totals > 0, weights, 1.0)
    lo = np.where(weights > 0, q, np.inf).min(axis=1)
    hi = np.where(weights > 0, q, -np.inf).max(axis=1)

    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        u = q - mid[:, None]
        grad = (weights * np.abs(tau - (u < 0)) * u).sum(axis=1)
        lo = np.where(grad > 0, mid, lo)
        hi = np.where(grad > 0, hi, mid)
    return 0.5 * (lo + hi)
