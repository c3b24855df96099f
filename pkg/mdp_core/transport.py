# mdp_core/transport.py - discrete optimal-transport primitives

"""
Exact W1 machinery on finite state spaces.

The W1-ball infimum min {q.v : W1(q, p) <= eps} is a linear program over
couplings with one mass constraint per source atom and a single transport
budget. It is solved exactly by a greedy fill: every atom contributes the
upper concave hull of its (transport cost, value gain) options, and hull
segments from all atoms are consumed in descending gain-per-cost order until
the budget is spent. `robust_inf_lp` solves the same program with HiGHS and
serves as the oracle.
"""

import logging
from typing import List, Tuple

import numpy as np
from scipy.optimize import linprog

from mdp_core.mdp import TabularQ
from utils.exceptions import DrocoLabError, ValidationError

logger = logging.getLogger(__name__)

_LP_OPTIONS = {
    'primal_feasibility_tolerance': 1e-10,
    'dual_feasibility_tolerance': 1e-10,
}


def _check_vectors(p: np.ndarray, q: np.ndarray, metric: np.ndarray) -> None:
    if p.shape != q.shape or metric.shape != (len(p), len(p)):
        raise ValidationError(
            f"dimension mismatch: p {p.shape}, q {q.shape}, metric {metric.shape}"
        )


def wasserstein_1(p, q, metric) -> float:
    """
    Exact W1 distance by solving the transportation problem

    Args:
        p, q: Probability vectors over the same states
        metric: Ground pseudo-metric

    Returns:
        min over couplings of sum gamma(i, j) d(i, j)
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    metric = np.asarray(metric, dtype=float)
    _check_vectors(p, q, metric)

    rows = np.flatnonzero(p > 0)
    cols = np.flatnonzero(q > 0)
    if len(rows) == 0 or len(cols) == 0:
        raise ValidationError("W1 requires nonempty supports")
    if len(rows) == 1 or len(cols) == 1:
        # a point mass on either side admits exactly one coupling
        return _single_atom_cost(p, q, metric, rows, cols)

    pr = p[rows]
    qc = q[cols] * (pr.sum() / q[cols].sum())
    n, m = len(rows), len(cols)
    cost = metric[np.ix_(rows, cols)].ravel()

    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([pr, qc])

    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method='highs', options=_LP_OPTIONS)
    if res.status != 0:
        raise DrocoLabError(f"transportation LP failed: {res.message}")
    return max(float(res.fun), 0.0)


def _single_atom_cost(p, q, metric, rows, cols) -> float:
    """Cost of the unique coupling when one side is a point mass"""
    if len(rows) == 1:
        return float(metric[rows[0], cols] @ q[cols] / q[cols].sum() * p[rows[0]])
    return float(metric[rows, cols[0]] @ p[rows] / p[rows].sum() * q[cols[0]])


def _atom_segments(mass: float, gains: np.ndarray, costs: np.ndarray) -> Tuple[float, List[Tuple[float, float, float]]]:
    """
    Hull segments of one atom's (cost, gain) options

    Returns:
        (free_gain, segments) where free_gain is collected at zero cost and each
        segment is (gain per unit cost, total cost, total gain) for this atom's mass
    """
    keep = gains > 0
    if not keep.any():
        return 0.0, []
    g = gains[keep]
    c = costs[keep]

    zero = c <= 0
    g0 = float(g[zero].max()) if zero.any() else 0.0
    positive = (~zero) & (g > g0)
    if not positive.any():
        return mass * g0, []

    cs, gs = c[positive], g[positive]
    order = np.lexsort((-gs, cs))
    hull = [(0.0, g0)]
    for k in order:
        x, y = float(cs[k]), float(gs[k])
        if y <= hull[-1][1]:
            continue
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (x - x1) <= (y - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append((x, y))

    segments = []
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        dc, dg = x2 - x1, y2 - y1
        segments.append((dg / dc, mass * dc, mass * dg))
    return mass * g0, segments


def robust_inf_over_w1_ball(p, v, metric, eps: float) -> float:
    """
    min over q with W1(q, p) <= eps of q.v

    Args:
        p: Reference probability vector
        v: Value per state
        metric: Ground pseudo-metric
        eps: Transport budget

    Returns:
        Exact infimum, never below min(v)
    """
    if eps < 0:
        raise ValidationError(f"eps must be nonnegative, got {eps}")
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    metric = np.asarray(metric, dtype=float)
    _check_vectors(p, v, metric)

    gain = 0.0
    segments = []
    for i in np.flatnonzero(p > 0):
        free, atom_segments = _atom_segments(float(p[i]), v[i] - v, metric[i])
        gain += free
        segments.extend(atom_segments)

    budget = float(eps)
    # stable sort keeps per-atom segment order on equal ratios
    for ratio, cost, seg_gain in sorted(segments, key=lambda seg: -seg[0]):
        if budget <= 0:
            break
        if cost <= budget:
            gain += seg_gain
            budget -= cost
        else:
            gain += seg_gain * budget / cost
            budget = 0.0

    return float(p @ v - gain)


def robust_inf_lp(p, v, metric, eps: float) -> float:
    """LP oracle for robust_inf_over_w1_ball over explicit couplings"""
    if eps < 0:
        raise ValidationError(f"eps must be nonnegative, got {eps}")
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    metric = np.asarray(metric, dtype=float)
    _check_vectors(p, v, metric)

    rows = np.flatnonzero(p > 0)
    n, m = len(rows), len(v)
    cost = np.tile(v, n)

    a_eq = np.zeros((n, n * m))
    for i in range(n):
        a_eq[i, i * m:(i + 1) * m] = 1.0
    a_ub = metric[rows].ravel()[None, :]

    res = linprog(cost, A_ub=a_ub, b_ub=[float(eps)], A_eq=a_eq, b_eq=p[rows],
                  bounds=(0, None), method='highs', options=_LP_OPTIONS)
    if res.status != 0:
        raise DrocoLabError(f"W1-ball LP failed: {res.message}")
    return float(res.fun)


def lambda_dual_value(p, v, metric, eps: float, lam: float) -> float:
    """E_{s'~p}[min_s (v(s) + lam d(s', s))] - lam eps"""
    if lam < 0:
        raise ValidationError(f"lam must be nonnegative, got {lam}")
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    metric = np.asarray(metric, dtype=float)
    inner = np.min(v[None, :] + lam * metric, axis=1)
    return float(p @ inner - lam * eps)


def lambda_max(v, metric) -> float:
    """Beyond this multiplier no atom profits from moving"""
    v = np.asarray(v, dtype=float)
    metric = np.asarray(metric, dtype=float)
    positive = metric[metric > 0]
    if positive.size == 0:
        return 0.0
    return float((v.max() - v.min()) / positive.min())


def dual_sup_grid(p, v, metric, eps: float, points: int = 64) -> float:
    grid = np.linspace(0.0, lambda_max(v, metric), points)
    return max(lambda_dual_value(p, v, metric, eps, lam) for lam in grid)


def dual_sup_ternary(p, v, metric, eps: float, iterations: int = 200) -> Tuple[float, float]:
    """
    Maximize the concave dual in lam over [0, lambda_max]

    Returns:
        (dual value, maximizing lam)
    """
    lo, hi = 0.0, lambda_max(v, metric)
    for _ in range(iterations):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if lambda_dual_value(p, v, metric, eps, m1) < lambda_dual_value(p, v, metric, eps, m2):
            lo = m1
        else:
            hi = m2
    candidates = [0.0, 0.5 * (lo + hi), lambda_max(v, metric)]
    values = [lambda_dual_value(p, v, metric, eps, lam) for lam in candidates]
    best = int(np.argmax(values))
    return values[best], candidates[best]


def per_sample_ball_value(p, v, metric, eps: float) -> float:
    """E_{s'~p}[min over d(s', s) <= eps of v(s)]"""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    metric = np.asarray(metric, dtype=float)
    ball = metric <= eps
    inner = np.where(ball, v[None, :], np.inf).min(axis=1)
    return float(p @ inner)


def lipschitz_constant(q: TabularQ, metric) -> float:
    """
    max over a and d(s1, s2) > 0 of |Q(s1, a) - Q(s2, a)| / d(s1, s2)

    Raises:
        ValidationError: if every off-diagonal distance is zero
    """
    metric = np.asarray(metric, dtype=float)
    positive = metric > 0
    if not positive.any():
        raise ValidationError("lipschitz constant undefined: all off-diagonal distances are zero")
    values = q.values
    diffs = np.abs(values[:, None, :] - values[None, :, :]).max(axis=-1)
    return float(np.max(diffs[positive] / metric[positive]))
