# verify/checks.py - executable property checks for every operator claim

"""
Each checker draws independent trials from the named stream
("verify/<prop>", trial), records a violation magnitude per trial and
never raises on a violation. Violations are data.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from config.settings import (
    BALL_NESTING_TOL,
    CONTRACTION_TOL,
    DEFAULT_PERTURBATIONS,
    DEFAULT_RESAMPLES,
    DEFAULT_TRIALS,
    IDENTITY_TOL,
    LAMBDA_GRID_POINTS,
    ORACLE_MATCH_TOL,
    SANDWICH_TOL,
    SOLVER_AGREEMENT_TOL,
    STANDARD_ERRORS,
    STRONG_DUALITY_TOL,
    SUPPORT_PROB_THRESHOLD,
    TEST_TIME_TOL,
    UNIQUENESS_TOL,
    WEAK_DUALITY_TOL,
)
from datagen.dataset import OfflineDataset, TransitionRecord
from droco.losses import expectile_loss, huber, td_targets, value_penalties
from dynamics.ensemble import EnsembleDynamics, expected_min_table, fit, sample_batch, tv_error
from mdp_core.mdp import FiniteMDP, TabularPolicy, TabularQ, random_mdp
from mdp_core.planning import (
    greedy_actions,
    optimal_q_in_sample,
    policy_eval_exact,
    policy_iteration,
    support_values_with_fallback,
)
from mdp_core.transport import (
    dual_sup_grid,
    dual_sup_ternary,
    lipschitz_constant,
    per_sample_ball_value,
    robust_inf_lp,
    robust_inf_over_w1_ball,
    wasserstein_1,
)
from operators.backups import in_sample_backup, rcb_ensemble_backup, rcb_practical_backup
from operators.factory import BackupFactory, BackupKind
from operators.fixed_point import compute_c_threshold, fixed_point, required_eps
from utils.exceptions import SupportConditionError, ValidationError
from utils.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)


@dataclass
class PropCheckResult:
    prop: str
    trials: int
    violations: int
    max_violation: float
    seed: int
    details: List[Dict] = field(default_factory=list)
    median_gap: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.violations <= self.trials:
            raise ValidationError(f"{self.prop}: violations {self.violations} outside [0, {self.trials}]")
        self.max_violation = max(float(self.max_violation), 0.0)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_summary(self) -> Dict:
        summary = {
            'prop': self.prop,
            'trials': self.trials,
            'violations': self.violations,
            'max_violation': self.max_violation,
            'seed': self.seed,
        }
        if self.median_gap is not None:
            summary['median_gap'] = self.median_gap
        return summary


def _check_trials(trials: int) -> None:
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")


def _collect(prop: str, seed: int, details: List[Dict], **extra) -> PropCheckResult:
    """Build a result from per-trial details carrying a 'violation' magnitude"""
    magnitudes = [d['violation'] for d in details]
    result = PropCheckResult(
        prop=prop,
        trials=len(details),
        violations=sum(1 for m in magnitudes if m > 0),
        max_violation=max(magnitudes + [0.0]),
        seed=seed,
        details=details,
        **extra,
    )
    log = logger.warning if result.violations else logger.info
    log("%s: %d/%d violations (max %.3g)", prop, result.violations, result.trials, result.max_violation)
    return result


def _trial(prop: str, seed: int, trial: int):
    return make_rng(seed, f"verify/{prop}", trial), derive_seed(seed, f"verify/{prop}", trial)


def random_support(rng: np.random.Generator, n_states: int, n_actions: int,
                   allow_empty: bool = False) -> np.ndarray:
    """Random behavior support; every state keeps one action unless allow_empty"""
    mask = rng.random((n_states, n_actions)) < 0.6
    if not allow_empty:
        mask[np.arange(n_states), rng.integers(0, n_actions, size=n_states)] = True
    return mask


def random_ensemble(rng: np.random.Generator, n_states: int, n_actions: int, n_members: int) -> EnsembleDynamics:
    members = rng.dirichlet(np.ones(n_states), size=(n_members, n_states, n_actions))
    members /= members.sum(axis=-1, keepdims=True)
    return EnsembleDynamics(members, smoothing_alpha=1.0, trained_on="random", rng_seed=0)


def random_q(rng: np.random.Generator, mdp: FiniteMDP) -> TabularQ:
    bound = mdp.value_bound
    return TabularQ(rng.uniform(-bound, bound, size=(mdp.n_states, mdp.n_actions)))


def _random_kinds(rng: np.random.Generator, mdp: FiniteMDP, mask: np.ndarray) -> List[BackupKind]:
    """One parameterized instance of every backup tag on a random MDP pair"""
    mdp_tar = mdp.with_kernel(random_mdp(rng, mdp.n_states, mdp.n_actions, gamma=mdp.gamma, branching=4).kernel)
    source_mask = rng.random(mask.shape) < 0.5
    eps = float(rng.uniform(0.0, mdp.diameter))
    nonempty = mask.copy()
    nonempty[np.arange(mdp.n_states), 0] |= ~mask.any(axis=1)
    return [
        BackupKind('standard', mdp),
        BackupKind('in_sample', mdp, support=nonempty),
        BackupKind('rcb_exact', mdp, support=mask, eps=eps, mdp_tar=mdp_tar, source_mask=source_mask),
        BackupKind('rcb_practical', mdp, support=mask, eps=eps, mdp_tar=mdp_tar, source_mask=source_mask),
        BackupKind('rcb_ensemble', mdp_tar, support=mask,
                   ensemble=random_ensemble(rng, mdp.n_states, mdp.n_actions, int(rng.integers(1, 8))),
                   source_mask=source_mask),
    ]


def check_contraction(trials: int = DEFAULT_TRIALS['contraction'], seed: int = 0) -> PropCheckResult:
    """||B(Q1) - B(Q2)|| <= gamma ||Q1 - Q2|| for every backup kind on random MDPs"""
    _check_trials(trials)
    details = []
    for trial in range(trials):
        rng, trial_seed = _trial('contraction', seed, trial)
        n_states, n_actions = int(rng.integers(2, 21)), int(rng.integers(1, 6))
        mdp = random_mdp(rng, n_states, n_actions, branching=4)
        mask = random_support(rng, n_states, n_actions, allow_empty=True)
        q1, q2 = random_q(rng, mdp), random_q(rng, mdp)
        distance = float(np.max(np.abs(q1.values - q2.values)))

        worst, per_kind = 0.0, {}
        for kind in _random_kinds(rng, mdp, mask):
            lhs = float(np.max(np.abs(kind.apply(q1).values - kind.apply(q2).values)))
            excess = lhs - (mdp.gamma * distance + CONTRACTION_TOL)
            per_kind[kind.tag] = lhs / distance if distance > 0 else 0.0
            worst = max(worst, excess)
        details.append({'trial': trial, 'seed': trial_seed, 'n_states': n_states, 'n_actions': n_actions,
                        'gamma': mdp.gamma, 'ratios': per_kind, 'violation': max(worst, 0.0)})
    return _collect('contraction', seed, details)


def _random_transport_instance(rng: np.random.Generator):
    n = int(rng.integers(2, 7))
    p = np.zeros(n)
    atoms = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
    p[atoms] = rng.dirichlet(np.ones(len(atoms)))
    p /= p.sum()
    points = rng.uniform(0.0, 3.0, size=(n, 2))
    metric = np.linalg.norm(points[:, None] - points[None, :], axis=-1)
    metric = 0.5 * (metric + metric.T)
    np.fill_diagonal(metric, 0.0)
    v = rng.uniform(-5.0, 5.0, size=n)
    eps = float(rng.uniform(0.0, metric.max()))
    return p, v, metric, eps


def check_dual_ordering(trials: int = DEFAULT_TRIALS['dual'], seed: int = 0) -> PropCheckResult:
    """
    Weak duality, ball nesting and greedy/LP agreement; the strong-duality gap is measured

    Ordering: lambda-dual sup <= W1-ball value <= per-sample-ball value.
    """
    _check_trials(trials)
    details, gaps = [], []
    for trial in range(trials):
        rng, trial_seed = _trial('dual', seed, trial)
        p, v, metric, eps = _random_transport_instance(rng)

        lp = robust_inf_lp(p, v, metric, eps)
        greedy = robust_inf_over_w1_ball(p, v, metric, eps)
        grid = dual_sup_grid(p, v, metric, eps, LAMBDA_GRID_POINTS)
        dual, lam = dual_sup_ternary(p, v, metric, eps)
        ball = per_sample_ball_value(p, v, metric, eps)
        gap = lp - dual
        gaps.append(gap)

        excess = max(
            grid - (lp + WEAK_DUALITY_TOL),
            dual - (lp + WEAK_DUALITY_TOL),
            lp - (ball + BALL_NESTING_TOL),
            abs(greedy - lp) - SOLVER_AGREEMENT_TOL,
            gap - STRONG_DUALITY_TOL,
            0.0,
        )
        details.append({'trial': trial, 'seed': trial_seed, 'eps': eps, 'lp': lp, 'greedy': greedy,
                        'dual_grid': grid, 'dual': dual, 'lambda': lam, 'ball': ball, 'gap': gap,
                        'violation': excess})
    return _collect('dual', seed, details, median_gap=float(np.median(gaps)))


def support_condition_instance(rng: np.random.Generator, cover_all: bool = False, max_states: int = 8,
                               max_actions: int = 3) -> Dict:
    """
    Random MDP pair with a source dataset and eps meeting the support condition

    Every state shares one action support, source records cover the whole P_src
    support of each covered pair, and eps = required_eps(dataset, target).
    """
    n_states = int(rng.integers(3, max_states + 1))
    n_actions = int(rng.integers(1, max_actions + 1))
    gamma = float(rng.uniform(0.5, 0.9))
    mdp_tar = random_mdp(rng, n_states, n_actions, gamma=gamma, branching=3)
    mdp_src = mdp_tar.with_kernel(random_mdp(rng, n_states, n_actions, gamma=gamma, branching=3).kernel)

    actions = rng.random(n_actions) < 0.6
    actions[int(rng.integers(0, n_actions))] = True
    support = np.tile(actions, (n_states, 1))
    covered = support.copy() if cover_all else support & (rng.random(support.shape) < 0.6)
    if not covered.any():
        s = int(rng.integers(0, n_states))
        covered[s, int(np.flatnonzero(actions)[0])] = True

    records = [
        TransitionRecord(int(s), int(a), float(mdp_src.reward[s, a]), int(sp), "src")
        for s, a in zip(*np.nonzero(covered))
        for sp in np.flatnonzero(mdp_src.kernel[s, a] > SUPPORT_PROB_THRESHOLD)
    ]
    ds_src = OfflineDataset(records, n_states, n_actions)
    eps = required_eps(ds_src, mdp_tar)
    if rng.random() < 0.3:
        eps *= float(rng.uniform(1.0, 1.5))
    return {'mdp_src': mdp_src, 'mdp_tar': mdp_tar, 'support': support, 'covered': covered,
            'ds_src': ds_src, 'eps': eps}


def _robust_fixed_point(instance: Dict) -> TabularQ:
    kind = BackupKind('rcb_practical', instance['mdp_src'], support=instance['support'], eps=instance['eps'],
                      mdp_tar=instance['mdp_tar'], source_mask=instance['covered'])
    return fixed_point(kind)


def check_train_time_bound(trials: int = DEFAULT_TRIALS['train_bound'], seed: int = 0) -> PropCheckResult:
    """Q*_mu - 2 gamma eps K_Q / (1 - gamma) <= Q_rcb <= Q*_mu on source-covered pairs"""
    _check_trials(trials)
    details = []
    for trial in range(trials):
        rng, trial_seed = _trial('train_bound', seed, trial)
        instance = support_condition_instance(rng)
        mdp_tar, covered, eps = instance['mdp_tar'], instance['covered'], instance['eps']

        q_hat = _robust_fixed_point(instance)
        q_star = optimal_q_in_sample(mdp_tar, instance['support'])
        k_q = lipschitz_constant(q_hat, mdp_tar.metric)
        slack = 2.0 * mdp_tar.gamma * eps * k_q / (1.0 - mdp_tar.gamma)

        hat, star = q_hat.values[covered], q_star.values[covered]
        excess = max(float(np.max(hat - star)) - SANDWICH_TOL,
                     float(np.max(star - slack - hat)) - SANDWICH_TOL,
                     0.0)
        details.append({'trial': trial, 'seed': trial_seed, 'eps': eps, 'k_q': k_q, 'slack': slack,
                        'max_gap': float(np.max(star - hat)), 'violation': excess})
    return _collect('train_bound', seed, details)


def sample_ball_perturbation(rng: np.random.Generator, kernel: np.ndarray, metric: np.ndarray,
                             pairs: np.ndarray, c: float) -> np.ndarray:
    """Move a random share of every atom to a uniformly chosen state within distance c of it"""
    perturbed = kernel.copy()
    for s, a in zip(*np.nonzero(pairs)):
        row = kernel[s, a]
        new_row = row.copy()
        for i in np.flatnonzero(row > 0):
            neighbors = np.flatnonzero(metric[i] <= c)
            j = int(rng.choice(neighbors))
            moved = row[i] * float(rng.random())
            new_row[i] -= moved
            new_row[j] += moved
        perturbed[s, a] = np.clip(new_row, 0.0, None) / np.clip(new_row, 0.0, None).sum()
    return perturbed


def check_test_time_bound(trials: int = DEFAULT_TRIALS['test_bound'],
                          n_perturbations: int = DEFAULT_PERTURBATIONS, seed: int = 0) -> PropCheckResult:
    """
    V^pi_per(s0) >= V_rcb(s0) for kernels within c of the target at every covered pair

    Raises:
        SupportConditionError: if compute_c_threshold returns the -inf sentinel
    """
    _check_trials(trials)
    details = []
    for trial in range(trials):
        rng, trial_seed = _trial('test_bound', seed, trial)
        instance = support_condition_instance(rng, cover_all=True)
        mdp_tar, support, covered = instance['mdp_tar'], instance['support'], instance['covered']
        c = compute_c_threshold(instance['ds_src'], mdp_tar, instance['eps'])
        if not np.isfinite(c):
            raise SupportConditionError(f"trial {trial}: support condition fails even at c = 0")

        q_hat = _robust_fixed_point(instance)
        v_hat = support_values_with_fallback(q_hat.values, support)
        policy = TabularPolicy.deterministic(greedy_actions(q_hat.values, support), mdp_tar.n_actions)
        starts = np.unique(instance['ds_src'].states)

        worst, rejected = 0.0, 0
        for k in range(n_perturbations):
            if k == 0:
                kernel = mdp_tar.kernel
            else:
                kernel = sample_ball_perturbation(rng, mdp_tar.kernel, mdp_tar.metric, covered, c)
                w1 = max(wasserstein_1(kernel[s, a], mdp_tar.kernel[s, a], mdp_tar.metric)
                         for s, a in zip(*np.nonzero(covered)))
                if w1 > c + 1e-9:
                    rejected += 1
                    continue
            v_per = policy_eval_exact(mdp_tar.with_kernel(kernel), policy).values
            worst = max(worst, float(np.max(v_hat[starts] - v_per[starts])) - TEST_TIME_TOL)
        details.append({'trial': trial, 'seed': trial_seed, 'eps': instance['eps'], 'c': c,
                        'rejected': rejected, 'violation': max(worst, 0.0)})
    return _collect('test_bound', seed, details)


def check_limited_overestimation(trials: int = DEFAULT_TRIALS['overestimation'],
                                 resamples: int = DEFAULT_RESAMPLES, seed: int = 0) -> PropCheckResult:
    """
    Ensemble-min target <= E_tar[max Q] + (1 - (1 - 2 eps)^N) r_max / (1 - gamma) + 3 standard errors

    Raises:
        ValidationError: if a fitted ensemble has tv_error >= 1/2
    """
    _check_trials(trials)
    details = []
    for trial in range(trials):
        rng, trial_seed = _trial('overestimation', seed, trial)
        n_states, n_actions = int(rng.integers(2, 7)), int(rng.integers(1, 4))
        mdp_tar = random_mdp(rng, n_states, n_actions)
        n_members = int(rng.integers(1, 8))

        # about 400 target draws per (s, a)
        records = []
        for s in range(n_states):
            for a in range(n_actions):
                for sp in rng.choice(n_states, size=400, p=mdp_tar.kernel[s, a]):
                    records.append(TransitionRecord(s, a, float(mdp_tar.reward[s, a]), int(sp), "tar"))
        ensemble = fit(OfflineDataset(records, n_states, n_actions), n_members, 0.1, trial_seed)
        eps_hat = tv_error(ensemble, mdp_tar)
        if eps_hat >= 0.5:
            raise ValidationError(f"trial {trial}: tv_error {eps_hat:.3f} >= 1/2")

        support = random_support(rng, n_states, n_actions)
        q = random_q(rng, mdp_tar).values
        v = support_values_with_fallback(q, support)
        s, a = int(rng.integers(0, n_states)), int(rng.integers(0, n_actions))

        draws = sample_batch(ensemble, np.full(resamples, s), np.full(resamples, a), rng)
        mins = v[draws].min(axis=1)
        mean, std_err = float(mins.mean()), float(mins.std(ddof=1) / np.sqrt(resamples)) if resamples > 1 else 0.0
        bound = float(mdp_tar.kernel[s, a] @ q.max(axis=1)) \
            + (1.0 - (1.0 - 2.0 * eps_hat) ** n_members) * mdp_tar.value_bound
        excess = mean - (bound + STANDARD_ERRORS * std_err)
        details.append({'trial': trial, 'seed': trial_seed, 'n_members': n_members, 'eps_hat': eps_hat,
                        'mean': mean, 'exact': float(expected_min_table(ensemble, v)[s, a]),
                        'bound': bound, 'violation': max(excess, 0.0)})
    return _collect('overestimation', seed, details)


def check_fixed_point_uniqueness(trials: int = DEFAULT_TRIALS['uniqueness'], seed: int = 0) -> PropCheckResult:
    """Two initializations reach one fixed point; the standard kind matches policy iteration"""
    _check_trials(trials)
    tags = BackupFactory.get_all_tags()
    details = []
    for trial in range(trials):
        rng, trial_seed = _trial('uniqueness', seed, trial)
        n_states, n_actions = int(rng.integers(2, 7)), int(rng.integers(1, 4))
        mdp = random_mdp(rng, n_states, n_actions, gamma=float(rng.uniform(0.5, 0.9)))
        kind = _random_kinds(rng, mdp, random_support(rng, n_states, n_actions, allow_empty=True))[trial % len(tags)]

        low = fixed_point(kind, TabularQ.zeros(n_states, n_actions))
        high = fixed_point(kind, TabularQ(np.full((n_states, n_actions), mdp.value_bound)))
        excess = float(np.max(np.abs(low.values - high.values))) - UNIQUENESS_TOL
        if kind.tag == 'standard':
            oracle = policy_iteration(mdp)
            excess = max(excess, float(np.max(np.abs(low.values - oracle.values))) - ORACLE_MATCH_TOL)
        details.append({'trial': trial, 'seed': trial_seed, 'kind': kind.tag, 'violation': max(excess, 0.0)})
    return _collect('uniqueness', seed, details)


# (value, expected) pairs for the closed-form losses
LOSS_IDENTITIES = [
    (lambda: huber(10.0, 30.0), 50.0),
    (lambda: huber(50.0, 30.0), 1050.0),
    (lambda: huber(0.0, 30.0), 0.0),
    (lambda: expectile_loss(1.0, 0.7), 0.7),
    (lambda: expectile_loss(-1.0, 0.7), 0.3),
    (lambda: expectile_loss(0.0, 0.7), 0.0),
]


def check_operator_identities(trials: int = DEFAULT_TRIALS['identities'], seed: int = 0) -> PropCheckResult:
    """
    Exact identities between code paths

    Practical RCB at eps = 0 equals the in-sample backup; the beta = 1 penalized TD
    target equals the ensemble RCB target on shared member draws; closed-form loss values.
    """
    _check_trials(trials)
    details = []
    for trial in range(trials):
        rng, trial_seed = _trial('identities', seed, trial)
        n_states, n_actions = int(rng.integers(2, 9)), int(rng.integers(1, 5))
        mdp = random_mdp(rng, n_states, n_actions)
        support = random_support(rng, n_states, n_actions)
        q = random_q(rng, mdp)

        practical = rcb_practical_backup(q, mdp, support, 0.0).values
        in_sample = in_sample_backup(q, mdp, support).values
        ball_gap = float(np.max(np.abs(practical - in_sample)))

        ensemble = random_ensemble(rng, n_states, n_actions, int(rng.integers(1, 8)))
        batch = OfflineDataset([
            TransitionRecord(int(s), int(a), float(mdp.reward[s, a]), int(sp), "src" if rng.random() < 0.7 else "tar")
            for s, a, sp in zip(rng.integers(0, n_states, 32), rng.integers(0, n_actions, 32),
                                rng.integers(0, n_states, 32))
        ], n_states, n_actions)
        v = support_values_with_fallback(q.values, support)
        samples = sample_batch(ensemble, batch.states, batch.actions, rng)
        td = td_targets(batch, v, value_penalties(batch, v, samples), 1.0, mdp.gamma)
        ensemble_targets, _ = rcb_ensemble_backup(q, batch, ensemble, support, mdp.gamma, samples=samples)
        target_gap = float(np.max(np.abs(td - ensemble_targets)))

        loss_gap = max(abs(compute() - expected) for compute, expected in LOSS_IDENTITIES)
        excess = max(ball_gap, target_gap, loss_gap) - IDENTITY_TOL
        details.append({'trial': trial, 'seed': trial_seed, 'ball_gap': ball_gap, 'target_gap': target_gap,
                        'loss_gap': loss_gap, 'violation': max(excess, 0.0)})
    return _collect('identities', seed, details)
