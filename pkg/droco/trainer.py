# droco/trainer.py - tabular DROCO training loop and merged in-sample baseline

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from config.settings import (
    DEFAULT_GAMMA,
    DEFAULT_N_MEMBERS,
    DEFAULT_SMOOTHING_ALPHA,
    DIVERGENCE_FACTOR,
)
from datagen.dataset import OfflineDataset, TransitionBatch
from droco.losses import (
    expectile_grad,
    expectile_loss,
    huber,
    huber_grad,
    td_targets,
    value_penalties,
)
from dynamics.ensemble import EnsembleDynamics, fit, sample_informed
from mdp_core.mdp import FiniteMDP, TabularPolicy
from utils.exceptions import ConfigError, DivergenceError, ValidationError
from utils.seeding import make_rng
from utils.validators import RangeValidator

logger = logging.getLogger(__name__)

LOSS_KINDS = ('huber', 'l2')


@dataclass(frozen=True)
class DrocoConfig:
    beta: float = 0.5
    delta: float = 10.0
    tau: float = 0.7
    awr_alpha: float = 3.0
    gamma: float = DEFAULT_GAMMA
    n_members: int = DEFAULT_N_MEMBERS
    smoothing_alpha: float = DEFAULT_SMOOTHING_ALPHA
    q_lr: float = 0.1
    v_lr: float = 0.1
    batch_src: int = 128
    batch_tar: int = 128
    steps: int = 50_000
    mu: float = 0.005
    seed: int = 0
    loss_kind: str = 'huber'

    @classmethod
    def fixed_penalty(cls, **overrides) -> "DrocoConfig":
        """Penalty coefficient pinned at 1.0"""
        return cls(**{**overrides, 'beta': 1.0})

    def merged_baseline(self) -> "DrocoConfig":
        return replace(self, beta=0.0, loss_kind='l2')

    def validate(self) -> None:
        ok, errors = RangeValidator.validate(asdict(self), {
            'beta': (0.0, None, True, False),
            'delta': (0.0, None, False, False),
            'tau': (0.0, 1.0, False, False),
            'awr_alpha': (0.0, None, False, False),
            'gamma': (0.0, 1.0, False, False),
            'n_members': (1, None, True, False),
            'smoothing_alpha': (0.0, None, False, False),
            'q_lr': (0.0, None, False, False),
            'v_lr': (0.0, None, False, False),
            'batch_src': (0, None, True, False),
            'batch_tar': (0, None, True, False),
            'steps': (0, None, True, False),
            'mu': (0.0, 1.0, False, True),
        })
        if self.loss_kind not in LOSS_KINDS:
            ok = False
            errors.append(f"loss_kind must be one of {', '.join(LOSS_KINDS)}, got {self.loss_kind}")
        if not ok:
            raise ConfigError("; ".join(errors))


@dataclass
class TrainState:
    q: np.ndarray
    q_target: np.ndarray
    v: np.ndarray
    policy: np.ndarray
    support: np.ndarray
    ensemble: Optional[EnsembleDynamics] = None
    step: int = 0
    loss_trace: List[Dict] = field(default_factory=list)

    def policy_table(self) -> TabularPolicy:
        return TabularPolicy(self.policy)

    def to_dict(self) -> Dict:
        return {
            'q': self.q.tolist(),
            'q_target': self.q_target.tolist(),
            'v': self.v.tolist(),
            'policy': self.policy.tolist(),
            'support': self.support.astype(int).tolist(),
            'ensemble': self.ensemble.to_dict() if self.ensemble is not None else None,
            'step': self.step,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "TrainState":
        ensemble = data.get('ensemble')
        return cls(
            q=np.asarray(data['q'], dtype=float),
            q_target=np.asarray(data['q_target'], dtype=float),
            v=np.asarray(data['v'], dtype=float),
            policy=np.asarray(data['policy'], dtype=float),
            support=np.asarray(data['support'], dtype=bool),
            ensemble=EnsembleDynamics.from_dict(ensemble) if ensemble else None,
            step=int(data['step']),
        )


def awr_policy(q: np.ndarray, v: np.ndarray, behavior: np.ndarray, support: np.ndarray,
               awr_alpha: float) -> np.ndarray:
    """pi(a|s) proportional to mu(a|s) exp(alpha (Q - V)) on supported actions; uniform where unsupported"""
    n_actions = q.shape[1]
    advantage = np.where(support, awr_alpha * (q - v[:, None]), -np.inf)
    shifted = advantage - np.where(support.any(axis=1), advantage.max(axis=1), 0.0)[:, None]
    weights = np.where(support, behavior * np.exp(shifted), 0.0)
    totals = weights.sum(axis=1, keepdims=True)
    return np.where(totals > 0, weights / np.where(totals > 0, totals, 1.0), 1.0 / n_actions)


def _segment_mean(values: np.ndarray, index: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-entry mean of values grouped by flat index; (means, hit mask)"""
    sums = np.bincount(index, weights=values, minlength=size)
    counts = np.bincount(index, minlength=size)
    return np.divide(sums, counts, out=np.zeros(size), where=counts > 0), counts > 0


class DrocoTrainer:
    """
    Stochastic tabular training: expectile V, penalized Huber Q, EMA target, AWR policy

    Records are held as column arrays and minibatches are index draws from stream
    "train/batches". Member draws for the value penalty come from each member's
    bootstrap counts, resampled every step from stream ("train/penalty", step).
    """

    def __init__(self, ds_src: OfflineDataset, ds_tar: OfflineDataset, cfg: DrocoConfig, r_max: float,
                 ensemble: Optional[EnsembleDynamics] = None, show_progress: bool = False):
        cfg.validate()
        if (ds_src.n_states, ds_src.n_actions) != (ds_tar.n_states, ds_tar.n_actions):
            raise ValidationError("source and target datasets cover different spaces")
        self.n_states, self.n_actions = ds_tar.n_states, ds_tar.n_actions
        self.n_src, self.n_tar = len(ds_src), len(ds_tar)
        self.records = TransitionBatch.concat([ds_src.as_batch("src"), ds_tar.as_batch("tar")])
        self.cfg = cfg
        self.r_max = float(r_max)
        self.ensemble = ensemble
        self.show_progress = show_progress

        merged = ds_src.counts + ds_tar.counts
        self.support = merged > 0
        totals = merged.sum(axis=1, keepdims=True)
        self.behavior = np.divide(merged, totals, out=np.zeros((self.n_states, self.n_actions)), where=totals > 0)
        self.guard = DIVERGENCE_FACTOR * self.r_max / (1.0 - cfg.gamma)

    def initial_state(self) -> TrainState:
        q = np.zeros((self.n_states, self.n_actions))
        v = np.zeros(self.n_states)
        return TrainState(
            q=q,
            q_target=q.copy(),
            v=v,
            policy=awr_policy(q, v, self.behavior, self.support, self.cfg.awr_alpha),
            support=self.support.copy(),
            ensemble=self.ensemble,
        )

    def draw_batch(self, rng: np.random.Generator) -> TransitionBatch:
        """batch_src source rows followed by batch_tar target rows, sampled with replacement"""
        parts = []
        if self.cfg.batch_src and self.n_src:
            parts.append(rng.integers(0, self.n_src, size=self.cfg.batch_src))
        if self.cfg.batch_tar and self.n_tar:
            parts.append(self.n_src + rng.integers(0, self.n_tar, size=self.cfg.batch_tar))
        return self.records.take(np.concatenate(parts) if parts else np.zeros(0, dtype=int))

    def penalty_samples(self, batch: TransitionBatch, step: int) -> Optional[np.ndarray]:
        """
        Next states the penalty minimizes over, [batch, n_members + 1]

        Member draws fill the first columns of source rows; the last column and
        every target row hold the observed next state. None without an ensemble.
        """
        if self.ensemble is None or not batch.is_src.any():
            return None
        samples = np.repeat(batch.next_states[:, None], self.ensemble.n_members + 1, axis=1)
        rows = np.flatnonzero(batch.is_src)
        samples[rows, :-1] = sample_informed(self.ensemble, batch.states[rows], batch.actions[rows],
                                             batch.next_states[rows], make_rng(self.cfg.seed, "train/penalty", step))
        return samples

    def batch_targets(self, v: np.ndarray, batch: TransitionBatch,
                      step: int) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        """(penalized TD targets, penalties, penalty samples) for one minibatch at a given step"""
        samples = self.penalty_samples(batch, step)
        penalties = np.zeros(len(batch)) if samples is None else value_penalties(batch, v, samples)
        return td_targets(batch, v, penalties, self.cfg.beta, self.cfg.gamma), penalties, samples

    def _guard(self, state: TrainState) -> None:
        for name in ('q', 'q_target', 'v'):
            table = getattr(state, name)
            worst = float(np.max(np.abs(table))) if table.size else 0.0
            if not np.isfinite(worst) or worst > self.guard:
                raise DivergenceError(
                    f"{name} exceeded the divergence guard {self.guard:.6g} at step {state.step}",
                    diagnostics={'table': name, 'step': state.step, 'max_abs': worst, 'guard': self.guard,
                                 'last_losses': state.loss_trace[-1] if state.loss_trace else None},
                )

    def step(self, state: TrainState, batch_rng: np.random.Generator) -> TrainState:
        cfg = self.cfg
        n_states, n_actions = state.q.shape
        batch = self.draw_batch(batch_rng)
        flat = batch.states * n_actions + batch.actions

        # value regression towards the target network
        u = state.q_target[batch.states, batch.actions] - state.v[batch.states]
        v_step, v_hit = _segment_mean(expectile_grad(u, cfg.tau), batch.states, n_states)
        state.v = np.where(v_hit, state.v + cfg.v_lr * v_step, state.v)

        targets, penalties, _ = self.batch_targets(state.v, batch, state.step)

        residual = state.q[batch.states, batch.actions] - targets
        is_src = batch.is_src
        if cfg.loss_kind == 'huber':
            src_grad = huber_grad(residual, cfg.delta)
            src_loss = huber(residual, cfg.delta)
        else:
            src_grad = residual
            src_loss = 0.5 * residual ** 2
        grads = np.where(is_src, src_grad, residual)
        q_step, q_hit = _segment_mean(grads, flat, n_states * n_actions)
        q_flat = state.q.ravel() - cfg.q_lr * q_step
        state.q = np.where(q_hit, q_flat, state.q.ravel()).reshape(n_states, n_actions)
        state.q_target = (1.0 - cfg.mu) * state.q_target + cfg.mu * state.q

        state.loss_trace.append({
            'step': state.step,
            'v_loss': float(np.mean(expectile_loss(u, cfg.tau))) if len(u) else 0.0,
            'q_loss_src': float(np.mean(src_loss[is_src])) if is_src.any() else 0.0,
            'q_loss_tar': float(np.mean(0.5 * residual[~is_src] ** 2)) if (~is_src).any() else 0.0,
            'mean_penalty': float(np.mean(penalties[is_src])) if is_src.any() else 0.0,
        })
        state.step += 1
        self._guard(state)
        return state

    def run(self, state: Optional[TrainState] = None) -> TrainState:
        state = state or self.initial_state()
        batch_rng = make_rng(self.cfg.seed, "train/batches")
        for _ in tqdm(range(self.cfg.steps), desc="train", disable=not self.show_progress, leave=False):
            self.step(state, batch_rng)
        state.policy = awr_policy(state.q, state.v, self.behavior, self.support, self.cfg.awr_alpha)
        logger.info("Training finished after %d steps (beta=%s, loss=%s)", state.step, self.cfg.beta, self.cfg.loss_kind)
        return state


def _r_max(mdps: Optional[Sequence[FiniteMDP]], datasets: Sequence[OfflineDataset]) -> float:
    if mdps:
        return max(mdp.r_max for mdp in mdps)
    observed = [float(np.max(np.abs(ds.rewards))) for ds in datasets if len(ds)]
    return max(observed + [1.0])


def train(ds_src: OfflineDataset, ds_tar: OfflineDataset, mdps: Sequence[FiniteMDP], cfg: DrocoConfig,
          show_progress: bool = False) -> TrainState:
    """
    Full DROCO loop on a source and a target dataset

    Args:
        ds_src, ds_tar: Nonempty datasets
        mdps: (mdp_src, mdp_tar); used for r_max and the divergence guard
        cfg: Hyperparameters

    Raises:
        DivergenceError: if any table leaves the guard band
    """
    if len(ds_src) == 0 or len(ds_tar) == 0:
        raise ValidationError("train requires nonempty source and target datasets")
    cfg.validate()
    ensemble = fit(ds_tar, cfg.n_members, cfg.smoothing_alpha, cfg.seed)
    trainer = DrocoTrainer(ds_src, ds_tar, cfg, _r_max(mdps, [ds_src, ds_tar]), ensemble, show_progress)
    return trainer.run()


def train_baseline_merged(ds_src: OfflineDataset, ds_tar: OfflineDataset, cfg: DrocoConfig,
                          mdps: Optional[Sequence[FiniteMDP]] = None, show_progress: bool = False) -> TrainState:
    """Same loop with beta = 0 and squared loss on every record; ds_src may be empty"""
    if len(ds_tar) == 0:
        raise ValidationError("train_baseline_merged requires a nonempty target dataset")
    baseline = cfg.merged_baseline()
    trainer = DrocoTrainer(ds_src, ds_tar, baseline, _r_max(mdps, [ds_src, ds_tar]), None, show_progress)
    return trainer.run()


def mean_source_q(state: TrainState, ds_src: OfflineDataset) -> float:
    """Mean Q over source-covered (s, a) pairs"""
    covered = ds_src.counts > 0
    return float(state.q[covered].mean()) if covered.any() else 0.0


def save_checkpoint(state: TrainState, cfg: DrocoConfig, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {'config': asdict(cfg), 'state': state.to_dict()}
    path.write_text(json.dumps(document), encoding='utf-8')
    return str(path)


def load_checkpoint(path) -> Tuple[TrainState, DrocoConfig]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Checkpoint not found: {path}")
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
        return TrainState.from_dict(document['state']), DrocoConfig(**document['config'])
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise ValidationError(f"Malformed checkpoint {path}: {e}")
