# evalharness/orchestrator.py - end-to-end pipelines: data, training, robustness curves, studies, sweeps

import concurrent.futures
import itertools
import logging
from dataclasses import asdict, dataclass, replace
from typing import Callable, Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.run_config import RunConfig, grid_fields
from datagen.behavior import collect_quality
from datagen.dataset import OfflineDataset, subsample
from datagen.gridworld import build_pair, default_pair_specs
from droco.trainer import DrocoConfig, TrainState, mean_source_q, train, train_baseline_merged
from evalharness.evaluator import ScoreReference, degradation_pct, evaluate
from evalharness.perturbations import PerturbationSpec, parse_specs, perturb
from evalharness.report import CLEAN, EvalReport
from mdp_core.mdp import FiniteMDP, TabularPolicy
from mdp_core.planning import policy_eval_exact
from utils.exceptions import ConfigError, DrocoLabError
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

METHODS = ('droco', 'baseline')
SWEEP_COLUMNS = [
    'beta', 'delta', 'fraction', 'n_members', 'seed', 'norm_score', 'degradation',
    'mean_q_src', 'beta_monotone', 'status',
]


def _parallel_run(tasks: Dict[Hashable, Callable], jobs: int = 1) -> Dict[Hashable, object]:
    """
    Run independent tasks on a thread pool

    Returns:
        key -> result, or key -> DrocoLabError for tasks that failed; keys in submission order
    """
    results: Dict[Hashable, object] = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        future_to_key = {executor.submit(task): key for key, task in tasks.items()}
        for future in concurrent.futures.as_completed(future_to_key):
            key = future_to_key[future]
            try:
                results[key] = future.result()
            except DrocoLabError as e:
                logger.warning("Task %s failed: %s", key, e)
                results[key] = e
    return {key: results[key] for key in tasks}


def robustness_curve(policy: TabularPolicy, mdp_tar: FiniteMDP, specs: Sequence[PerturbationSpec],
                     seeds: Sequence[int], v_attack: Optional[np.ndarray] = None, mode: str = 'exact',
                     n_episodes: int = 1000, horizon: int = 200, jobs: int = 1) -> EvalReport:
    """
    Evaluate a policy on the clean target and under every perturbation, for every seed

    Args:
        v_attack: Values attacked by min_v perturbations; V^pi on the clean target if None

    Returns:
        EvalReport with (1 + len(specs)) x len(seeds) rows
    """
    if not seeds:
        raise ConfigError("robustness_curve needs at least one seed")
    if v_attack is None and any(spec.kind == 'min_v_adversarial' for spec in specs):
        v_attack = policy_eval_exact(mdp_tar, policy).values

    reference = ScoreReference.of(mdp_tar)
    conditions: List[Tuple[str, str, FiniteMDP]] = [(CLEAN, "0", mdp_tar)]
    conditions += [(spec.kind, spec.label, perturb(mdp_tar, spec, v_attack)) for spec in specs]

    tasks = {
        (seed, index): (lambda mdp=mdp, seed=seed: evaluate(policy, mdp, mode, n_episodes, horizon, seed))
        for seed in seeds
        for index, (_, _, mdp) in enumerate(conditions)
    }
    results = _parallel_run(tasks, jobs)
    for key, result in results.items():
        if isinstance(result, Exception):
            raise result

    rows = []
    for seed in seeds:
        clean_mean = results[(seed, 0)][0]
        for index, (condition, label, _) in enumerate(conditions):
            mean, std = results[(seed, index)]
            rows.append({
                'condition': condition,
                'level_or_scale': label,
                'seed': seed,
                'return_mean': mean,
                'return_std': std,
                'norm_score': reference.score(mean),
                'degradation_pct': degradation_pct(clean_mean, mean, reference.j_random),
            })
    return EvalReport(rows, list(seeds))


@dataclass(frozen=True)
class SweepPoint:
    beta: float
    delta: float
    fraction: float
    n_members: int
    seed: int


class ExperimentOrchestrator:
    """Wires a RunConfig into data generation, training and evaluation"""

    def __init__(self, run_config: RunConfig, show_progress: bool = False,
                 mdps: Optional[Tuple[FiniteMDP, FiniteMDP]] = None):
        self.config = run_config
        self.show_progress = show_progress
        self._mdps: Optional[Tuple[FiniteMDP, FiniteMDP]] = mdps

    def build_mdps(self) -> Tuple[FiniteMDP, FiniteMDP]:
        if self._mdps is None:
            spec_kwargs, shift_kwargs = grid_fields(self.config.grid)
            spec_src, spec_tar = default_pair_specs(**shift_kwargs, **spec_kwargs)
            self._mdps = build_pair(spec_src, spec_tar)
        return self._mdps

    def perturbation_specs(self) -> List[PerturbationSpec]:
        return parse_specs(self.config.eval.perturb)

    def generate_data(self, seed: int, fraction: Optional[float] = None) -> Tuple[OfflineDataset, OfflineDataset]:
        """Source and target datasets; the target is subsampled to `fraction`"""
        data = self.config.data
        mdp_src, mdp_tar = self.build_mdps()
        ds_src = collect_quality(mdp_src, data.quality_src, data.n_source, derive_seed(seed, "data/src"),
                                 data.horizon, domain="src")
        ds_tar = collect_quality(mdp_tar, data.quality_tar, data.n_target, derive_seed(seed, "data/tar"),
                                 data.horizon, domain="tar")
        fraction = data.fraction if fraction is None else fraction
        return ds_src, subsample(ds_tar, fraction, derive_seed(seed, "data/fraction"))

    def droco_config(self, seed: int, **overrides) -> DrocoConfig:
        section = asdict(self.config.droco)
        cfg = DrocoConfig(gamma=self.config.grid.gamma, seed=seed, **section)
        cfg = replace(cfg, **overrides)
        cfg.validate()
        return cfg

    def train_method(self, method: str, ds_src: OfflineDataset, ds_tar: OfflineDataset,
                     cfg: DrocoConfig) -> TrainState:
        if method == 'droco':
            return train(ds_src, ds_tar, self.build_mdps(), cfg, self.show_progress)
        if method == 'baseline':
            return train_baseline_merged(ds_src, ds_tar, cfg, self.build_mdps(), self.show_progress)
        raise ConfigError(f"Unknown method: {method}. Valid: {', '.join(METHODS)}")

    def evaluate_state(self, state: TrainState, specs: Sequence[PerturbationSpec], seeds: Sequence[int],
                       jobs: int = 1) -> EvalReport:
        section = self.config.eval
        return robustness_curve(state.policy_table(), self.build_mdps()[1], specs, seeds, v_attack=state.v,
                                mode=section.mode, n_episodes=section.n_episodes, horizon=section.horizon,
                                jobs=jobs)

    def data_size_study(self, fractions: Sequence[float], seeds: Sequence[int],
                        specs: Sequence[PerturbationSpec], jobs: int = 1) -> Tuple[EvalReport, pd.DataFrame]:
        """
        Train DROCO and the merged baseline per (fraction, seed) and evaluate both

        Returns:
            (tagged report, degradation-vs-fraction pivot averaged over seeds)
        """
        if not fractions or any(not 0.0 < f <= 1.0 for f in fractions):
            raise ConfigError(f"fractions must be a nonempty subset of (0, 1], got {list(fractions)}")

        def run_point(fraction: float, seed: int) -> EvalReport:
            ds_src, ds_tar = self.generate_data(seed, fraction)
            cfg = self.droco_config(seed)
            reports = [self.evaluate_state(self.train_method(method, ds_src, ds_tar, cfg), specs, [seed])
                       .tagged(method=method, fraction=fraction)
                       for method in METHODS]
            return EvalReport.merge(reports)

        tasks = {(f, s): (lambda f=f, s=s: run_point(f, s)) for f in fractions for s in seeds}
        results = _parallel_run(tasks, jobs)
        failed = [key for key, result in results.items() if isinstance(result, Exception)]
        if failed:
            raise results[failed[0]]

        report = EvalReport.merge(list(results.values()))
        frame = report.to_frame()
        perturbed = frame[frame['condition'] != CLEAN]
        pivot = perturbed.pivot_table(index=['method', 'fraction'], columns=['condition', 'level_or_scale'],
                                      values='degradation_pct', aggfunc='mean')
        logger.info("Data-size study finished: %d rows", len(report.rows))
        return report, pivot

    def sweep_points(self) -> List[SweepPoint]:
        sweep = self.config.sweep
        grid = [sweep.betas, sweep.deltas, sweep.fractions, sweep.n_members, sweep.seeds]
        if any(len(values) == 0 for values in grid):
            raise ConfigError("sweep grid is empty")
        return [SweepPoint(*values) for values in itertools.product(*grid)]

    def run_sweep(self, points: Sequence[SweepPoint], specs: Sequence[PerturbationSpec],
                  jobs: int = 1) -> List[Dict]:
        """One row per grid point; failed points are marked, not raised"""
        if not points:
            raise ConfigError("sweep grid is empty")

        def run_point(point: SweepPoint) -> Dict:
            ds_src, ds_tar = self.generate_data(point.seed, point.fraction)
            cfg = self.droco_config(point.seed, beta=point.beta, delta=point.delta, n_members=point.n_members)
            state = self.train_method('droco', ds_src, ds_tar, cfg)
            report = self.evaluate_state(state, specs, [point.seed])
            frame = report.to_frame()
            perturbed = frame[frame['condition'] != CLEAN]
            return {
                'norm_score': float(frame.loc[frame['condition'] == CLEAN, 'norm_score'].iloc[0]),
                'degradation': float(perturbed['degradation_pct'].mean()) if len(perturbed) else 0.0,
                'mean_q_src': mean_source_q(state, ds_src),
            }

        results = _parallel_run({point: (lambda p=point: run_point(p)) for point in points}, jobs)
        rows = []
        for point, result in results.items():
            row = {**asdict(point), 'norm_score': None, 'degradation': None, 'mean_q_src': None,
                   'beta_monotone': None, 'status': 'ok'}
            if isinstance(result, Exception):
                row['status'] = f"failed: {result}"
            else:
                row.update(result)
            rows.append(row)
        mark_beta_monotone(rows)
        return rows


def mark_beta_monotone(rows: List[Dict], tol: float = 1e-9) -> None:
    """Flag whether mean_q_src is nonincreasing in beta within each (delta, fraction, n_members, seed) group"""
    groups: Dict[Tuple, List[Dict]] = {}
    for row in rows:
        if row['status'] == 'ok':
            groups.setdefault((row['delta'], row['fraction'], row['n_members'], row['seed']), []).append(row)
    for members in groups.values():
        ordered = sorted(members, key=lambda r: r['beta'])
        q_values = [r['mean_q_src'] for r in ordered]
        monotone = all(later <= earlier + tol for earlier, later in zip(q_values, q_values[1:]))
        for row in members:
            row['beta_monotone'] = monotone


def data_size_study(fractions: Sequence[float], run_config: RunConfig, seeds: Optional[Sequence[int]] = None,
                    specs: Optional[Sequence[PerturbationSpec]] = None,
                    jobs: int = 1) -> Tuple[EvalReport, pd.DataFrame]:
    orchestrator = ExperimentOrchestrator(run_config)
    seeds = list(seeds) if seeds is not None else list(run_config.eval.seeds)
    specs = list(specs) if specs is not None else orchestrator.perturbation_specs()
    return orchestrator.data_size_study(fractions, seeds, specs, jobs)
