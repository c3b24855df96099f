# app.py - Command-line entry point: gen-data, train, eval, verify, sweep

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from config.run_config import RunConfig, get_config
from config.settings import IDENTITY_TOL, QUALITIES
from datagen.dataset import OfflineDataset, load_dataset, save_dataset
from droco.trainer import DrocoConfig, DrocoTrainer, TrainState, load_checkpoint, save_checkpoint
from evalharness.orchestrator import SWEEP_COLUMNS, ExperimentOrchestrator, robustness_curve
from evalharness.perturbations import parse_specs
from mdp_core.mdp import FiniteMDP
from operators.backups import rcb_ensemble_backup
from utils.exceptions import (
    ConfigError,
    ConvergenceError,
    DatasetParseError,
    DivergenceError,
    DrocoLabError,
    ValidationError,
)
from utils.exporters import ResultExporter
from utils.logger import setup_logging
from verify.suite import run_all, summary_table, write_summary

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_VIOLATIONS = 4

SHIFT_CHOICES = ['kinematic', 'morph', 'none']
DATA_FILES = {'src': 'src.jsonl', 'tar': 'tar.jsonl', 'mdp_src': 'mdp_src.json', 'mdp_tar': 'mdp_tar.json'}


def _load_run_config(path: Optional[str]) -> RunConfig:
    return RunConfig.load(path) if path else RunConfig()


def _csv_list(item_type):
    def parse(text: str) -> List:
        try:
            return [item_type(item.strip()) for item in text.split(',') if item.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"cannot parse '{text}' as a list of {item_type.__name__}")
    return parse


def _read_mdp(path: Path) -> FiniteMDP:
    if not path.is_file():
        raise ConfigError(f"MDP file not found: {path}")
    return FiniteMDP.from_json(path.read_text(encoding='utf-8'))


def _read_data_dir(data_dir: str):
    """(ds_src, ds_tar, mdp_src, mdp_tar) from a gen-data output directory"""
    root = Path(data_dir)
    mdp_src = _read_mdp(root / DATA_FILES['mdp_src'])
    mdp_tar = _read_mdp(root / DATA_FILES['mdp_tar'])
    datasets = []
    for key in ('src', 'tar'):
        path = root / DATA_FILES[key]
        if not path.is_file():
            raise ConfigError(f"Dataset not found: {path}")
        datasets.append(load_dataset(path, mdp_tar.n_states, mdp_tar.n_actions))
    return datasets[0], datasets[1], mdp_src, mdp_tar


def _output_dir(args, run_config: RunConfig, seed: int) -> Path:
    if args.out:
        path = Path(args.out)
        path.mkdir(parents=True, exist_ok=True)
        return path
    return run_config.ensure_run_dir(seed)


def cmd_gen_data(args) -> int:
    run_config = _load_run_config(args.config)
    run_config.grid.shift = args.shift or run_config.grid.shift
    run_config.data.quality_src = args.quality or run_config.data.quality_src
    run_config.data.quality_tar = args.quality or run_config.data.quality_tar
    run_config.data.n_source = args.n if args.n is not None else run_config.data.n_source
    run_config.data.n_target = args.n_target if args.n_target is not None else run_config.data.n_target
    seed = args.seed if args.seed is not None else run_config.run.seed

    orchestrator = ExperimentOrchestrator(run_config)
    mdp_src, mdp_tar = orchestrator.build_mdps()
    ds_src, ds_tar = orchestrator.generate_data(seed)

    out = _output_dir(args, run_config, seed)
    save_dataset(ds_src, out / DATA_FILES['src'])
    save_dataset(ds_tar, out / DATA_FILES['tar'])
    (out / DATA_FILES['mdp_src']).write_text(mdp_src.to_json(), encoding='utf-8')
    (out / DATA_FILES['mdp_tar']).write_text(mdp_tar.to_json(), encoding='utf-8')

    print(f"source records: {len(ds_src)}")
    print(f"target records: {len(ds_tar)}")
    print(f"written to: {out}")
    return EXIT_OK


def identity_gap(state: TrainState, ds_src: OfflineDataset, ds_tar: OfflineDataset, cfg: DrocoConfig,
                 r_max: float) -> float:
    """Max |trainer's beta=1 target - ensemble RCB target| over the source dataset, trained V, shared draws"""
    if state.ensemble is None:
        raise ConfigError("--check-identity needs a checkpoint with a fitted ensemble")
    trainer = DrocoTrainer(ds_src, ds_tar, cfg, r_max, state.ensemble)
    batch = ds_src.as_batch("src")
    td, _, samples = trainer.batch_targets(state.v, batch, state.step)
    if samples is None:
        return 0.0
    rcb, _ = rcb_ensemble_backup(state.q, batch, state.ensemble, state.support, cfg.gamma,
                                 samples=samples, values=state.v)
    return float(np.max(np.abs(td - rcb)))


def cmd_train(args) -> int:
    run_config = _load_run_config(args.config)
    seed = args.seed if args.seed is not None else run_config.run.seed
    ds_src, ds_tar, mdp_src, mdp_tar = _read_data_dir(args.data)

    overrides = {key: getattr(args, key) for key in ('beta', 'steps') if getattr(args, key) is not None}
    orchestrator = ExperimentOrchestrator(run_config, get_config().SHOW_PROGRESS, mdps=(mdp_src, mdp_tar))
    cfg = orchestrator.droco_config(seed, gamma=mdp_tar.gamma, **overrides)

    if args.check_identity and (args.baseline or cfg.beta != 1.0):
        raise ConfigError("--check-identity needs DROCO training with --beta 1.0")

    method = 'baseline' if args.baseline else 'droco'
    state = orchestrator.train_method(method, ds_src, ds_tar, cfg)
    saved_cfg = cfg.merged_baseline() if args.baseline else cfg

    out = _output_dir(args, run_config, seed)
    save_checkpoint(state, saved_cfg, out / 'checkpoint.json')
    ResultExporter.export_loss_trace(state.loss_trace, out / 'loss.csv')
    print(f"{method}: {state.step} steps, checkpoint written to {out / 'checkpoint.json'}")

    if args.check_identity:
        gap = identity_gap(state, ds_src, ds_tar, cfg, max(mdp_src.r_max, mdp_tar.r_max))
        print(f"beta=1 target identity gap: {gap:.3g}")
        if gap > IDENTITY_TOL:
            logger.error("beta=1 TD target deviates from the ensemble RCB target by %.3g", gap)
            return EXIT_VIOLATIONS
    return EXIT_OK


def cmd_eval(args) -> int:
    run_config = _load_run_config(args.config)
    state, cfg = load_checkpoint(args.checkpoint)
    if args.data:
        mdp_tar = _read_mdp(Path(args.data) / DATA_FILES['mdp_tar'])
    else:
        mdp_tar = ExperimentOrchestrator(run_config).build_mdps()[1]

    specs = parse_specs(args.perturb if args.perturb is not None else run_config.eval.perturb)
    seeds = args.seeds if args.seeds is not None else run_config.eval.seeds
    section = run_config.eval
    report = robustness_curve(state.policy_table(), mdp_tar, specs, seeds, v_attack=state.v,
                              mode=args.mode or section.mode, n_episodes=section.n_episodes,
                              horizon=section.horizon, jobs=args.jobs)

    out = _output_dir(args, run_config, cfg.seed)
    path = report.to_csv(out / 'eval.csv')
    print(report.summary().to_string(index=False))
    print(f"{len(report.rows)} rows written to {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_all(seed=args.seed, props=args.prop, trials=args.trials, jobs=args.jobs)
    out = Path(args.out) if args.out else Path(get_config().OUTPUT_DIR) / f"verify-s{args.seed}"
    paths = write_summary(results, out)
    print(summary_table(results))
    print(f"summary written to {paths['json']}")
    if any(not result.passed for result in results):
        return EXIT_VIOLATIONS
    return EXIT_OK


def cmd_sweep(args) -> int:
    run_config = _load_run_config(args.config)
    sweep = run_config.sweep
    for key in ('betas', 'deltas', 'fractions', 'n_members', 'seeds'):
        value = getattr(args, key)
        if value is not None:
            setattr(sweep, key, value)

    orchestrator = ExperimentOrchestrator(run_config, get_config().SHOW_PROGRESS)
    points = orchestrator.sweep_points()
    rows = orchestrator.run_sweep(points, orchestrator.perturbation_specs(), jobs=args.jobs or run_config.run.jobs)

    out = _output_dir(args, run_config, run_config.run.seed)
    path = ResultExporter.export_rows(rows, out / 'sweep.csv', SWEEP_COLUMNS)
    print(ResultExporter.format_table(rows, SWEEP_COLUMNS))
    failed = sum(1 for row in rows if row['status'] != 'ok')
    print(f"{len(rows)} grid points ({failed} failed) written to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='droco-lab', description="Cross-domain offline RL lab on finite MDPs")
    subparsers = parser.add_subparsers(dest='command', required=True)

    gen = subparsers.add_parser('gen-data', help="Collect source and target datasets")
    gen.add_argument('--config', help="Run config file")
    gen.add_argument('--shift', choices=SHIFT_CHOICES, help="Source-domain dynamics shift")
    gen.add_argument('--quality', choices=QUALITIES, help="Behavior quality for both domains")
    gen.add_argument('--n', type=int, help="Source record count")
    gen.add_argument('--n-target', dest='n_target', type=int, help="Target record count")
    gen.add_argument('--seed', type=int)
    gen.add_argument('--out', help="Output directory")
    gen.set_defaults(func=cmd_gen_data)

    train = subparsers.add_parser('train', help="Train DROCO or the merged baseline")
    train.add_argument('--config', help="Run config file")
    train.add_argument('--data', required=True, help="Directory written by gen-data")
    train.add_argument('--baseline', action='store_true', help="Train the merged-data baseline")
    train.add_argument('--beta', type=float)
    train.add_argument('--steps', type=int)
    train.add_argument('--seed', type=int)
    train.add_argument('--check-identity', dest='check_identity', action='store_true',
                       help="With --beta 1.0, assert penalized TD targets equal ensemble RCB targets")
    train.add_argument('--out', help="Output directory")
    train.set_defaults(func=cmd_train)

    evaluate = subparsers.add_parser('eval', help="Robustness curve of a trained checkpoint")
    evaluate.add_argument('--config', help="Run config file")
    evaluate.add_argument('--checkpoint', required=True)
    evaluate.add_argument('--data', help="Directory written by gen-data (target MDP)")
    evaluate.add_argument('--perturb', nargs='+', help="e.g. kinematic:hard morph:easy minq:0.5, all, none")
    evaluate.add_argument('--seeds', type=_csv_list(int))
    evaluate.add_argument('--mode', choices=['exact', 'monte_carlo'])
    evaluate.add_argument('--jobs', type=int, default=1)
    evaluate.add_argument('--out', help="Output directory")
    evaluate.set_defaults(func=cmd_eval)

    verify = subparsers.add_parser('verify', help="Run property checkers")
    verify.add_argument('--prop', nargs='+', default=['all'], help="Checker ids or 'all'")
    verify.add_argument('--trials', type=int, help="Override every checker's trial count")
    verify.add_argument('--seed', type=int, default=0)
    verify.add_argument('--jobs', type=int, default=1)
    verify.add_argument('--out', help="Output directory")
    verify.set_defaults(func=cmd_verify)

    sweep = subparsers.add_parser('sweep', help="Parameter sweep over beta, delta, fraction and ensemble size")
    sweep.add_argument('--config', help="Run config file")
    sweep.add_argument('--betas', type=_csv_list(float))
    sweep.add_argument('--deltas', type=_csv_list(float))
    sweep.add_argument('--fractions', type=_csv_list(float))
    sweep.add_argument('--n-members', dest='n_members', type=_csv_list(int))
    sweep.add_argument('--seeds', type=_csv_list(int))
    sweep.add_argument('--jobs', type=int)
    sweep.add_argument('--out', help="Output directory")
    sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    env_config = get_config()
    setup_logging(env_config.LOG_LEVEL, env_config.LOG_FORMAT)

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DatasetParseError as e:
        logger.error("Dataset error: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValidationError, FileNotFoundError) as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as e:
        logger.error("Training diverged: %s", e, extra={'diagnostics': e.diagnostics})
        print(f"diverged: {e}\ndiagnostics: {e.diagnostics}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConvergenceError, DrocoLabError) as e:
        logger.error("Numerical abort: %s", e)
        return EXIT_NUMERICAL


if __name__ == '__main__':
    sys.exit(main())
