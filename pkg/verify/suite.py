# verify/suite.py - checker registry and the run-everything entry point

import concurrent.futures
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from utils.exceptions import ConfigError
from utils.exporters import ResultExporter
from verify.checks import (
    PropCheckResult,
    check_contraction,
    check_dual_ordering,
    check_fixed_point_uniqueness,
    check_limited_overestimation,
    check_operator_identities,
    check_test_time_bound,
    check_train_time_bound,
)

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ['prop', 'trials', 'violations', 'max_violation', 'median_gap', 'seed']


class CheckerRegistry:
    """Resolves checker ids to functions of (trials, seed)"""

    CHECKER_MAP: Dict[str, Callable[..., PropCheckResult]] = {
        'contraction': check_contraction,
        'dual': check_dual_ordering,
        'train_bound': check_train_time_bound,
        'test_bound': check_test_time_bound,
        'overestimation': check_limited_overestimation,
        'uniqueness': check_fixed_point_uniqueness,
        'identities': check_operator_identities,
    }

    @staticmethod
    def get_checker(prop: str) -> Callable[..., PropCheckResult]:
        if prop not in CheckerRegistry.CHECKER_MAP:
            raise ConfigError(f"Unknown checker: {prop}. Valid: {', '.join(CheckerRegistry.CHECKER_MAP)}, all")
        return CheckerRegistry.CHECKER_MAP[prop]

    @staticmethod
    def get_all_props() -> List[str]:
        return list(CheckerRegistry.CHECKER_MAP)

    @staticmethod
    def resolve(props: Optional[Sequence[str]]) -> List[str]:
        """'all' or None selects every checker; order follows the registry"""
        if not props or 'all' in props:
            return CheckerRegistry.get_all_props()
        for prop in props:
            CheckerRegistry.get_checker(prop)
        return [p for p in CheckerRegistry.CHECKER_MAP if p in props]


def run_checker(prop: str, seed: int = 0, trials: Optional[int] = None) -> PropCheckResult:
    checker = CheckerRegistry.get_checker(prop)
    if trials is None:
        return checker(seed=seed)
    return checker(trials=trials, seed=seed)


def run_all(seed: int = 0, props: Optional[Sequence[str]] = None, trials: Optional[int] = None,
            jobs: int = 1) -> List[PropCheckResult]:
    """
    Run the selected checkers (all by default) with their default trial counts

    Args:
        seed: Root seed; each checker derives per-trial streams from it
        props: Checker ids or ['all']
        trials: Overrides every checker's trial count when given
        jobs: Checkers run concurrently up to this bound

    Returns:
        One PropCheckResult per checker, in registry order
    """
    selected = CheckerRegistry.resolve(props)
    results: Dict[str, PropCheckResult] = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        future_to_prop = {executor.submit(run_checker, prop, seed, trials): prop for prop in selected}
        for future in concurrent.futures.as_completed(future_to_prop):
            prop = future_to_prop[future]
            results[prop] = future.result()
            logger.info("Checker %s done", prop)
    return [results[prop] for prop in selected]


def summarize(results: Sequence[PropCheckResult]) -> Dict:
    """Machine-readable summary; passed is False iff any checker reports violations"""
    return {
        'passed': all(result.passed for result in results),
        'results': [result.to_summary() for result in results],
    }


def summary_table(results: Sequence[PropCheckResult]) -> str:
    rows = [{column: result.to_summary().get(column, '') for column in SUMMARY_COLUMNS} for result in results]
    return ResultExporter.format_table(rows, SUMMARY_COLUMNS)


def write_summary(results: Sequence[PropCheckResult], output_dir) -> Dict[str, str]:
    """Write verify_summary.json and verify_summary.csv under output_dir"""
    output_dir = Path(output_dir)
    summary = summarize(results)
    rows = [result.to_summary() for result in results]
    return {
        'json': ResultExporter.export_json(summary, output_dir / 'verify_summary.json'),
        'csv': ResultExporter.export_rows(rows, output_dir / 'verify_summary.csv', SUMMARY_COLUMNS),
    }
