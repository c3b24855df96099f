# verify package

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
from verify.suite import CheckerRegistry, run_all, run_checker, summarize

__all__ = [
    'CheckerRegistry',
    'PropCheckResult',
    'check_contraction',
    'check_dual_ordering',
    'check_fixed_point_uniqueness',
    'check_limited_overestimation',
    'check_operator_identities',
    'check_test_time_bound',
    'check_train_time_bound',
    'run_all',
    'run_checker',
    'summarize',
]
