# operators package

from operators.backups import (
    UncertaintySpec,
    in_sample_backup,
    rcb_ensemble_backup,
    rcb_ensemble_expected_backup,
    rcb_exact_backup,
    rcb_practical_backup,
    standard_backup,
)
from operators.factory import BackupFactory, BackupKind
from operators.fixed_point import compute_c_threshold, export_fixed_point, fixed_point, required_eps

__all__ = [
    'BackupFactory',
    'BackupKind',
    'UncertaintySpec',
    'compute_c_threshold',
    'export_fixed_point',
    'fixed_point',
    'in_sample_backup',
    'rcb_ensemble_backup',
    'rcb_ensemble_expected_backup',
    'rcb_exact_backup',
    'rcb_practical_backup',
    'required_eps',
    'standard_backup',
]
