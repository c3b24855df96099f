# evalharness package

from evalharness.evaluator import ScoreReference, degradation_pct, evaluate, normalized_score
from evalharness.orchestrator import ExperimentOrchestrator, SweepPoint, data_size_study, robustness_curve
from evalharness.perturbations import PerturbationSpec, parse_specs, perturb
from evalharness.report import EvalReport

__all__ = [
    'EvalReport',
    'ExperimentOrchestrator',
    'PerturbationSpec',
    'ScoreReference',
    'SweepPoint',
    'data_size_study',
    'degradation_pct',
    'evaluate',
    'normalized_score',
    'parse_specs',
    'perturb',
    'robustness_curve',
]
