# dynamics package

from dynamics.ensemble import (
    EnsembleDynamics,
    expected_min_table,
    fit,
    sample_batch,
    sample_informed,
    sample_set,
    tv_error,
)

__all__ = ['EnsembleDynamics', 'expected_min_table', 'fit', 'sample_batch', 'sample_informed', 'sample_set', 'tv_error']
