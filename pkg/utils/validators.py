# utils/validators.py

from typing import Dict, List, Tuple

import numpy as np

from config.settings import STOCHASTIC_TOL


class MDPValidator:
    """Validates the invariants of tabular MDP components"""

    @staticmethod
    def validate_stochastic_rows(rows: np.ndarray, label: str = "kernel") -> Tuple[bool, List[str]]:
        """Check every row of the last axis is a probability vector"""
        errors = []
        rows = np.asarray(rows, dtype=float)

        if not np.all(np.isfinite(rows)):
            idx = tuple(int(i) for i in np.argwhere(~np.isfinite(rows))[0])
            errors.append(f"{label} has non-finite entry at {idx}")
            return False, errors

        negative = np.argwhere(rows < 0)
        if len(negative):
            idx = tuple(int(i) for i in negative[0])
            errors.append(f"{label} has negative entry at {idx}")

        sums = rows.sum(axis=-1)
        bad = np.argwhere(np.abs(sums - 1.0) > STOCHASTIC_TOL)
        if len(bad):
            idx = tuple(int(i) for i in bad[0])
            errors.append(f"{label} row not stochastic at {idx}: sums to {float(sums[idx]):.12g}")

        return len(errors) == 0, errors

    @staticmethod
    def validate_reward(reward: np.ndarray, r_max: float) -> Tuple[bool, List[str]]:
        errors = []
        if r_max <= 0:
            errors.append(f"r_max must be positive, got {r_max}")
        if not np.all(np.isfinite(reward)):
            errors.append("reward has non-finite entries")
        else:
            over = np.argwhere(np.abs(reward) > r_max + STOCHASTIC_TOL)
            if len(over):
                s, a = (int(i) for i in over[0])
                errors.append(f"reward out of range at (s={s}, a={a}): |{reward[s, a]}| > r_max={r_max}")
        return len(errors) == 0, errors

    @staticmethod
    def validate_metric(metric: np.ndarray) -> Tuple[bool, List[str]]:
        """Pseudo-metric: symmetric, zero diagonal, nonnegative"""
        errors = []
        metric = np.asarray(metric, dtype=float)

        if metric.ndim != 2 or metric.shape[0] != metric.shape[1]:
            return False, [f"metric must be square, got shape {metric.shape}"]

        negative = np.argwhere(metric < 0)
        if len(negative):
            i, j = (int(k) for k in negative[0])
            errors.append(f"metric negative at ({i}, {j})")

        diagonal = np.argwhere(np.abs(np.diag(metric)) > 0)
        if len(diagonal):
            i = int(diagonal[0][0])
            errors.append(f"metric diagonal nonzero at ({i}, {i})")

        asym = np.argwhere(np.abs(metric - metric.T) > STOCHASTIC_TOL)
        if len(asym):
            i, j = (int(k) for k in asym[0])
            errors.append(f"metric not symmetric at ({i}, {j}): {metric[i, j]} != {metric[j, i]}")

        return len(errors) == 0, errors

    @staticmethod
    def validate_shapes(n_states: int, n_actions: int, kernel, reward, init_dist, metric) -> Tuple[bool, List[str]]:
        errors = []
        if n_states < 1 or n_actions < 1:
            errors.append(f"n_states and n_actions must be positive, got ({n_states}, {n_actions})")
        expected = {
            'kernel': (n_states, n_actions, n_states),
            'reward': (n_states, n_actions),
            'init_dist': (n_states,),
            'metric': (n_states, n_states),
        }
        actual = {
            'kernel': np.shape(kernel),
            'reward': np.shape(reward),
            'init_dist': np.shape(init_dist),
            'metric': np.shape(metric),
        }
        for name, shape in expected.items():
            if actual[name] != shape:
                errors.append(f"{name} has shape {actual[name]}, expected {shape}")
        return len(errors) == 0, errors


class RangeValidator:
    """Validates hyperparameter dictionaries against (low, high, inclusive) rules"""

    @staticmethod
    def validate(values: Dict, rules: Dict[str, Tuple]) -> Tuple[bool, List[str]]:
        """
        Check values against interval rules

        Args:
            values: name -> value
            rules: name -> (low, high, low_inclusive, high_inclusive); None bounds are open

        Returns:
            (ok, errors)
        """
        errors = []
        for name, (low, high, low_inc, high_inc) in rules.items():
            value = values.get(name)
            if value is None:
                errors.append(f"Missing required field: {name}")
                continue
            if low is not None and (value < low or (value == low and not low_inc)):
                errors.append(f"{name}={value} below allowed range")
            if high is not None and (value > high or (value == high and not high_inc)):
                errors.append(f"{name}={value} above allowed range")
        return len(errors) == 0, errors
