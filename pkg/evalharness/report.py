# evalharness/report.py - structured evaluation output

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import pandas as pd

from config.settings import REPORT_COLUMNS
from utils.exporters import ResultExporter

logger = logging.getLogger(__name__)

CLEAN = "clean"


@dataclass
class EvalReport:
    """One row per (condition, level_or_scale, seed), plus optional tag columns"""

    rows: List[Dict] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)

    @property
    def columns(self) -> List[str]:
        extra = []
        for row in self.rows:
            extra.extend(k for k in row if k not in REPORT_COLUMNS and k not in extra)
        return extra + REPORT_COLUMNS

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=self.columns)

    def to_csv(self, path) -> str:
        return ResultExporter.export_rows(self.rows, path, self.columns)

    def tagged(self, **tags) -> "EvalReport":
        return EvalReport([{**tags, **row} for row in self.rows], list(self.seeds))

    @classmethod
    def merge(cls, reports: Sequence["EvalReport"]) -> "EvalReport":
        rows, seeds = [], []
        for report in reports:
            rows.extend(report.rows)
            seeds.extend(s for s in report.seeds if s not in seeds)
        return cls(rows, seeds)

    def summary(self) -> pd.DataFrame:
        """Mean and std of return, score and degradation per condition"""
        frame = self.to_frame()
        keys = [c for c in self.columns if c not in REPORT_COLUMNS] + ['condition', 'level_or_scale']
        return (frame.groupby(keys, sort=False)[['return_mean', 'norm_score', 'degradation_pct']]
                .agg(['mean', 'std'])
                .reset_index())

    def degradation(self, condition: str, level_or_scale: str, **tags) -> float:
        """Seed-averaged degradation for one condition"""
        frame = self.to_frame()
        selected = (frame['condition'] == condition) & (frame['level_or_scale'] == str(level_or_scale))
        for key, value in tags.items():
            selected &= frame[key] == value
        return float(frame.loc[selected, 'degradation_pct'].mean())
