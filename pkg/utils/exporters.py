# utils/exporters.py

import json
import os
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from config.settings import LOSS_COLUMNS, Q_TABLE_COLUMNS


class ResultExporter:
    """Export tables, traces and reports to CSV / JSON"""

    @staticmethod
    def _prepare(filepath) -> Path:
        path = Path(filepath)
        if path.parent and not path.parent.exists():
            os.makedirs(path.parent, exist_ok=True)
        return path

    @staticmethod
    def q_table_frame(values: np.ndarray) -> pd.DataFrame:
        """Long-format Q table: one row per (state, action)"""
        n_states, n_actions = values.shape
        states, actions = np.divmod(np.arange(n_states * n_actions), n_actions)
        return pd.DataFrame({
            'state': states,
            'action': actions,
            'q_value': values.ravel(),
        }, columns=Q_TABLE_COLUMNS)

    @staticmethod
    def export_q_table(values: np.ndarray, filepath) -> str:
        """
        Export a Q table as CSV

        Args:
            values: Table [s, a]
            filepath: Output path

        Returns:
            Path to generated CSV file
        """
        path = ResultExporter._prepare(filepath)
        # 17 significant digits keeps the table lossless
        ResultExporter.q_table_frame(values).to_csv(path, index=False, float_format='%.17g')
        return str(path)

    @staticmethod
    def export_loss_trace(trace: List[Dict], filepath) -> str:
        path = ResultExporter._prepare(filepath)
        pd.DataFrame(trace, columns=LOSS_COLUMNS).to_csv(path, index=False, float_format='%.17g')
        return str(path)

    @staticmethod
    def export_rows(rows: List[Dict], filepath, columns: Sequence[str] = None) -> str:
        """Export dict rows with an optional fixed column order"""
        path = ResultExporter._prepare(filepath)
        frame = pd.DataFrame(rows, columns=list(columns) if columns else None)
        frame.to_csv(path, index=False, float_format='%.17g')
        return str(path)

    @staticmethod
    def export_json(document: Dict, filepath) -> str:
        path = ResultExporter._prepare(filepath)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(document, f, indent=2, sort_keys=True)
            f.write('\n')
        return str(path)

    @staticmethod
    def format_table(rows: List[Dict], columns: Sequence[str]) -> str:
        """Plain-text table for terminal output"""
        if not rows:
            return "(no rows)"
        return pd.DataFrame(rows, columns=list(columns)).to_string(index=False)
