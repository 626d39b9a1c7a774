"""
Report export for the workbench.
Renders command reports as JSON documents or CSV series and writes them atomically.
"""

import csv
import io
import json
import logging
import math
import os
import tempfile
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def format_float(value: Optional[float]) -> Optional[str]:
    """Shortest round-trip text for a float; None and non-finite values pass as text."""
    if value is None:
        return None
    value = float(value)
    if not math.isfinite(value):
        return str(value)
    return repr(value)


def plain(value):
    """Convert report values to JSON-native types."""
    if isinstance(value, Fraction):
        return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return [plain(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def render_json(report: Dict) -> str:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(plain(report), sort_keys=True, indent=2) + '\n'


def render_csv(rows: Sequence[Dict], columns: Optional[List[str]] = None) -> str:
    """One line per row; floats written in round-trip form."""
    if columns is None:
        columns = []
        for row in rows:
            for key in row:
                if key not in columns:
                    columns.append(key)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        line = []
        for column in columns:
            value = row.get(column)
            if isinstance(value, float):
                value = format_float(value)
            elif isinstance(value, (list, tuple, dict)):
                value = json.dumps(plain(value), sort_keys=True)
            line.append('' if value is None else value)
        writer.writerow(line)
    return buffer.getvalue()


def render(report: Dict, fmt: str) -> str:
    """JSON for whole reports; CSV writes the report's 'rows' series."""
    if fmt == 'json':
        return render_json(report)
    if fmt == 'csv':
        return render_csv(report.get('rows', []), report.get('columns'))
    raise ValueError(f"Unknown output format '{fmt}'")


def save_report(content: str, path: str) -> str:
    """Write through a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle, temporary = tempfile.mkstemp(dir=directory, prefix='.ldslab-', suffix='.tmp')
    try:
        with os.fdopen(handle, 'w', encoding='utf-8', newline='') as f:
            f.write(content)
        os.replace(temporary, path)
    except OSError:
        if os.path.exists(temporary):
            os.remove(temporary)
        raise
    logger.info(f"Report written to {path}")
    return path
