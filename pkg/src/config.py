"""
Configuration for the lattice Dyson-Schwinger workbench.
Holds engine defaults (overridable through environment variables) and the
INI job-file format consumed by the command-line surface.
"""

import configparser
import io
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

logger = logging.getLogger(__name__)

# Reduction engine
REDUCTION_CONFIG = {
    'memo_limit': int(os.environ.get('LDSLAB_MEMO_LIMIT', 2_000_000)),  # entries before the memo table is flushed
    'threads': int(os.environ.get('LDSLAB_THREADS', 1)),
}

# Coupling-flow integration
FLOW_CONFIG = {
    'tol': 1e-10,
    'method': 'DOP853',         # scipy embedded Dormand-Prince 8(5,3)
    'atol_floor': 1e-14,
    'max_step': float('inf'),
}

# Brute-force oracle
ORACLE_CONFIG = {
    'method': 'tensor',
    'nodes': 64,                 # Gauss-Legendre nodes per axis
    'samples': 200_000,          # Monte-Carlo samples
    'tol': 1e-12,
    'seed': int(os.environ.get('LDSLAB_SEED', 20240101)),
    'max_tensor_sites': 4,
    'max_mc_sites': 10,
    'cdf_grid': 20_001,
}

# Free propagators
PROPAGATOR_CONFIG = {
    'tol': 1e-12,
    'rounding_floor': 1e-15,     # relative accuracy floor of double sums
}

# Symmetry enumeration
SYMMETRY_CONFIG = {
    'max_enumeration': 2_000_000,
}

# Results store
STORE_CONFIG = {
    'db_path': os.environ.get(
        'LDSLAB_DB_PATH',
        os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'data', 'ldslab.db')),
}

LOG_LEVEL = os.environ.get('LDSLAB_LOG_LEVEL', 'INFO')

COMMANDS = ('reduce', 'count', 'propagator', 'evolve', 'oracle', 'verify')

# INI layout: section -> JobSpec attribute names stored in it
JOB_SECTIONS = {
    'job': ['command'],
    'lattice': ['dimension', 'extent', 'mode'],
    'couplings': ['a', 'k', 'g', 'lam', 'w'],
    'targets': ['multi_indices', 'parameter', 'flow_start', 'flow_target', 'path', 'space',
                'propagator_params', 'grid', 'n_values', 'level', 'm_anh', 'method', 'checks'],
    'tolerances': ['tol', 'seed', 'nodes', 'samples'],
    'output': ['out', 'format', 'threads'],
}


class JobConfigError(ValueError):
    """Raised for malformed job files or option values."""


@dataclass
class JobSpec:
    """A single batch job. Every field is kept as text so the INI form is lossless."""

    command: str = 'reduce'
    dimension: str = '1'
    extent: str = '2'
    mode: str = 'symbolic'
    a: str = '0'
    k: str = 'k'
    g: str = '0'
    lam: str = 'lambda'
    w: str = 'w'
    multi_indices: str = ''
    parameter: str = 'w'
    flow_start: str = ''
    flow_target: str = ''
    path: str = 'diagonal'
    space: str = 'line'
    propagator_params: str = ''
    grid: str = ''
    n_values: str = ''
    level: str = 'parity'
    m_anh: str = '4'
    method: str = 'tensor'
    checks: str = ''
    tol: str = ''
    seed: str = ''
    nodes: str = ''
    samples: str = ''
    out: str = ''
    format: str = 'json'
    threads: str = ''
    extra: Dict[str, str] = field(default_factory=dict)

    def to_ini(self) -> str:
        """Serialize to the flat sectioned key-value format."""
        parser = configparser.ConfigParser(interpolation=None)
        for section, keys in JOB_SECTIONS.items():
            parser[section] = {key: getattr(self, key) for key in keys}
        if self.extra:
            parser['extra'] = dict(self.extra)
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> 'JobSpec':
        """Parse a job file; unknown keys outside [extra] are rejected."""
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise JobConfigError(f"Cannot parse job file: {e}")

        job = cls()
        for section in parser.sections():
            if section == 'extra':
                job.extra = dict(parser[section])
                continue
            allowed = JOB_SECTIONS.get(section)
            if allowed is None:
                raise JobConfigError(f"Unknown section [{section}]")
            for key, value in parser[section].items():
                if key not in allowed:
                    raise JobConfigError(f"Unknown key '{key}' in section [{section}]")
                setattr(job, key, value)
        job.validate()
        return job

    @classmethod
    def from_file(cls, path: str) -> 'JobSpec':
        try:
            with open(path, 'r', encoding='utf-8') as handle:
                return cls.from_ini(handle.read())
        except OSError as e:
            raise JobConfigError(f"Cannot read job file {path}: {e}")

    def validate(self):
        if self.command not in COMMANDS:
            raise JobConfigError(f"Unknown command '{self.command}'")
        if self.format not in ('json', 'csv'):
            raise JobConfigError(f"Unknown output format '{self.format}'")
        if self.mode not in ('symbolic', 'numeric', 'per-site'):
            raise JobConfigError(f"Unknown lattice mode '{self.mode}'")
        for key in ('dimension', 'extent', 'm_anh'):
            value = getattr(self, key)
            if not value.strip().isdigit():
                raise JobConfigError(f"'{key}' must be a positive integer, got '{value}'")

    def as_dict(self) -> Dict[str, str]:
        data = {key: getattr(self, key) for keys in JOB_SECTIONS.values() for key in keys}
        if self.extra:
            data['extra'] = dict(self.extra)
        return data


def parse_list(text: str) -> List[str]:
    """Split a ';'-separated option value, dropping blanks."""
    return [item.strip() for item in text.split(';') if item.strip()]


def parse_int_range(text: str) -> List[int]:
    """Parse '3', '1-8' or '2,3,5' into a list of integers."""
    values: List[int] = []
    for chunk in text.replace(';', ',').split(','):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            if '-' in chunk:
                low, high = chunk.split('-', 1)
                values.extend(range(int(low), int(high) + 1))
            else:
                values.append(int(chunk))
        except ValueError:
            raise JobConfigError(f"Bad integer range '{text}'")
    return values


def optional_float(text: str, default: Optional[float]) -> Optional[float]:
    if text is None or not str(text).strip():
        return default
    try:
        return float(text)
    except ValueError:
        raise JobConfigError(f"Expected a number, got '{text}'")


def optional_int(text: str, default: Optional[int]) -> Optional[int]:
    if text is None or not str(text).strip():
        return default
    try:
        return int(text)
    except ValueError:
        raise JobConfigError(f"Expected an integer, got '{text}'")
