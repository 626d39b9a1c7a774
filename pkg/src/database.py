"""
Database module for the lattice workbench.
Handles the sqlite results store: job runs and cached primitive decompositions.
"""

import json
import logging
import os
import sqlite3
from typing import Dict, List, Optional

from src.config import STORE_CONFIG

logger = logging.getLogger(__name__)

# Database path; empty disables the store
DB_PATH = STORE_CONFIG['db_path']


def set_db_path(path: Optional[str]):
    global DB_PATH
    DB_PATH = path or ''


def is_enabled() -> bool:
    return bool(DB_PATH)


def get_connection() -> sqlite3.Connection:
    """Get database connection with row factory."""
    conn = sqlite3.connect(DB_PATH)
    conn.row_factory = sqlite3.Row
    return conn


def init_database():
    """Initialize the database with all required tables."""
    directory = os.path.dirname(DB_PATH)
    if directory:
        os.makedirs(directory, exist_ok=True)

    conn = get_connection()
    cursor = conn.cursor()

    # One row per CLI job
    cursor.execute('''
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            command TEXT NOT NULL,
            config TEXT NOT NULL,     -- resolved JobSpec as JSON
            report TEXT,              -- emitted report as JSON
            exit_code INTEGER NOT NULL,
            created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
        )
    ''')

    # Cached primitive decompositions, keyed by lattice and multi-index
    cursor.execute('''
        CREATE TABLE IF NOT EXISTS reductions (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            lattice_key TEXT NOT NULL,
            multi_index_key TEXT NOT NULL,
            decomposition TEXT NOT NULL,  -- term list as JSON
            steps INTEGER,
            visited INTEGER,
            created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
            UNIQUE(lattice_key, multi_index_key)
        )
    ''')

    cursor.execute('CREATE INDEX IF NOT EXISTS idx_runs_command ON runs(command)')

    conn.commit()
    conn.close()
    logger.info(f"Database initialized at {DB_PATH}")


def record_run(command: str, config: Dict, report: Optional[Dict], exit_code: int) -> Optional[int]:
    """Store a finished job and return its ID."""
    if not is_enabled():
        return None
    try:
        init_database()
        conn = get_connection()
        cursor = conn.cursor()
        cursor.execute('''
            INSERT INTO runs (command, config, report, exit_code)
            VALUES (?, ?, ?, ?)
        ''', (command, json.dumps(config, sort_keys=True, default=str),
              json.dumps(report, sort_keys=True, default=str) if report is not None else None, exit_code))
        conn.commit()
        run_id = cursor.lastrowid
        conn.close()
        return run_id
    except sqlite3.Error as e:
        logger.error(f"Could not record run: {e}")
        return None


def _run_row(row: sqlite3.Row) -> Dict:
    run = dict(row)
    run['config'] = json.loads(run['config'])
    run['report'] = json.loads(run['report']) if run['report'] else None
    return run


def get_run(run_id: int) -> Optional[Dict]:
    """Get run by ID."""
    conn = get_connection()
    cursor = conn.cursor()
    cursor.execute('SELECT * FROM runs WHERE id = ?', (run_id,))
    row = cursor.fetchone()
    conn.close()
    return _run_row(row) if row else None


def get_recent_runs(limit: int = 20, command: str = None) -> List[Dict]:
    """Most recent runs first, optionally for one command."""
    conn = get_connection()
    cursor = conn.cursor()
    query = 'SELECT * FROM runs'
    params = []
    if command:
        query += ' WHERE command = ?'
        params.append(command)
    query += ' ORDER BY id DESC LIMIT ?'
    params.append(limit)
    cursor.execute(query, params)
    rows = [_run_row(row) for row in cursor.fetchall()]
    conn.close()
    return rows


def save_reduction(lattice_key: str, multi_index_key: str, terms: List[Dict],
                   steps: int = None, visited: int = None) -> bool:
    """Cache a decomposition; existing entries are left untouched."""
    if not is_enabled():
        return False
    try:
        init_database()
        conn = get_connection()
        cursor = conn.cursor()
        cursor.execute('''
            INSERT OR IGNORE INTO reductions (lattice_key, multi_index_key, decomposition, steps, visited)
            VALUES (?, ?, ?, ?, ?)
        ''', (lattice_key, multi_index_key, json.dumps(terms, sort_keys=True), steps, visited))
        conn.commit()
        inserted = cursor.rowcount > 0
        conn.close()
        return inserted
    except sqlite3.Error as e:
        logger.error(f"Could not cache reduction {multi_index_key}: {e}")
        return False


def get_reduction(lattice_key: str, multi_index_key: str) -> Optional[Dict]:
    """Cached decomposition, or None."""
    if not is_enabled():
        return None
    try:
        init_database()
        conn = get_connection()
        cursor = conn.cursor()
        cursor.execute('SELECT * FROM reductions WHERE lattice_key = ? AND multi_index_key = ?',
                       (lattice_key, multi_index_key))
        row = cursor.fetchone()
        conn.close()
    except sqlite3.Error as e:
        logger.error(f"Could not read reduction cache: {e}")
        return None
    if not row:
        return None
    cached = dict(row)
    cached['decomposition'] = json.loads(cached['decomposition'])
    return cached


def get_store_stats() -> Dict:
    """Get summary statistics for the store."""
    conn = get_connection()
    cursor = conn.cursor()

    stats = {}

    cursor.execute('SELECT command, COUNT(*) as count FROM runs GROUP BY command')
    stats['runs_by_command'] = {row['command']: row['count'] for row in cursor.fetchall()}

    cursor.execute('SELECT COUNT(*) as count FROM runs')
    stats['total_runs'] = cursor.fetchone()['count']

    cursor.execute('SELECT COUNT(*) as count FROM runs WHERE exit_code != 0')
    stats['failed_runs'] = cursor.fetchone()['count']

    cursor.execute('SELECT COUNT(*) as count FROM reductions')
    stats['cached_reductions'] = cursor.fetchone()['count']

    conn.close()
    return stats
