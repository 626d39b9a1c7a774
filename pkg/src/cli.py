"""
Command-line surface for the lattice Dyson-Schwinger workbench.
Resolves a job from an INI file and flags, runs one command and writes its
report as JSON or CSV. Exit codes: 0 ok, 2 usage or config error,
3 computational error, 4 verification failure.
"""

import argparse
import logging
import sys
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src import database as db
from src.config import (FLOW_CONFIG, LOG_LEVEL, ORACLE_CONFIG, PROPAGATOR_CONFIG,
                        REDUCTION_CONFIG, JobConfigError, JobSpec, optional_float, optional_int,
                        parse_int_range, parse_list)
from src.evolution import PARAMETERS, evaluate_correlator, generate_flow_system, integrate_flow
from src.export import plain, render, render_json, save_report
from src.lattice import LatticeError, LatticeSpec, MultiIndex, is_primitive
from src.oracle import METHODS, DimensionTooLargeError, OracleConfig, direct_correlator
from src.propagators import SPACES, lattice_effective_params, parse_params, propagator_series
from src.reduction import LinearCombination, get_reducer, reduce_to_primitive
from src.symmetry import LEVELS, EnumerationTooLargeError, count_table
from src.verification import DEFAULT_CHECKS, SUITE, run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_COMPUTE = 3
EXIT_VERIFY = 4

USAGE_ERRORS = (JobConfigError, LatticeError, EnumerationTooLargeError, DimensionTooLargeError)

REQUIRED_PARAMS = {'line': ['m'], 'circle': ['m', 'T'], 'lattice': ['m', 'a'], 'circular': ['m', 'a']}

# flag -> JobSpec attribute
FLAG_FIELDS = {
    'dimension': 'dimension', 'extent': 'extent', 'mode': 'mode',
    'a': 'a', 'k': 'k', 'g': 'g', 'lam': 'lam', 'w': 'w',
    'nu': 'multi_indices', 'parameter': 'parameter', 'start': 'flow_start', 'target': 'flow_target',
    'path': 'path', 'space': 'space', 'params': 'propagator_params', 'grid': 'grid',
    'n': 'n_values', 'level': 'level', 'm_anh': 'm_anh', 'method': 'method', 'checks': 'checks',
    'tol': 'tol', 'seed': 'seed', 'nodes': 'nodes', 'samples': 'samples',
    'out': 'out', 'format': 'format', 'threads': 'threads',
}


# ============== Job resolution ==============

def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='INI job file; flags override its values')
    common.add_argument('--out', help='report path (default: stdout)')
    common.add_argument('--format', choices=('json', 'csv'))
    common.add_argument('--tol', help='numerical tolerance')
    common.add_argument('--seed', help='random seed')
    common.add_argument('--threads', help='worker threads for row generation')
    common.add_argument('--log-level', default=None, help=f'logging level (default: {LOG_LEVEL})')
    common.add_argument('--db', default=None, help='sqlite results store; empty string disables it')
    return common


def _lattice_flags() -> argparse.ArgumentParser:
    lattice = argparse.ArgumentParser(add_help=False)
    lattice.add_argument('-d', '--dimension')
    lattice.add_argument('-N', '--extent')
    lattice.add_argument('--mode', choices=('symbolic', 'numeric', 'per-site'))
    for name in ('a', 'k', 'g', 'w'):
        lattice.add_argument(f'--{name}', help=f'coupling {name}: rational or symbol name')
    lattice.add_argument('--lambda', dest='lam', help='quartic coupling: rational or symbol name')
    lattice.add_argument('--nu', help="multi-indices as dense tuples, e.g. '3,3;0,2'")
    return lattice


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    lattice = _lattice_flags()
    parser = argparse.ArgumentParser(prog='ldslab', description='Lattice Dyson-Schwinger workbench.')
    commands = parser.add_subparsers(dest='command', required=True)

    commands.add_parser('reduce', parents=[common, lattice],
                        help='decompose correlators over the primitive basis')

    count = commands.add_parser('count', parents=[common], help='primitive basis counts')
    count.add_argument('--n', help="extents, e.g. '1-8' or '2,3,5'")
    count.add_argument('-d', '--dimension')
    count.add_argument('--m-anh', dest='m_anh')
    count.add_argument('--level', help=f"comma-separated levels from {', '.join(LEVELS)}")

    propagator = commands.add_parser('propagator', parents=[common], help='free propagator series')
    propagator.add_argument('--space', choices=SPACES)
    propagator.add_argument('--params', help="e.g. 'm=1;T=8' or 'm=1;a=0.9'")
    propagator.add_argument('--grid', help="'start:stop:step' or comma-separated points")

    evolve = commands.add_parser('evolve', parents=[common, lattice], help='integrate a coupling flow')
    evolve.add_argument('--parameter', choices=PARAMETERS)
    evolve.add_argument('--start', help="start value(s), ';'-separated per bond")
    evolve.add_argument('--target', help="target value(s), ';'-separated per bond")
    evolve.add_argument('--path', choices=('diagonal', 'sequential'))

    oracle = commands.add_parser('oracle', parents=[common, lattice], help='direct lattice integration')
    oracle.add_argument('--method', choices=('tensor', 'monte-carlo'))
    oracle.add_argument('--nodes')
    oracle.add_argument('--samples')

    verify = commands.add_parser('verify', parents=[common], help='run the identity suite')
    verify.add_argument('--checks', help=f"comma-separated checks from {', '.join(SUITE)}")
    return parser


def resolve_job(args: argparse.Namespace) -> JobSpec:
    """Job file values first, then every flag that was given."""
    job = JobSpec.from_file(args.config) if args.config else JobSpec()
    job.command = args.command
    for flag, attribute in FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(job, attribute, str(value))
    job.validate()
    return job


def build_lattice(job: JobSpec) -> LatticeSpec:
    dimension, extent = int(job.dimension), int(job.extent)
    if job.mode == 'per-site':
        return LatticeSpec.per_site(dimension, extent, a=job.a, g=job.g)
    spec = LatticeSpec.uniform(dimension, extent, k=job.k, lam=job.lam, w=job.w, a=job.a, g=job.g)
    if job.mode == 'numeric' and not spec.is_numeric:
        raise JobConfigError(f"numeric mode needs rational couplings, found symbols {spec.symbols()}")
    return spec


def parse_indices(job: JobSpec, spec: LatticeSpec) -> List[MultiIndex]:
    indices = []
    for chunk in parse_list(job.multi_indices):
        try:
            dense = tuple(int(v) for v in chunk.split(','))
        except ValueError:
            raise JobConfigError(f"Bad multi-index '{chunk}'")
        if len(dense) != spec.site_count:
            raise JobConfigError(f"Multi-index '{chunk}' needs {spec.site_count} entries")
        if min(dense) < 0:
            raise JobConfigError(f"Multi-index '{chunk}' has a negative occupation")
        indices.append(spec.index(dense))
    if not indices:
        raise JobConfigError("no multi-indices given")
    return indices


def parse_grid(text: str) -> np.ndarray:
    """'0:4:0.5' (inclusive) or '0,0.5,1'."""
    text = text.strip() or '0:4:0.5'
    try:
        if ':' in text:
            start, stop, step = (float(v) for v in text.split(':'))
            if step <= 0 or stop < start:
                raise JobConfigError(f"Bad grid '{text}'")
            return np.linspace(start, stop, int(round((stop - start) / step)) + 1)
        return np.array([float(v) for v in text.split(',') if v.strip()])
    except ValueError:
        raise JobConfigError(f"Bad grid '{text}'")


def _numbers(text: str) -> Optional[List[float]]:
    values = parse_list(text)
    if not values:
        return None
    try:
        return [float(Fraction(v)) for v in values]
    except ValueError:
        raise JobConfigError(f"Expected rational values, got '{text}'")


def _base_report(job: JobSpec, settings: Dict) -> Dict:
    return {'command': job.command, 'config': job.as_dict(), 'settings': settings}


# ============== Commands ==============

def cmd_reduce(job: JobSpec) -> Dict:
    spec = build_lattice(job)
    indices = parse_indices(job, spec)
    lattice_key = spec.key()
    report = _base_report(job, {'memo_limit': REDUCTION_CONFIG['memo_limit']})
    report['lattice'] = spec.describe()

    results, rows = [], []
    for nu in indices:
        cached = db.get_reduction(lattice_key, nu.key())
        if cached:
            logger.info(f"Reduction of {nu.key() or 'vacuum'} served from the store")
            combination = LinearCombination.from_terms(cached['decomposition'])
            trace = {'steps': cached['steps'], 'visited': cached['visited']}
        else:
            combination, full_trace = reduce_to_primitive(nu, spec, get_reducer(spec))
            trace = {'steps': full_trace.steps, 'visited': full_trace.visited}
            db.save_reduction(lattice_key, nu.key(), combination.to_terms(), trace['steps'], trace['visited'])
        dense = list(spec.dense(nu))
        results.append({
            'index': dense,
            'primitive': is_primitive(nu, spec.m_anh),
            'terms': combination.to_terms(spec),
            'trace': trace,
        })
        for mu, coefficient in combination.items():
            rows.append({'index': dense, 'primitive': list(spec.dense(mu)), 'coefficient': str(coefficient)})
    logger.info(f"Reduced {len(indices)} correlators on {spec.site_count} sites")
    report['results'] = results
    report['rows'] = rows
    report['columns'] = ['index', 'primitive', 'coefficient']
    return report


def cmd_count(job: JobSpec) -> Dict:
    n_values = parse_int_range(job.n_values or job.extent)
    levels = [level.strip() for level in job.level.replace(';', ',').split(',') if level.strip()]
    for level in levels:
        if level not in LEVELS:
            raise JobConfigError(f"Unknown counting level '{level}'")
    rows = count_table(n_values, int(job.dimension), int(job.m_anh), levels, strict=True)
    report = _base_report(job, {'n_values': n_values, 'levels': levels})
    report['rows'] = rows
    report['columns'] = ['N', 'd', 'm_anh', *levels, 'group_order', 'lower_bound']
    return report


def cmd_propagator(job: JobSpec) -> Dict:
    if job.space not in SPACES:
        raise JobConfigError(f"Unknown space '{job.space}'")
    try:
        params = parse_params(job.propagator_params or 'm=1')
    except ValueError:
        raise JobConfigError(f"Bad propagator parameters '{job.propagator_params}'")
    missing = [name for name in REQUIRED_PARAMS[job.space] if name not in params]
    if job.space == 'circular' and 'N' not in params and 'T' not in params:
        missing.append('N')
    if missing:
        raise JobConfigError(f"{job.space} propagator needs parameters {missing}")
    tol = optional_float(job.tol, PROPAGATOR_CONFIG['tol'])
    grid = parse_grid(job.grid)
    values = propagator_series(job.space, params, grid, tol)

    report = _base_report(job, {'params': params, 'tol': tol})
    report['rows'] = [{'t': float(t), 'value': float(v)} for t, v in zip(grid, values)]
    report['columns'] = ['t', 'value']
    if job.space in ('lattice', 'circular') and 'a' in params:
        report['effective'] = lattice_effective_params(params['m'], params['a']).as_dict()
    return report


def _flow_endpoint(job: JobSpec, text: str, labels: Sequence[str]):
    values = _numbers(text)
    if values is None:
        return None
    if len(values) == 1:
        return values[0]
    if len(values) != len(labels):
        raise JobConfigError(f"Expected 1 or {len(labels)} flow values, got {len(values)}")
    return values


def cmd_evolve(job: JobSpec) -> Dict:
    spec = build_lattice(job)
    parameter = job.parameter
    if parameter not in PARAMETERS:
        raise JobConfigError(f"Unknown flow parameter '{parameter}'")
    tol = optional_float(job.tol, FLOW_CONFIG['tol'])
    threads = optional_int(job.threads, REDUCTION_CONFIG['threads'])

    system = generate_flow_system(spec, parameter, threads=threads)
    stray = [s for s in system.spec.symbols() if s not in system.labels]
    if stray:
        raise JobConfigError(f"evolve needs rational values for every non-flowing coupling, found {stray}")

    # the lattice's own value of the flowing coupling is the default endpoint
    own = {'w': job.w, 'w_bonds': job.w, 'k': job.k, 'lambda': job.lam}[parameter]
    target = _flow_endpoint(job, job.flow_target or own, system.labels)
    if target is None:
        raise JobConfigError("no flow target given")
    start = _flow_endpoint(job, job.flow_start, system.labels)
    if start is None and parameter == 'lambda':
        raise JobConfigError("the lambda flow needs a start value")

    state = integrate_flow(system, target, tol=tol, start=start, path=job.path)
    normalized = state.normalized()

    report = _base_report(job, {'tol': tol, 'threads': threads, 'method': FLOW_CONFIG['method']})
    report['lattice'] = spec.describe()
    report['system'] = {'parameter': parameter, 'labels': system.labels, 'size': system.size}
    report['endpoint'] = state.parameters
    report['error_estimate'] = state.error_estimate
    report['rows'] = [{'index': list(spec.dense(nu)), 'value': state.value(nu), 'normalized': normalized[nu]}
                      for nu in system.basis]
    report['columns'] = ['index', 'value', 'normalized']
    if job.multi_indices.strip():
        report['correlators'] = [{'index': list(spec.dense(nu)),
                                  'normalized': evaluate_correlator(nu, system, state)}
                                 for nu in parse_indices(job, spec)]
    return report


def cmd_oracle(job: JobSpec) -> Dict:
    spec = build_lattice(job)
    if job.method not in METHODS:
        raise JobConfigError(f"Unknown oracle method '{job.method}'")
    if not spec.is_numeric:
        raise JobConfigError(f"the oracle needs rational couplings, found symbols {spec.symbols()}")
    cfg = OracleConfig(
        method=job.method,
        nodes=optional_int(job.nodes, ORACLE_CONFIG['nodes']),
        samples=optional_int(job.samples, ORACLE_CONFIG['samples']),
        seed=optional_int(job.seed, ORACLE_CONFIG['seed']),
        tol=optional_float(job.tol, ORACLE_CONFIG['tol']),
    )
    report = _base_report(job, {'method': cfg.method, 'nodes': cfg.nodes, 'samples': cfg.samples,
                                'seed': cfg.seed, 'tol': cfg.tol})
    report['lattice'] = spec.describe()
    rows = []
    for nu in parse_indices(job, spec):
        result = direct_correlator(spec, nu, cfg)
        rows.append({'index': list(spec.dense(nu)), **result.as_dict()})
    report['rows'] = rows
    report['columns'] = ['index', 'value', 'error', 'normalized', 'normalized_error', 'method']
    return report


def cmd_verify(job: JobSpec) -> Dict:
    names = [name.strip() for name in job.checks.replace(';', ',').split(',') if name.strip()]
    for name in names:
        if name not in SUITE:
            raise JobConfigError(f"Unknown check '{name}'")
    results = run_suite(names or DEFAULT_CHECKS)
    report = _base_report(job, {'checks': names or list(DEFAULT_CHECKS)})
    report['rows'] = [r.as_dict() for r in results]
    report['columns'] = ['name', 'passed', 'deviation', 'tolerance', 'detail']
    report['passed'] = all(r.passed for r in results)
    return report


HANDLERS = {
    'reduce': cmd_reduce,
    'count': cmd_count,
    'propagator': cmd_propagator,
    'evolve': cmd_evolve,
    'oracle': cmd_oracle,
    'verify': cmd_verify,
}


# ============== Entry point ==============

def run_job(job: JobSpec) -> Tuple[Dict, int]:
    """Run one job; failures come back as a failure record with its exit code."""
    try:
        report = HANDLERS[job.command](job)
    except USAGE_ERRORS as e:
        logger.error(f"{job.command}: {e}")
        return _failure(job, e, EXIT_USAGE), EXIT_USAGE
    except (ValueError, LookupError, ArithmeticError, RuntimeError) as e:
        logger.error(f"{job.command} failed: {e}")
        return _failure(job, e, EXIT_COMPUTE), EXIT_COMPUTE
    if job.command == 'verify' and not report['passed']:
        failed = [row['name'] for row in report['rows'] if not row['passed']]
        logger.error(f"Verification failed: {', '.join(failed)}")
        return report, EXIT_VERIFY
    return report, EXIT_OK


def _failure(job: JobSpec, error: Exception, code: int) -> Dict:
    return {
        'command': job.command,
        'config': job.as_dict(),
        'error': {'type': type(error).__name__, 'message': str(error)},
        'exit_code': code,
    }


def emit(report: Dict, job: JobSpec, failed: bool = False):
    """Write the report (failures always as JSON) to the job's output path or stdout."""
    content = render_json(report) if failed else render(report, job.format)
    if job.out:
        save_report(content, job.out)
    else:
        sys.stdout.write(content)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=getattr(logging, (args.log_level or LOG_LEVEL).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )
    if args.db is not None:
        db.set_db_path(args.db)

    try:
        job = resolve_job(args)
    except JobConfigError as e:
        logger.error(str(e))
        failure = {'command': args.command, 'error': {'type': type(e).__name__, 'message': str(e)},
                   'exit_code': EXIT_USAGE}
        sys.stdout.write(render_json(failure))
        return EXIT_USAGE

    report, code = run_job(job)
    try:
        emit(report, job, failed=code in (EXIT_USAGE, EXIT_COMPUTE))
    except OSError as e:
        logger.error(f"Could not write report: {e}")
        code = code or EXIT_USAGE
    db.record_run(job.command, job.as_dict(), plain(report), code)
    return code


if __name__ == '__main__':
    sys.exit(main())
