import json

import numpy as np
import pytest

from src.cli import EXIT_COMPUTE, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main
from src.config import SYMMETRY_CONFIG, JobSpec
from src.evolution import initial_primitive_values
from src.lattice import LatticeSpec
from src.verification import SUITE, CheckResult


@pytest.fixture
def run(tmp_path, no_store):
    """Run the CLI with the store disabled and return (exit code, report text)."""
    counter = {'n': 0}

    def _run(*argv, name=None):
        counter['n'] += 1
        out = tmp_path / (name or f'report-{counter["n"]}.out')
        code = main([*argv, '--db', '', '--out', str(out)])
        return code, out.read_text()
    return _run


def test_reduce_two_site(run):
    code, text = run('reduce', '-N', '2', '--nu', '3,3;2,2')
    assert code == EXIT_OK
    report = json.loads(text)
    first, second = report['results']
    assert first['index'] == [3, 3]
    assert not first['primitive']
    assert len(first['terms']) == 4
    assert first['trace'] == {'steps': 3, 'visited': 7}
    assert second['primitive']
    assert len(second['terms']) == 1
    assert report['lattice']['extent'] == 2


def test_reduce_csv_rows(run):
    code, text = run('reduce', '-N', '2', '--nu', '3,3', '--format', 'csv')
    assert code == EXIT_OK
    lines = text.splitlines()
    assert lines[0] == 'index,primitive,coefficient'
    assert len(lines) == 5


def test_count(run):
    code, text = run('count', '--n', '1-8', '--level', 'parity')
    assert code == EXIT_OK
    rows = json.loads(text)['rows']
    assert [row['parity'] for row in rows] == [2, 5, 14, 41, 122, 365, 1094, 3281]


def test_count_too_large(run, monkeypatch):
    monkeypatch.setitem(SYMMETRY_CONFIG, 'max_enumeration', 100)
    code, text = run('count', '--n', '6', '--level', 'full')
    assert code == EXIT_USAGE
    assert json.loads(text)['error']['type'] == 'EnumerationTooLargeError'


def test_propagator(run):
    code, text = run('propagator', '--space', 'line', '--params', 'm=1', '--grid', '0:2:0.5')
    assert code == EXIT_OK
    rows = json.loads(text)['rows']
    assert [row['t'] for row in rows] == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert rows[0]['value'] == 0.5


def test_propagator_csv_and_effective_params(run):
    code, text = run('propagator', '--space', 'lattice', '--params', 'm=1;a=0.9', '--grid', '0,1,2',
                     '--format', 'csv')
    assert code == EXIT_OK
    assert text.splitlines()[0] == 't,value'
    code, text = run('propagator', '--space', 'lattice', '--params', 'm=1;a=0.9', '--grid', '0')
    assert json.loads(text)['effective']['Z_eff'] == pytest.approx(0.456, abs=1e-3)


def test_propagator_missing_parameter(run):
    code, text = run('propagator', '--space', 'circle', '--params', 'm=1')
    assert code == EXIT_USAGE
    assert 'T' in json.loads(text)['error']['message']


def test_evolve_to_start_returns_initial_data(run):
    code, text = run('evolve', '-N', '2', '--mode', 'numeric', '--k', '1', '--lambda', '1/2', '--w', '1/4',
                     '--target', '0')
    assert code == EXIT_OK
    report = json.loads(text)
    spec = LatticeSpec.numeric(1, 2, w=0)
    basis = [spec.index(row['index']) for row in report['rows']]
    expected = initial_primitive_values(spec, basis)
    np.testing.assert_array_equal([row['value'] for row in report['rows']], expected)
    assert report['endpoint'] == {'w': 0.0}


def test_evolve_reports_correlators(run):
    code, text = run('evolve', '-N', '2', '--mode', 'numeric', '--k', '1', '--lambda', '1/2', '--w', '1/4',
                     '--nu', '1,1;4,0')
    assert code == EXIT_OK
    report = json.loads(text)
    assert report['endpoint'] == {'w': 0.25}
    assert [c['index'] for c in report['correlators']] == [[1, 1], [4, 0]]
    assert report['error_estimate'] < 1e-6


def test_evolve_needs_rational_couplings(run):
    code, _ = run('evolve', '-N', '2', '--target', '1/4')
    assert code == EXIT_USAGE


def test_lambda_flow_through_zero(run):
    code, text = run('evolve', '-N', '1', '--mode', 'numeric', '--k', '1', '--lambda', '1/2', '--w', '0',
                     '--parameter', 'lambda', '--start=1/2', '--target=-1/2')
    assert code == EXIT_COMPUTE
    assert json.loads(text)['error']['type'] == 'SingularFlowPointError'


def test_reports_are_reproducible(run):
    argv = ('count', '--n', '2-5', '--level', 'none,parity,full')
    assert run(*argv, name='count.json')[1] == run(*argv, name='count.json')[1]
    argv = ('reduce', '-N', '3', '--nu', '5,4,3')
    first = run(*argv, name='reduce.json')[1]
    assert first == run(*argv, name='reduce.json')[1]
    assert json.loads(first)['config']['out'].endswith('reduce.json')


def test_cubic_count_report(run):
    code, text = run('count', '--n', '2', '--level', 'none,parity,full', '--m-anh', '3')
    assert code == EXIT_OK
    row = json.loads(text)['rows'][0]
    assert (row['none'], row['parity'], row['full']) == (4, 4, 3)


def test_config_file_with_flag_override(run, tmp_path):
    path = tmp_path / 'job.ini'
    path.write_text(JobSpec(command='reduce', extent='2', multi_indices='3,3').to_ini())
    code, text = run('reduce', '--config', str(path))
    assert len(json.loads(text)['results'][0]['terms']) == 4
    code, text = run('reduce', '--config', str(path), '--nu', '2,2')
    assert code == EXIT_OK
    assert json.loads(text)['results'][0]['index'] == [2, 2]


def test_missing_config_file(tmp_path, no_store, capsys):
    code = main(['reduce', '--config', str(tmp_path / 'absent.ini'), '--db', ''])
    assert code == EXIT_USAGE
    assert json.loads(capsys.readouterr().out)['exit_code'] == EXIT_USAGE


@pytest.mark.parametrize('nu', ['3,x', '3', '3,-1', ''])
def test_bad_multi_index(run, nu):
    code, text = run('reduce', '-N', '2', '--nu', nu)
    assert code == EXIT_USAGE
    assert json.loads(text)['error']['type'] == 'JobConfigError'


def test_oracle_needs_numeric_couplings(run):
    code, _ = run('oracle', '-N', '2', '--nu', '1,1')
    assert code == EXIT_USAGE


def test_oracle_two_site(run):
    code, text = run('oracle', '-N', '2', '--k', '1', '--lambda', '1/2', '--w', '1/4', '--nu', '0,0;2,1')
    assert code == EXIT_OK
    rows = json.loads(text)['rows']
    assert rows[0]['normalized'] == pytest.approx(1.0)
    assert rows[1]['value'] == 0.0


def test_verify_selected_checks(run):
    code, text = run('verify', '--checks', 'counting,propagators')
    assert code == EXIT_OK
    report = json.loads(text)
    assert report['passed']
    assert [row['name'] for row in report['rows']] == ['counting', 'propagators']


def test_verify_failure_exit_code(run, monkeypatch):
    monkeypatch.setitem(SUITE, 'counting', lambda: CheckResult('counting', False, 1.0))
    code, text = run('verify', '--checks', 'counting')
    assert code == EXIT_VERIFY
    assert not json.loads(text)['passed']


def test_unknown_check(run):
    code, _ = run('verify', '--checks', 'everything')
    assert code == EXIT_USAGE


def test_reduction_cache_round_trip(tmp_path, store):
    outputs = []
    out = tmp_path / 'cached.json'
    for _ in range(2):
        assert main(['reduce', '-N', '2', '--nu', '3,3', '--db', store.DB_PATH, '--out', str(out)]) == EXIT_OK
        outputs.append(out.read_text())
    assert outputs[0] == outputs[1]
    stats = store.get_store_stats()
    assert stats['cached_reductions'] == 1
    assert stats['runs_by_command'] == {'reduce': 2}
