import json

import matplotlib
import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from roa_forge import EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, create_app
from roa_forge.services.levelset import v_eval


@pytest.fixture
def app():
    return create_app()


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def sec3_results(app, runner, data_config):
    config = data_config('sec3.json')
    result = runner.invoke(app, ['estimate', str(config), '--samples', '20000'])
    assert result.exit_code == EXIT_OK, result.output
    return config, config.parent / 'sec3.results.json'


def _write_config(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def _one_dimensional(tmp_path, name, equation, vertex, certificate=None):
    case = {'box': {'lower': [-1.0], 'upper': [1.0]}, 'vertices': [[[vertex]]]}
    if certificate is not None:
        case['certificate'] = certificate
    doc = {
        'system': {'dim': 1, 'equations': [equation]},
        'cases': [case],
        'validation': {'samples': 50},
    }
    return _write_config(tmp_path, name, doc)


def test_estimate_sec3(sec3_results):
    _, results_path = sec3_results
    doc = json.loads(results_path.read_text())
    assert doc['success']
    case = doc['cases'][0]
    assert case['success']
    assert 0.0513 <= case['k'] <= 0.0567
    assert case['residual'] <= 1e-9
    assert case['certificate']['margin'] > 0
    assert doc['areas']['union']['samples'] == 20000


def test_estimate_rejects_non_square_transform(app, runner, tmp_path, data_config):
    doc = json.loads(data_config('sec3.json').read_text())
    doc['cases'][0]['transform'] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
    path = _write_config(tmp_path, 'bad.json', doc)
    result = runner.invoke(app, ['estimate', str(path)])
    assert result.exit_code == EXIT_USAGE
    assert 'cases[0].transform' in result.output
    assert not (tmp_path / 'bad.results.json').exists()


def test_estimate_reports_schema_field(app, runner, tmp_path, data_config):
    doc = json.loads(data_config('sec3.json').read_text())
    doc['cases'][0]['box'] = {'lower': [-1.0, -0.5]}
    path = _write_config(tmp_path, 'nobox.json', doc)
    result = runner.invoke(app, ['estimate', str(path)])
    assert result.exit_code == EXIT_USAGE
    assert 'cases[0].box' in result.output


def test_estimate_missing_config(app, runner, tmp_path):
    result = runner.invoke(app, ['estimate', str(tmp_path / 'absent.json')])
    assert result.exit_code == EXIT_USAGE


def test_estimate_bad_lambda_grid(app, runner, data_config):
    result = runner.invoke(app, ['estimate', str(data_config('sec3.json')), '--lambda-grid', '0,abc'])
    assert result.exit_code == EXIT_USAGE
    assert '--lambda-grid' in result.output


def test_estimate_union_beats_first_member(app, runner, data_config):
    config = data_config('sec4_union.json')
    result = runner.invoke(app, ['estimate', str(config)])
    assert result.exit_code == EXIT_OK, result.output
    doc = json.loads((config.parent / 'sec4_union.results.json').read_text())
    assert [c['success'] for c in doc['cases']] == [True, True]
    assert 1.463 <= doc['cases'][1]['k'] <= 1.617
    assert doc['comparison']['union_exceeds_first']
    assert [m['index'] for m in doc['areas']['members']] == [0, 1]


def test_estimate_is_deterministic(app, runner, data_config, tmp_path):
    config = data_config('sec4_union.json')
    first, second = tmp_path / 'first.json', tmp_path / 'second.json'
    for path in (first, second):
        result = runner.invoke(app, ['estimate', str(config), '--samples', '5000', '--results', str(path)])
        assert result.exit_code == EXIT_OK, result.output
    assert first.read_bytes() == second.read_bytes()


def test_validate_sec3(app, runner, sec3_results):
    config, results_path = sec3_results
    result = runner.invoke(app, ['validate', str(results_path), str(config), '--samples', '200'])
    assert result.exit_code == EXIT_OK, result.output
    assert '200/200 converged' in result.output


def test_validate_catches_tampered_certificate(app, runner, sec3_results):
    config, results_path = sec3_results
    doc = json.loads(results_path.read_text())
    P1 = doc['cases'][0]['certificate']['P'][0]
    P1[0][0] = -P1[0][0]
    results_path.write_text(json.dumps(doc))
    result = runner.invoke(app, ['validate', str(results_path), str(config), '--samples', '50'])
    assert result.exit_code == EXIT_VALIDATION
    assert 'FAIL case 0' in result.output


def test_validate_ignores_tolerance_stored_in_results(app, runner, sec3_results):
    config, results_path = sec3_results
    doc = json.loads(results_path.read_text())
    case = doc['cases'][0]
    case['certificate']['lambdas'] = [1e6, 1e6]
    case['details']['verification']['tol'] = -1e12
    results_path.write_text(json.dumps(doc))
    result = runner.invoke(app, ['validate', str(results_path), str(config), '--samples', '50'])
    assert result.exit_code == EXIT_VALIDATION
    assert 'FAIL case 0: certificate fails' in result.output


def test_validate_writes_report(app, runner, sec3_results, tmp_path):
    config, results_path = sec3_results
    report_path = tmp_path / 'validation.json'
    result = runner.invoke(app, ['validate', str(results_path), str(config), '--samples', '100',
                                 '--report', str(report_path)])
    assert result.exit_code == EXIT_OK, result.output
    report = json.loads(report_path.read_text())
    assert report['passed'] and report['failures'] == []
    assert report['simulation']['tested'] == 100
    assert report['simulation']['fraction'] == 1.0
    assert [d['index'] for d in report['decrease']] == [0]
    assert report['decrease'][0]['violations'] == 0


def test_validate_missing_results(app, runner, tmp_path, data_config):
    config = data_config('sec3.json')
    result = runner.invoke(app, ['validate', str(tmp_path / 'nothing.json'), str(config)])
    assert result.exit_code == EXIT_USAGE


def test_render_sec3(app, runner, sec3_results, tmp_path):
    _, results_path = sec3_results
    svg = tmp_path / 'out' / 'sec3.svg'
    result = runner.invoke(app, ['render', str(results_path), str(svg), '--rays', '256'])
    assert result.exit_code == EXIT_OK, result.output
    assert svg.read_text().lstrip().startswith('<?xml')

    frame = pd.read_csv(svg.with_suffix('.csv'))
    assert list(frame.columns) == ['case_index', 'point_index', 'x1', 'x2']
    assert len(frame) == 256
    case = json.loads(results_path.read_text())['cases'][0]
    points = frame[['x1', 'x2']].to_numpy()
    lower, upper = np.array(case['box']['lower']), np.array(case['box']['upper'])
    assert np.all((points >= lower - 1e-9) & (points <= upper + 1e-9))
    P_list = [np.array(P) for P in case['certificate']['P']]
    assert np.all(v_eval(P_list, points) <= case['k'] * (1.0 + 1e-6))


def test_render_is_reproducible(app, runner, sec3_results, tmp_path):
    _, results_path = sec3_results
    outputs = []
    for name in ('a.svg', 'b.svg'):
        result = runner.invoke(app, ['render', str(results_path), str(tmp_path / name)])
        assert result.exit_code == EXIT_OK, result.output
        outputs.append((tmp_path / name).read_bytes())
    assert outputs[0] == outputs[1]


def test_render_defaults_to_recorded_outputs(app, runner, sec3_results):
    config, results_path = sec3_results
    assert json.loads(results_path.read_text())['outputs'] == {'svg': 'sec3.svg', 'csv': 'sec3.csv'}
    result = runner.invoke(app, ['render', str(results_path)])
    assert result.exit_code == EXIT_OK, result.output
    assert config.with_suffix('.svg').read_text().lstrip().startswith('<?xml')
    assert len(pd.read_csv(config.with_suffix('.csv'))) == 512


def test_render_leaves_global_rc_alone(app, runner, sec3_results, tmp_path):
    _, results_path = sec3_results
    before = matplotlib.rcParams['svg.hashsalt']
    result = runner.invoke(app, ['render', str(results_path), str(tmp_path / 'plot.svg')])
    assert result.exit_code == EXIT_OK, result.output
    assert matplotlib.rcParams['svg.hashsalt'] == before


def test_render_union_writes_both_members(app, runner, data_config, tmp_path):
    config = data_config('sec4_union.json')
    assert runner.invoke(app, ['estimate', str(config), '--samples', '20000']).exit_code == EXIT_OK
    csv = tmp_path / 'polylines.csv'
    result = runner.invoke(app, ['render', str(config.parent / 'sec4_union.results.json'),
                                 str(tmp_path / 'union.svg'), '--csv', str(csv)])
    assert result.exit_code == EXIT_OK, result.output
    assert sorted(pd.read_csv(csv)['case_index'].unique()) == [0, 1]


def test_all_cases_failed(app, runner, tmp_path):
    config = _one_dimensional(tmp_path, 'unstable.json', [{'coeff': 1.0, 'powers': [1]}], 1.0)
    result = runner.invoke(app, ['estimate', str(config)])
    assert result.exit_code == EXIT_INFEASIBLE
    results_path = tmp_path / 'unstable.results.json'
    doc = json.loads(results_path.read_text())
    assert not doc['success']
    assert doc['cases'][0]['stage'] == 'lmi'

    render = runner.invoke(app, ['render', str(results_path), str(tmp_path / 'unstable.svg')])
    assert render.exit_code == EXIT_USAGE


def test_one_dimensional_results_are_not_rendered(app, runner, tmp_path):
    equation = [{'coeff': -1.0, 'powers': [1]}, {'coeff': -1.0, 'powers': [3]}]
    config = _one_dimensional(tmp_path, 'line.json', equation, -1.0,
                              {'P': [[[1.0]]], 'lambdas': [0.0]})
    result = runner.invoke(app, ['estimate', str(config)])
    assert result.exit_code == EXIT_OK, result.output
    doc = json.loads((tmp_path / 'line.results.json').read_text())
    assert doc['cases'][0]['k'] == pytest.approx(1.0)
    assert 'comparison' not in doc

    render = runner.invoke(app, ['render', str(tmp_path / 'line.results.json'), str(tmp_path / 'line.svg')])
    assert render.exit_code == EXIT_USAGE
    assert 'planar' in render.output


def test_unknown_command_is_a_usage_error(app, runner):
    result = runner.invoke(app, ['frobnicate'])
    assert result.exit_code == EXIT_USAGE


def test_unwritable_results_after_all_cases_failed(app, runner, tmp_path):
    config = _one_dimensional(tmp_path, 'unstable.json', [{'coeff': 1.0, 'powers': [1]}], 1.0)
    blocker = tmp_path / 'blocker'
    blocker.write_text('not a directory')
    result = runner.invoke(app, ['estimate', str(config), '--results', str(blocker / 'out.json')])
    assert result.exit_code == EXIT_USAGE
    assert 'cannot write results' in result.output
    assert result.exception is None or isinstance(result.exception, SystemExit)
