import io

import pandas as pd
import pytest

from app import create_app
from src.cli import cli
from src.config import Config
from src.utils.database import get_registry
from src.utils.reports import report_body


def _frame(text):
    return pd.read_csv(io.StringIO(report_body(text)))


def test_falsify_d4(runner, d4_csv):
    result = runner.invoke(cli, ['falsify', '--input', d4_csv], obj={})
    assert result.exit_code == 0, result.stderr
    assert result.stdout.splitlines()[0] == f'# command: cli falsify --input {d4_csv}'
    frame = _frame(result.stdout)
    assert frame['pair'].tolist() == ['(z1,z2)', '(z2,z1)']
    assert frame['statistic'].tolist() == pytest.approx([0.0, 1.4142], abs=1e-4)
    assert frame['selected'].tolist() == [True, True]
    assert 'psi1' not in frame.columns


def test_falsify_presumed(runner, d4_csv, tmp_path):
    presumed = tmp_path / 'pairs.csv'
    presumed.write_text('z2,z1\n')
    result = runner.invoke(cli, ['falsify', '--input', d4_csv, '--presumed', str(presumed)], obj={})
    assert result.exit_code == 0, result.stderr
    assert _frame(result.stdout)['selected'].tolist() == [False, True]


def test_falsify_multivalued_needs_multivalued_treatment(runner, d4_csv):
    result = runner.invoke(cli, ['falsify', '--input', d4_csv, '--multivalued'], obj={})
    assert result.exit_code == 2
    assert result.stderr.startswith('error:')


def test_estimate_d4(runner, d4_csv):
    result = runner.invoke(cli, ['estimate', '--input', d4_csv, '--tau', '1'], obj={})
    assert result.exit_code == 0, result.stderr
    frame = _frame(result.stdout)
    assert frame['beta'].tolist() == pytest.approx([1.0, 0.0])
    assert frame['selected'].tolist() == [True, False]


def test_estimate_value_set_to_file(runner, d4_csv, tmp_path):
    output = tmp_path / 'late.csv'
    result = runner.invoke(cli, ['estimate', '--input', d4_csv, '--value-set', 'z1,z2', '--output', str(output)],
                           obj={})
    assert result.exit_code == 0, result.stderr
    assert 'theta1 over {z1,z2}: 1.0000' in result.stdout
    text = output.read_text()
    assert '# theta1: 1' in text
    assert _frame(text)['beta'].tolist() == pytest.approx([1.0, 1.0])


def test_config_file_then_flags(runner, d4_csv, tmp_path):
    config = tmp_path / 'run.conf'
    config.write_text(f'input_path = {d4_csv}\ntau = 1\n')
    result = runner.invoke(cli, ['--config', str(config), 'estimate'], obj={})
    assert _frame(result.stdout)['beta'].tolist() == pytest.approx([1.0, 0.0])
    result = runner.invoke(cli, ['--config', str(config), 'estimate', '--tau', '4'], obj={})
    assert _frame(result.stdout)['beta'].tolist() == pytest.approx([1.0, 1.0])


def test_wald_test_on_unselected_pair(runner, d4_csv):
    result = runner.invoke(cli, ['test', '--input', d4_csv, '--tau', '1', '--pair', 'z2:z1'], obj={})
    assert result.exit_code == 0, result.stderr
    row = _frame(result.stdout).iloc[0]
    assert row['ts1'] == 0
    assert bool(row['reject'])


def test_library_errors_exit_two(runner, d4_csv, tmp_path):
    result = runner.invoke(cli, ['falsify', '--input', d4_csv, '--z-column', 'quarter'], obj={})
    assert result.exit_code == 2
    assert "'quarter'" in result.stderr
    result = runner.invoke(cli, ['estimate'], obj={})
    assert result.exit_code == 2
    assert '--input is required' in result.stderr
    result = runner.invoke(cli, ['falsify', '--input', d4_csv, '--endpoints', 'some'], obj={})
    assert result.exit_code == 2


def test_simulate_is_reproducible(runner):
    args = ['simulate', '--family', 'section5:1', '--family', 'section5:3', '--n', '120', '--reps', '2',
            '--tau-grid', '2,4', '--seed', '3']
    first = runner.invoke(cli, args, obj={})
    second = runner.invoke(cli, args, obj={})
    assert first.exit_code == 0, first.stderr
    assert report_body(first.stdout) == report_body(second.stdout)
    frame = _frame(first.stdout)
    assert frame.columns.tolist() == ['dgp', 'n', 'tau', '(0,1)', '(0,2)', '(1,2)']
    assert len(frame) == 4


def test_simulate_bad_family(runner):
    result = runner.invoke(cli, ['simulate', '--family', 'lottery', '--reps', '1'], obj={})
    assert result.exit_code == 2


def test_record_stores_run(runner, d4_csv, tmp_path, monkeypatch):
    monkeypatch.setattr(Config, 'SQLALCHEMY_DATABASE_URI', f"sqlite:///{tmp_path / 'runs.db'}")
    result = runner.invoke(cli, ['--record', 'falsify', '--input', d4_csv], obj={})
    assert result.exit_code == 0, result.stderr
    app = create_app()
    with app.app_context():
        runs = get_registry().recent()
        assert len(runs) == 1
        assert runs[0].command == 'falsify'
        assert runs[0].status == 'completed'
        assert runs[0].result['selected'] == ['(z1,z2)', '(z2,z1)']


def test_provenance_records_given_options(runner, d4_csv):
    args = ['-v', 'falsify', '--input', d4_csv, '--tau', '1', '--variant', 'pos-part']
    result = runner.invoke(cli, args, obj={})
    assert result.exit_code == 0, result.stderr
    expected = f'# command: cli --verbose falsify --input {d4_csv} --tau 1.0 --variant pos-part'
    assert result.stdout.splitlines()[0] == expected
