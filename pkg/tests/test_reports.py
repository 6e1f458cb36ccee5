import numpy as np

from src import __version__
from src.utils.reports import format_report, json_safe, provenance, read_report, report_body, write_report


def test_provenance_header_order():
    header = provenance('ivscreen falsify', input='d4.csv', seed=None)
    keys = list(header)
    assert keys[:2] == ['command', 'input']
    assert 'seed' not in header
    assert header['ivscreen'] == __version__
    assert keys[-1] == 'generated_at'


def test_format_report():
    text = format_report([{'pair': '(z1,z2)', 'value': 1 / 3}], {'command': 'x'})
    assert text.splitlines()[0] == '# command: x'
    assert report_body(text) == 'pair,value\n"(z1,z2)",0.3333333333'


def test_write_and_read_report(tmp_path):
    path = tmp_path / 'out.csv'
    write_report([{'a': 1, 'b': 2.5}], str(path), {'command': 'test'})
    frame = read_report(str(path))
    assert frame.to_dict('records') == [{'a': 1, 'b': 2.5}]


def test_write_report_to_stdout(capsys):
    write_report([{'a': 1}], None)
    assert capsys.readouterr().out == 'a\n1\n'


def test_json_safe():
    value = json_safe({'flag': np.bool_(True), 'x': np.float64(2.0), 'v': np.arange(2), 'bad': float('nan')})
    assert value == {'flag': True, 'x': 2.0, 'v': [0, 1], 'bad': None}


def test_report_bodies_identical_across_reruns(runner, tmp_path):
    from src.cli import cli

    outputs = []
    for name in ('first.csv', 'second.csv'):
        path = tmp_path / name
        args = ['simulate', '--family', 'section5:1', '--n', '200', '--reps', '3', '--tau-grid', '2,4',
                '--seed', '5', '--output', str(path)]
        result = runner.invoke(cli, args, obj={})
        assert result.exit_code == 0, result.stderr
        outputs.append(path.read_bytes())
    bodies = [b'\n'.join(line for line in text.split(b'\n') if not line.startswith(b'#')) for text in outputs]
    assert bodies[0] == bodies[1]
    assert len(bodies[0]) > 0
