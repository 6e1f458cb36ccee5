import pytest

from src.config import Config, EndpointPolicy, RunConfig, coerce_setting, load_config_file
from src.errors import ArgumentError


def test_endpoint_policy_parse():
    assert EndpointPolicy.parse('all').kind == 'all'
    policy = EndpointPolicy.parse('subsample:200:3')
    assert (policy.kind, policy.m, policy.seed) == ('subsample', 200, 3)
    assert str(EndpointPolicy.parse('subsample:50')) == 'subsample:50:0'
    for bad in ('some', 'subsample', 'subsample:x', 'subsample:0', 'subsample:1:2:3'):
        with pytest.raises(ArgumentError):
            EndpointPolicy.parse(bad)


def test_run_config_defaults():
    config = RunConfig()
    assert config.tau == Config.TAU
    assert config.km_threshold == config.tau
    assert RunConfig(t_n=2.5).km_threshold == 2.5
    assert config.validate() is config


@pytest.mark.parametrize('overrides', [
    {'mode': 'categorical'},
    {'variant': 'two-sided'},
    {'tau': 0.0},
    {'xi0': -1.0},
    {'alpha': 1.5},
    {'t_n': 0.0},
    {'mode': 'unordered', 'variant': 'pos-part'},
    {'response_matrix_path': 'r.csv'},
])
def test_validate_rejects(overrides):
    with pytest.raises(ArgumentError):
        RunConfig(**overrides).validate()


def test_with_overrides_skips_none():
    config = RunConfig(tau=3.0).with_overrides(tau=None, variant='pos-part', endpoints='subsample:10', unknown=1)
    assert config.tau == 3.0
    assert config.variant == 'pos-part'
    assert config.endpoints.m == 10


def test_coerce_setting():
    assert coerce_setting('tau', '2.5') == 2.5
    assert coerce_setting('n_jobs', '4') == 4
    assert coerce_setting('multivalued', 'yes') is True
    assert coerce_setting('tau', 3) == 3
    assert coerce_setting('endpoints', 'all').kind == 'all'
    assert coerce_setting('mode', 'ordered') == 'ordered'


def test_load_config_file(tmp_path):
    path = tmp_path / 'run.conf'
    path.write_text('# screening\ntau = 5\nkm-grid = 12  # coarse\n\nvariant = pos-part\n')
    values = load_config_file(str(path))
    assert values == {'tau': 5.0, 'km_grid': 12, 'variant': 'pos-part'}


def test_load_config_file_errors(tmp_path):
    path = tmp_path / 'bad.conf'
    path.write_text('tau 5\n')
    with pytest.raises(ArgumentError, match=':1:'):
        load_config_file(str(path))
    path.write_text('tau = 4\nseed = one\n')
    with pytest.raises(ArgumentError, match=':2:'):
        load_config_file(str(path))


def test_flask_config_mapping():
    mapping = Config.as_flask_config()
    assert mapping['SQLALCHEMY_TRACK_MODIFICATIONS'] is False
    assert 'TAU' in mapping
