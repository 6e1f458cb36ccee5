import numpy as np
import pytest
from click.testing import CliRunner

from app import create_app
from src.models.dataset import Dataset
from src.models.run import db

D4_ROWS = [(1.0, 1, 'z1'), (2.0, 0, 'z1'), (1.0, 1, 'z2'), (3.0, 1, 'z2')]


@pytest.fixture
def d4():
    """Four rows, binary treatment, instrument values z1 and z2."""
    y, d, z = zip(*D4_ROWS)
    return Dataset.from_labels(y, d, z)


@pytest.fixture
def d4_csv(tmp_path):
    path = tmp_path / 'd4.csv'
    lines = ['y,d,z'] + [f'{y:g},{d},{z}' for y, d, z in D4_ROWS]
    path.write_text('\n'.join(lines) + '\n')
    return str(path)


def random_dataset(seed, n=60, K=3, J=2, ordered=True, ties=True):
    """Small random design; outcomes rounded so ties occur."""
    rng = np.random.default_rng(seed)
    z = rng.integers(0, K, size=n)
    z[:K] = np.arange(K)
    d = rng.integers(0, J, size=n)
    d[:J] = np.arange(J)
    y = rng.normal(size=n) + 0.5 * d
    if ties:
        y = np.round(y, 1)
    return Dataset(y, d, z, tuple(range(J)), tuple(range(K)), ordered)


@pytest.fixture
def make_dataset():
    return random_dataset


@pytest.fixture
def app():
    app = create_app({'TESTING': True, 'SQLALCHEMY_DATABASE_URI': 'sqlite://'})
    yield app
    with app.app_context():
        db.session.remove()
        db.drop_all()


@pytest.fixture
def client(app):
    return app.test_client()


@pytest.fixture
def runner():
    return CliRunner(mix_stderr=False)
