import numpy as np
import pytest

from src.analysis.estimate import (
    beta_pair, beta_vector, iv_ratio, mu_weights, resolve_g, sigma_hat, theta_partial,
)
from src.analysis.simulate import draw
from src.errors import ArgumentError, StructuralError
from src.models.dataset import BOTH, Dataset, PairId, PairSet
from src.models.estimation import GFunction
from src.models.simulation import DgpSpec
from tests.conftest import random_dataset


def _wald(dataset, pair):
    y, d = dataset.y, dataset.treatment_values
    lo, hi = dataset.z == pair.k, dataset.z == pair.kprime
    return (y[hi].mean() - y[lo].mean()) / (d[hi].mean() - d[lo].mean())


def test_beta_pair_d4(d4):
    assert beta_pair(d4, PairId(0, 1)) == pytest.approx(1.0, abs=1e-12)
    assert beta_pair(d4, PairId(0, 1), GFunction([5.0, -2.0])) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize('seed', range(20))
def test_beta_pair_is_the_difference_of_means_ratio(seed):
    dataset = random_dataset(seed, n=80, K=3, J=3, ties=False)
    for pair in (PairId(0, 1), PairId(2, 0)):
        ratio = iv_ratio(dataset, (pair.k, pair.kprime))
        if ratio.degenerate:
            continue
        assert beta_pair(dataset, pair) == pytest.approx(_wald(dataset, pair), rel=1e-11, abs=1e-12)


@pytest.mark.parametrize('seed', range(10))
def test_beta_pair_invariant_to_g(seed):
    dataset = random_dataset(seed, n=80, K=3)
    pair = PairId(0, 2)
    reference = beta_pair(dataset, pair)
    for values in ([0.0, 1.0, 2.0], [3.0, 1.0, -4.0], [1.5, 9.0, 0.1], [-1.0, 0.0, 7.0], [2.0, 2.0, 5.0]):
        assert beta_pair(dataset, pair, GFunction(values)) == pytest.approx(reference, rel=1e-10, abs=1e-10)


def test_beta_pair_antisymmetric(make_dataset):
    dataset = make_dataset(4, K=3)
    assert beta_pair(dataset, PairId(0, 1)) == beta_pair(dataset, PairId(1, 0))


def test_degenerate_first_stage():
    dataset = Dataset([1.0, 2.0, 3.0, 4.0], [0, 1, 0, 1], [0, 0, 1, 1], (0, 1), (0, 1))
    ratio = iv_ratio(dataset, (0, 1))
    assert ratio.degenerate
    assert beta_pair(dataset, PairId(0, 1)) == 0.0


def test_beta_vector_d4(d4):
    estimate = beta_vector(d4, [PairId(0, 1)])
    assert estimate.beta.tolist() == pytest.approx([1.0, 0.0])
    assert estimate.diagnostics[PairId(1, 0)].selected is False
    records = estimate.records(d4)
    assert [r['pair'] for r in records] == ['(z1,z2)', '(z2,z1)']


def test_beta_vector_empty_selection(make_dataset):
    dataset = make_dataset(0, K=3)
    estimate = beta_vector(dataset, PairSet())
    assert not estimate.beta.any()
    assert not estimate.sigma.any()
    assert estimate.sigma.shape == (6, 6)


def test_beta_vector_rejects_outside_pairs(d4):
    with pytest.raises(StructuralError):
        beta_vector(d4, [PairId(0, 2)])


@pytest.mark.parametrize('seed', range(5))
def test_sigma_symmetric_psd(seed):
    dataset = random_dataset(seed, n=200, K=4)
    selected = PairSet.universe(4, BOTH)
    sigma = sigma_hat(dataset, selected)
    assert np.allclose(sigma, sigma.T)
    eig = np.linalg.eigvalsh(sigma)
    assert eig.min() >= -1e-8 * max(eig.max(), 1.0)


def test_sigma_zeroes_unselected_blocks(make_dataset):
    dataset = make_dataset(5, n=150, K=3)
    sigma = sigma_hat(dataset, [PairId(0, 1)])
    universe = list(PairSet.universe(3, BOTH))
    i = universe.index(PairId(0, 1))
    mask = np.ones_like(sigma, dtype=bool)
    mask[i, i] = False
    assert sigma[i, i] > 0
    assert not sigma[mask].any()


def test_sigma_equivariant_under_relabelling(make_dataset):
    dataset = make_dataset(6, n=150, K=3)
    swapped = Dataset(dataset.y, dataset.d, 2 - dataset.z, dataset.treatment_support, dataset.instrument_support)
    universe = list(PairSet.universe(3, BOTH))
    original = sigma_hat(dataset, universe)
    relabelled = sigma_hat(swapped, universe)
    moved = [universe.index(PairId(2 - p.k, 2 - p.kprime)) for p in universe]
    assert np.allclose(original, relabelled[np.ix_(moved, moved)])


def test_theta_partial_d4(d4):
    partial = theta_partial(d4, [0, 1])
    assert partial.theta1 == pytest.approx(1.0)
    assert partial.weights == pytest.approx([1.0])


@pytest.mark.parametrize('seed', range(10))
def test_theta_decomposes_into_adjacent_ratios(seed):
    dataset, _ = draw(DgpSpec('ordered', n=600, seed=seed))
    value_set = [0, 1, 2]
    partial = theta_partial(dataset, value_set)
    mu = mu_weights(dataset, value_set)
    adjacent = [beta_pair(dataset, PairId(a, b)) for a, b in zip(value_set, value_set[1:])]
    assert sum(mu) == pytest.approx(1.0, abs=1e-10)
    assert partial.theta1 == pytest.approx(float(np.dot(mu, adjacent)), rel=1e-10, abs=1e-10)


def test_theta_over_full_support_is_classical_iv(make_dataset):
    dataset = make_dataset(7, n=150, K=3, ties=False)
    gz = dataset.z.astype(float)
    d = dataset.treatment_values
    classical = np.cov(gz, dataset.y)[0, 1] / np.cov(gz, d)[0, 1]
    assert theta_partial(dataset, [0, 1, 2]).theta1 == pytest.approx(classical, rel=1e-11, abs=1e-12)


def test_theta_argument_checks(d4):
    with pytest.raises(ArgumentError):
        theta_partial(d4, [0])
    with pytest.raises(ArgumentError):
        theta_partial(d4, [0, 0])


def test_resolve_g(d4):
    assert resolve_g('index', d4).values.tolist() == [0.0, 1.0]
    assert resolve_g('z1=3,z2=-1', d4).values.tolist() == [3.0, -1.0]
    with pytest.raises(ArgumentError):
        resolve_g('labels', d4)
