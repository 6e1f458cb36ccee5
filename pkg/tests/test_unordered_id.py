from itertools import combinations, product

import numpy as np
import pytest

from src.analysis.simulate import draw, oracle_truth
from src.analysis.unordered_id import (
    counterfactuals, is_lonesum, k_transform, moment_stack, mte_index, mte_unordered, pinv_binary,
)
from src.errors import ArgumentError, SchemaError, StructuralError
from src.models.dataset import PairId, PairSet, UPPER
from src.models.simulation import DgpSpec
from src.models.unordered import ResponseMatrix

COMPLIERS = [[0, 0, 1], [0, 1, 1]]


def _lonesum_by_definition(B):
    forbidden = ([[1, 0], [0, 1]], [[0, 1], [1, 0]])
    for rows in combinations(range(B.shape[0]), 2):
        for cols in combinations(range(B.shape[1]), 2):
            if B[np.ix_(rows, cols)].tolist() in forbidden:
                return False
    return True


def _binary_matrices(rows, max_cols):
    for L in range(1, max_cols + 1):
        for bits in product((0, 1), repeat=rows * L):
            yield np.array(bits).reshape(rows, L)


def test_lonesum_matches_definition():
    for B in _binary_matrices(2, 4):
        assert is_lonesum(B) == _lonesum_by_definition(B)
    for B in _binary_matrices(3, 3):
        assert is_lonesum(B) == _lonesum_by_definition(B)


def test_lonesum_rejects_non_binary():
    with pytest.raises(ArgumentError):
        is_lonesum([[0, 2]])


@pytest.mark.parametrize('B', list(_binary_matrices(2, 4)))
def test_pinv_binary_is_moore_penrose(B):
    P = pinv_binary(B)
    Bf = B.astype(float)
    assert P.shape == (B.shape[1], 2)
    assert np.allclose(Bf @ P @ Bf, Bf)
    assert np.allclose(P @ Bf @ P, P)
    assert np.allclose((Bf @ P).T, Bf @ P)
    assert np.allclose((P @ Bf).T, P @ Bf)
    assert np.allclose(P, np.linalg.pinv(Bf))


def test_k_transform_drops_repeated_columns():
    R = ResponseMatrix([[0, 0, 1, 0], [0, 1, 1, 0], [2, 1, 1, 0]])
    response = k_transform(R, PairId(0, 1))
    assert response.kr.tolist() == [[0, 0, 1], [0, 1, 1]]
    assert response.sigma_sets[(1, 1)] == frozenset({(0, 1)})
    assert response.sigma_sets[(1, 2)] == frozenset({(1, 1)})
    assert response.b[(0, 2)].tolist() == [1, 0, 0]
    with pytest.raises(StructuralError):
        k_transform(R, PairId(1, 0))


def test_response_matrix_checks():
    with pytest.raises(SchemaError):
        ResponseMatrix([[0, 1]])
    with pytest.raises(SchemaError):
        ResponseMatrix([[0, 1], [1, 1]]).check_support(1)
    with pytest.raises(SchemaError):
        ResponseMatrix([[0, 0], [1, 1]])


def test_moment_stack_d4(d4):
    stack = moment_stack(d4)
    assert stack.z_p.tolist() == [0.5, 0.5]
    assert stack.p_dz(1).tolist() == [0.25, 0.5]
    assert stack.q_ydz(1).tolist() == [0.25, 1.0]
    assert stack.sigma_w.shape == (10, 10)
    assert np.allclose(stack.sigma_w, stack.sigma_w.T)


def test_moment_stack_kappa(d4):
    stack = moment_stack(d4, kappa=lambda y: (y <= 1.0).astype(float))
    assert stack.kappa == '<lambda>'
    assert stack.q_ydz(1).tolist() == [0.25, 0.25]
    with pytest.raises(ArgumentError):
        moment_stack(d4, kappa='log')


def test_complier_and_always_taker_shares_d4(d4):
    pair = PairId(0, 1)
    compliers = counterfactuals(d4, pair, COMPLIERS, d=1, t=1)
    always = counterfactuals(d4, pair, COMPLIERS, d=1, t=2)
    assert compliers.probability == pytest.approx(0.5)
    assert always.probability == pytest.approx(0.5)
    assert compliers.mean == pytest.approx(3.0)
    assert always.mean == pytest.approx(1.0)
    untreated = counterfactuals(d4, pair, COMPLIERS, d=0, t=1)
    assert untreated.mean == pytest.approx(2.0)


def test_empty_stratum_is_degenerate(d4):
    never = counterfactuals(d4, PairId(0, 1), COMPLIERS, d=0, t=2)
    assert never.degenerate
    assert np.isnan(never.mean)
    with pytest.raises(ArgumentError):
        counterfactuals(d4, PairId(0, 1), COMPLIERS, d=1, t=3)


def test_mte_d4(d4):
    estimate = mte_unordered(d4, [PairId(0, 1)], COMPLIERS)
    assert estimate.value(PairId(0, 1), 1, 0, 1, 1) == pytest.approx(1.0)
    assert estimate.value(PairId(0, 1), 0, 1, 1, 1) == pytest.approx(-1.0)
    assert estimate.value(PairId(0, 1), 1, 0, 2, 2) == 0.0
    assert len(estimate.values) == len(mte_index(2, 2))


def test_mte_unselected_pair_is_zero(d4):
    estimate = mte_unordered(d4, PairSet((), UPPER), COMPLIERS)
    assert not estimate.values.any()


def test_non_lonesum_pair_is_noted(d4):
    estimate = mte_unordered(d4, [PairId(0, 1)], [[0, 1], [1, 0]])
    assert not estimate.values.any()
    assert len(estimate.notes) == 1
    assert 'not lonesum' in estimate.notes[0]


def test_response_matrix_must_cover_instrument_values(d4):
    with pytest.raises(SchemaError):
        mte_unordered(d4, [PairId(0, 1)], [[0, 1], [0, 1], [1, 1]])


def test_unordered_design_recovers_latent_effects():
    dataset, latent = draw(DgpSpec('unordered', n=60000, seed=8))
    selected = PairSet.universe(3, UPPER)
    estimate = mte_unordered(dataset, selected, latent.response_matrix)
    for pair, key, expected in ((PairId(0, 1), (1, 0, 1, 1), 1.0), (PairId(1, 2), (2, 0, 1, 1), 2.0)):
        truth = oracle_truth(latent, pair)
        assert truth.valid
        assert truth.effects[key] == pytest.approx(expected, abs=0.05)
        assert estimate.value(pair, *key) == pytest.approx(truth.effects[key], abs=0.25)
