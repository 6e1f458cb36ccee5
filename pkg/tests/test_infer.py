import numpy as np
import pytest

from src.analysis.estimate import beta_vector
from src.analysis.infer import chi2_quantile, parse_hypothesis, wald_test
from src.analysis.simulate import draw
from src.errors import ArgumentError, InferenceError
from src.models.dataset import Dataset, PairId, PairSet
from src.models.estimation import Hypothesis
from src.models.simulation import DgpSpec


@pytest.fixture
def estimate():
    spec = DgpSpec('custom', n=2000, seed=4, params={'z_probs': [0.4, 0.3, 0.3], 'd_probs': [0.3, 0.5, 0.8],
                                                     'effect': 1.0})
    dataset, _ = draw(spec)
    return beta_vector(dataset, PairSet.universe(3))


def test_chi2_quantiles():
    assert chi2_quantile(1, 0.05) == pytest.approx(3.84145882, abs=1e-6)
    assert chi2_quantile(2, 0.05) == pytest.approx(5.99146455, abs=1e-6)
    with pytest.raises(ArgumentError):
        chi2_quantile(0, 0.05)
    with pytest.raises(ArgumentError):
        chi2_quantile(1, 1.0)


def test_single_pair_statistic_is_squared_t_ratio(estimate):
    i = estimate.index_of(PairId(0, 2))
    result = wald_test(estimate, Hypothesis([PairId(0, 2)], [[1.0]], [1.0]))
    t_ratio = (estimate.beta[i] - 1.0) / estimate.standard_errors()[i]
    assert result.ts1 == 1
    assert result.ts2 == pytest.approx(t_ratio ** 2, rel=1e-9)
    assert result.r == 1
    assert result.reject == (result.ts2 > 3.84145882)


def test_unselected_pair_rejects_outright(d4):
    estimate = beta_vector(d4, [PairId(0, 1)])
    result = wald_test(estimate, Hypothesis([PairId(1, 0)], [[1.0]]))
    assert result.ts1 == 0
    assert result.ts2 == 0.0
    assert result.reject


def test_equal_effects_hypothesis(estimate):
    hyp = Hypothesis([PairId(0, 1), PairId(1, 2)], [[1.0, -1.0]])
    result = wald_test(estimate, hyp, alpha=0.01)
    assert result.critical == pytest.approx(chi2_quantile(1, 0.01))
    assert result.ts2 >= 0.0


def test_nonlinear_restriction(estimate):
    hyp = Hypothesis([PairId(0, 1), PairId(0, 2)],
                     evaluator=lambda b: [b[0] * b[1] - 1.0],
                     jacobian=lambda b: [[b[1], b[0]]])
    result = wald_test(estimate, hyp)
    assert result.r == 1
    assert np.isfinite(result.ts2)


def test_singular_covariance():
    dataset = Dataset([1.0, 2.0, 3.0, 4.0], [0, 1, 0, 1], [0, 0, 1, 1], (0, 1), (0, 1))
    estimate = beta_vector(dataset, [PairId(0, 1)])
    with pytest.raises(InferenceError):
        wald_test(estimate, Hypothesis([PairId(0, 1)], [[1.0]]))


def test_hypothesis_shape_checks():
    with pytest.raises(ArgumentError):
        Hypothesis([PairId(0, 1)], [[1.0, 1.0]])
    with pytest.raises(ArgumentError):
        Hypothesis([PairId(0, 1), PairId(1, 0)], [[1.0, 1.0], [2.0, 2.0]])
    with pytest.raises(ArgumentError):
        Hypothesis([PairId(0, 1)], evaluator=lambda b: b)


def test_parse_hypothesis(d4):
    hyp = parse_hypothesis(['z1:z2', 'z2:z1'], d4, A='1,-1', b='0')
    assert hyp.pairs == [PairId(0, 1), PairId(1, 0)]
    assert hyp.A.tolist() == [[1.0, -1.0]]
    assert parse_hypothesis(['z2:z1'], d4).A.tolist() == [[1.0]]


def test_parse_hypothesis_errors(d4):
    with pytest.raises(ArgumentError):
        parse_hypothesis([], d4)
    with pytest.raises(ArgumentError):
        parse_hypothesis(['z1-z2'], d4)
    with pytest.raises(ArgumentError):
        parse_hypothesis(['z1:z3'], d4)
    with pytest.raises(ArgumentError):
        parse_hypothesis(['z1:z2', 'z2:z1'], d4, A='1,0;1')
    with pytest.raises(ArgumentError):
        parse_hypothesis(['z1:z2'], d4, A='x')


def test_statistic_invariant_to_restriction_basis(estimate):
    pairs = [PairId(0, 1), PairId(0, 2)]
    A = np.array([[1.0, -1.0], [1.0, 1.0]])
    b = np.array([0.0, 2.0])
    M = np.array([[2.0, 1.0], [-0.5, 3.0]])
    base = wald_test(estimate, Hypothesis(pairs, A, b))
    rotated = wald_test(estimate, Hypothesis(pairs, M @ A, M @ b))
    assert rotated.r == base.r == 2
    assert rotated.ts2 == pytest.approx(base.ts2, rel=1e-8)
    assert rotated.reject == base.reject
