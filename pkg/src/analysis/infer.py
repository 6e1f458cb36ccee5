"""
Two-part Wald test on functions of the selected pairwise effects.
"""

import logging

import numpy as np
from scipy.stats import chi2

from src.errors import ArgumentError, InferenceError
from src.models.dataset import PairId
from src.models.estimation import Hypothesis, TestResult

logger = logging.getLogger(__name__)


def chi2_quantile(r, alpha):
    """Upper-α quantile c_r(α) of χ²_r: ℙ(χ²_r > c_r(α)) = α."""
    if int(r) != r or r < 1:
        raise ArgumentError(f"degrees of freedom must be a positive integer, got {r}")
    if not 0 < alpha < 1:
        raise ArgumentError(f"alpha must lie strictly between 0 and 1, got {alpha}")
    return float(chi2.isf(alpha, int(r)))


def wald_test(estimate, hyp, alpha=0.05):
    """
    TS₁ = ∏_s 1{pair_s ∈ Ẑ₀}; TS₂ = n·Rᵀ[R′ 𝓘_S Σ̂ 𝓘_Sᵀ R′ᵀ]⁻¹R.

    Reject when TS₁ = 0 or TS₂ exceeds the χ²_r critical value.
    """
    if not 0 < alpha < 1:
        raise ArgumentError(f"alpha must lie strictly between 0 and 1, got {alpha}")
    index = [estimate.index_of(pair) for pair in hyp.pairs]
    beta_s = estimate.beta[index]
    ts1 = int(all(pair in estimate.selected for pair in hyp.pairs))

    R = hyp.restriction(beta_s)
    R_prime = hyp.restriction_jacobian(beta_s)
    r = R.shape[0]
    if R_prime.shape != (r, len(index)):
        raise ArgumentError(f"Jacobian has shape {R_prime.shape}, expected {(r, len(index))}")
    critical = chi2_quantile(r, alpha)

    if not ts1:
        logger.info('Hypothesis names an unselected pair; rejected by the selection part')
        return TestResult(0, 0.0, critical, alpha, r)

    sigma_s = estimate.sigma[np.ix_(index, index)]
    inner = R_prime @ sigma_s @ R_prime.T
    rank = np.linalg.matrix_rank(inner, tol=1e-10 * max(1.0, float(np.abs(inner).max())))
    if rank < r:
        raise InferenceError(f"Wald covariance has rank {rank} < {r}; the restriction is not testable")
    ts2 = float(estimate.n * R @ np.linalg.solve(inner, R))
    ts2 = max(ts2, 0.0)
    logger.info(f"Wald test: TS2={ts2:.4f}, critical={critical:.4f} (r={r}, alpha={alpha})")
    return TestResult(ts1, ts2, critical, alpha, r)


def _numbers(text, what):
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise ArgumentError(f"{what} must be comma-separated numbers, got {text!r}")


def parse_hypothesis(pairs, dataset, A=None, b=None):
    """
    Linear hypothesis from text.

    Args:
        pairs (list): `z:z'` instrument label pairs, e.g. ['1:3', '3:4']
        dataset (Dataset): supplies the instrument support
        A (str): rows separated by `;`, entries by `,`; identity when omitted
        b (str): comma-separated right-hand side; zeros when omitted

    Returns:
        Hypothesis
    """
    if not pairs:
        raise ArgumentError('name at least one pair as z:z\'')
    support = [str(v) for v in dataset.instrument_support]
    ids = []
    for text in pairs:
        left, sep, right = str(text).partition(':')
        if not sep or left.strip() not in support or right.strip() not in support:
            raise ArgumentError(f"pair {text!r} must be z:z' with z, z' in {support}")
        ids.append(PairId(support.index(left.strip()), support.index(right.strip())))
    if A is None:
        matrix = np.eye(len(ids))
    else:
        rows = [_numbers(row, 'A') for row in A.split(';')]
        if len({len(row) for row in rows}) != 1:
            raise ArgumentError('A rows must all have the same length')
        matrix = np.array(rows)
    rhs = None if b is None else np.array(_numbers(b, 'b'))
    return Hypothesis(ids, matrix, rhs)
