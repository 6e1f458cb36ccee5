"""
Monte Carlo selection frequencies of the reference designs and the
finite-sample behaviour of the Wald test. Run with `pytest -m slow`.
"""

import numpy as np
import pytest

from src.analysis.estimate import beta_vector
from src.analysis.infer import wald_test
from src.analysis.simulate import draw, mc_selection_table, oracle_truth
from src.analysis.unordered_id import mte_unordered
from src.analysis.validity_set import estimate_z0
from src.models.dataset import PairId, PairSet, UPPER
from src.models.estimation import Hypothesis
from src.models.simulation import DgpSpec
from src.utils.rng import stream

pytestmark = pytest.mark.slow

REPS = 1000
VALID_DESIGN = {'z_probs': [0.5, 0.5], 'd_probs': [0.3, 0.7], 'effect': 1.0}


def _frequencies(report, dgp, tau):
    return [report.frequency(dgp, tau, label) for label in report.pair_labels]


def test_section5_first_design():
    report = mc_selection_table([DgpSpec('section5', 1, n=1500)], reps=REPS, tau_grid=(3.0, 3.5, 4.0),
                                master_seed=7, n_jobs=-1)
    expected = {3.0: [0.000, 0.001, 0.209], 3.5: [0.000, 0.002, 0.754], 4.0: [0.010, 0.012, 0.970]}
    for tau, values in expected.items():
        assert _frequencies(report, 'section5:1', tau) == pytest.approx(values, abs=0.045)


def test_section5_second_and_fourth_designs():
    specs = [DgpSpec('section5', 2, n=3000), DgpSpec('section5', 4, n=3000)]
    report = mc_selection_table(specs, reps=REPS, tau_grid=(4.0,), master_seed=7, n_jobs=-1)
    assert _frequencies(report, 'section5:2', 4.0) == pytest.approx([0.000, 0.000, 0.933], abs=0.04)
    assert _frequencies(report, 'section5:4', 4.0) == pytest.approx([0.009, 0.014, 0.927], abs=0.04)


def test_calibrated_application_design():
    report = mc_selection_table([DgpSpec('qob_calibrated', 1, n=1500)], reps=REPS, tau_grid=(4.0,),
                                master_seed=7, endpoint_m=200, n_jobs=-1)
    expected = [0.000, 0.991, 0.997, 0.000, 0.001, 0.993]
    assert _frequencies(report, 'qob_calibrated:1', 4.0) == pytest.approx(expected, abs=0.03)


def _valid_draws(n=3000):
    spec = DgpSpec('custom', n=n, params=VALID_DESIGN)
    for rep in range(REPS):
        yield draw(spec, seed=stream(11, rep))[0]


def test_wald_size_and_standard_errors():
    pair = PairId(0, 1)
    rejections, betas, ses = 0, [], []
    for dataset in _valid_draws():
        late = beta_vector(dataset, estimate_z0(dataset, 4.0).selected)
        i = late.index_of(pair)
        rejections += wald_test(late, Hypothesis([pair], [[1.0]], [1.0])).reject
        betas.append(late.beta[i])
        ses.append(late.standard_errors()[i])
    assert 0.03 <= rejections / REPS <= 0.07
    sd = np.std(betas, ddof=1)
    assert abs(np.mean(ses) - sd) <= 0.15 * sd


def test_wald_rejects_unselected_pair():
    spec = DgpSpec('section5', 1, n=3000)
    pair = PairId(0, 1)
    rejections = 0
    for rep in range(REPS):
        dataset, _ = draw(spec, seed=stream(13, rep))
        late = beta_vector(dataset, estimate_z0(dataset, 4.0).selected)
        rejections += wald_test(late, Hypothesis([pair], [[1.0]])).reject
    assert rejections / REPS >= 0.99


def test_unordered_counterfactuals_match_latent_truth():
    spec = DgpSpec('unordered', n=3000)
    selected = PairSet.universe(3, UPPER)
    keys = ((PairId(0, 1), (1, 0, 1, 1)), (PairId(1, 2), (2, 0, 1, 1)))
    estimates = {key: [] for key in keys}
    truths = {key: [] for key in keys}
    for rep in range(200):
        dataset, latent = draw(spec, seed=stream(17, rep))
        mte = mte_unordered(dataset, selected, latent.response_matrix)
        for pair, key in keys:
            estimates[(pair, key)].append(mte.value(pair, *key))
            truths[(pair, key)].append(oracle_truth(latent, pair).effects[key])
    for entry, values in estimates.items():
        se = np.std(values, ddof=1) / np.sqrt(len(values))
        assert abs(np.mean(values) - np.mean(truths[entry])) <= 3 * se
