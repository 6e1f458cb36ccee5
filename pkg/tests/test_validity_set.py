import pytest

from src.analysis.simulate import draw, draw_components
from src.analysis.validity_set import (
    KMS_AND_KM, KMS_ONLY, enumerate_subinstruments, estimate_z0, infer_mode, intersect_presumed,
    recommend_tau, tune_tau,
)
from src.config import RunConfig
from src.errors import ArgumentError, GuardError, UnsupportedModeError
from src.models.dataset import PairId, PairSet
from src.models.simulation import DgpSpec
from tests.conftest import random_dataset


def test_d4_selection_at_four(d4):
    estimate = estimate_z0(d4, 4.0)
    assert set(estimate.selected) == {PairId(0, 1), PairId(1, 0)}
    assert estimate.sources == KMS_ONLY
    assert estimate.per_pair[PairId(0, 1)].statistic == 0.0


def test_d4_selection_at_one(d4):
    estimate = estimate_z0(d4, 1.0)
    assert list(estimate.selected) == [PairId(0, 1)]


def test_selection_monotone_in_tau(make_dataset):
    dataset = make_dataset(11, n=120, K=4)
    previous = set()
    for tau in (0.5, 1.0, 2.0, 4.0, 8.0):
        current = set(estimate_z0(dataset, tau).selected)
        assert previous <= current
        previous = current


def test_rejects_nonpositive_tau(d4):
    with pytest.raises(ArgumentError):
        estimate_z0(d4, 0.0)


def test_ordered_mode_uses_psi_screen(make_dataset):
    dataset = make_dataset(1, J=3)
    estimate = estimate_z0(dataset, 4.0)
    assert estimate.mode == 'ordered'
    assert estimate.sources == KMS_AND_KM
    screen = estimate.per_pair[PairId(0, 1)]
    assert screen.psi is not None
    assert screen.included == (screen.statistic <= 4.0 and screen.psi.passes)


def test_config_and_overrides(make_dataset):
    dataset = make_dataset(2)
    config = RunConfig(variant='pos-part', tau=3.0)
    estimate = estimate_z0(dataset, 3.0, config)
    assert all(s.sup.variant == 'pos-part' for s in estimate.per_pair.values())
    estimate = estimate_z0(dataset, 3.0, config, variant='abs-sup')
    assert all(s.sup.variant == 'abs-sup' for s in estimate.per_pair.values())


def test_parallel_pairs_match_serial(make_dataset):
    dataset = make_dataset(3, K=4)
    serial = estimate_z0(dataset, 2.0, n_jobs=1)
    threaded = estimate_z0(dataset, 2.0, n_jobs=2)
    assert [s.statistic for s in serial.per_pair.values()] == [s.statistic for s in threaded.per_pair.values()]


def test_intersect_presumed(d4):
    estimate = estimate_z0(d4, 4.0)
    assert list(intersect_presumed(estimate, [(1, 0)])) == [PairId(1, 0)]
    assert len(intersect_presumed(estimate, PairSet())) == 0


def test_infer_mode(d4):
    assert infer_mode(d4) == 'binary'
    assert infer_mode(random_dataset(0, J=3)) == 'ordered'
    assert infer_mode(random_dataset(0, J=3, ordered=False)) == 'unordered'


def test_section5_design_rejects_the_contaminated_value():
    dataset, _ = draw(DgpSpec('section5', 3, n=3000, seed=5))
    estimate = estimate_z0(dataset, 4.0)
    assert all(0 not in (p.k, p.kprime) for p in estimate.selected)
    assert estimate.per_pair[PairId(1, 2)].statistic < estimate.per_pair[PairId(0, 1)].statistic


def test_subinstruments_find_the_excluded_component():
    spec = DgpSpec('confounded_components', n=4000, seed=1, params={'shift': 0.5, 'direct': 2.0})
    table = draw_components(spec)
    results = enumerate_subinstruments(table, 5.0)
    by_name = {names: estimate for names, _, estimate in results}
    assert set(by_name) == {('z1',), ('z2',), ('z1', 'z2')}
    assert len(by_name[('z2',)].selected) == 2
    assert len(by_name[('z1',)].selected) == 0


def test_subinstrument_guard():
    table = draw_components(DgpSpec('confounded_components', n=50))
    with pytest.raises(GuardError):
        enumerate_subinstruments(table, 4.0, max_components=1)


def test_tune_tau_needs_binary(make_dataset):
    with pytest.raises(UnsupportedModeError):
        tune_tau(make_dataset(0, J=3), [4.0], reps=2, seed=0)


def test_tune_tau_small_run():
    dataset, _ = draw(DgpSpec('qob_calibrated', 1, n=400, seed=2))
    report = tune_tau(dataset, [2.0, 8.0], reps=4, seed=1, n=400, endpoint_m=50)
    assert report.counts.shape == (4, 2, 6)
    assert report.recommendation in (None, 2.0, 8.0)
    assert recommend_tau(report, 0.0) == 2.0
