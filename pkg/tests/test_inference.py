import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from mveval.augment import PRESETS, Preset, no_op_setup
from mveval.core_model import Dataset, ImageRef
from mveval.errors import ConfigError, EmptyList, InsufficientRealViews, InvalidRaster
from mveval.inference import MethodKind, MethodSpec, aggregate_mean, predict
from mveval.scorer import BuiltinScorer, ScoreTable, ScoreTableScorer
from tests.create_dummy_data.dummy_lesions import create_dummy_dataset, create_dummy_rasters

probabilities = st.floats(0.0, 1.0, allow_nan=False)


def _table_scorer(*scores):
    return ScoreTableScorer(ScoreTable({('L1', i): s for i, s in enumerate(scores)}))


def _refs(n):
    return [ImageRef('L1', i) for i in range(n)]


@pytest.mark.parametrize('scores, expected', [
    ([0.3], 0.3),
    ([0.2, 0.4, 0.6], 0.4),
    ([0.0, 1.0], 0.5),
])
def test_aggregate_mean(scores, expected):
    assert aggregate_mean(scores) == pytest.approx(expected, abs=1e-15)


def test_aggregate_mean_empty():
    with pytest.raises(EmptyList):
        aggregate_mean([])


@given(value=probabilities, n=st.integers(1, 10))
def test_aggregate_of_identical_scores_is_exact(value, n):
    assert aggregate_mean([value] * n) == value


@given(scores=st.lists(probabilities, min_size=1, max_size=8), data=st.data())
def test_aggregate_is_order_free(scores, data):
    permuted = data.draw(st.permutations(scores))
    assert aggregate_mean(permuted) == aggregate_mean(scores)


def test_single_view_passes_score_through():
    refs = _refs(3)
    assert predict(MethodSpec.single_view(), refs[0], refs[1:], _table_scorer(0.7, 0.1, 0.1)) == 0.7


def test_mv_real_mean():
    refs = _refs(3)
    prediction = predict(MethodSpec.mv_real(2), refs[0], refs[1:], _table_scorer(0.9, 0.6, 0.6))
    assert prediction == pytest.approx(0.7, abs=1e-15)


def test_mv_real_takes_first_set_aside_images():
    refs = _refs(4)
    prediction = predict(MethodSpec.mv_real(1), refs[0], refs[1:], _table_scorer(0.2, 0.4, 1.0, 1.0))
    assert prediction == pytest.approx(0.3)


def test_mv_real_with_copies_equals_single_view():
    refs = _refs(6)
    scorer = _table_scorer(*([0.37] * 6))
    single = predict(MethodSpec.single_view(), refs[0], refs[1:], scorer)
    assert predict(MethodSpec.mv_real(5), refs[0], refs[1:], scorer) == single


def test_mv_real_needs_enough_images():
    refs = _refs(3)
    with pytest.raises(InsufficientRealViews):
        predict(MethodSpec.mv_real(5), refs[0], refs[1:], _table_scorer(0.1, 0.2, 0.3))


@given(scores=st.lists(probabilities, min_size=4, max_size=4))
def test_class_symmetry(scores):
    refs = _refs(4)
    method = MethodSpec.mv_real(3)
    p = predict(method, refs[0], refs[1:], _table_scorer(*scores))
    flipped = predict(method, refs[0], refs[1:], _table_scorer(*[1.0 - s for s in scores]))
    assert flipped == pytest.approx(1.0 - p, abs=1e-12)


@given(scores=st.lists(probabilities, min_size=4, max_size=4), data=st.data())
def test_mv_real_permutation_invariant(scores, data):
    refs = _refs(4)
    permuted = data.draw(st.permutations(refs[1:]))
    scorer = _table_scorer(*scores)
    method = MethodSpec.mv_real(3)
    assert predict(method, refs[0], permuted, scorer) == predict(method, refs[0], refs[1:], scorer)


def _raster_dataset() -> Dataset:
    dataset = create_dummy_dataset(2, 6)
    return dataset.with_rasters(create_dummy_rasters(dataset, size=6))


@given(n_extra=st.integers(0, 8), seed=st.integers(0, 1000))
def test_mv_artificial_without_augmentation_equals_single_view(n_extra, seed):
    dataset = _raster_dataset()
    record = dataset['L00']
    scorer = BuiltinScorer()
    single = predict(MethodSpec.single_view(), record.images[0], [], scorer, dataset=dataset)
    method = MethodSpec.mv_artificial(no_op_setup(), n_extra)
    assert predict(method, record.images[0], [], scorer, np.random.default_rng(seed), dataset) == single


def test_mv_artificial_is_deterministic():
    dataset = _raster_dataset()
    record = dataset['L01']
    method = MethodSpec.mv_artificial(PRESETS[Preset.EXTREME], 5)
    first = predict(method, record.images[0], [], BuiltinScorer(), np.random.default_rng(3), dataset)
    second = predict(method, record.images[0], [], BuiltinScorer(), np.random.default_rng(3), dataset)
    assert first == second
    assert 0.0 <= first <= 1.0


def test_mv_artificial_needs_a_raster():
    refs = _refs(1)
    with pytest.raises(InvalidRaster):
        predict(MethodSpec.mv_artificial(), refs[0], [], _table_scorer(0.5), np.random.default_rng(0))


def test_method_spec():
    assert MethodSpec.single_view().name == 'single_view'
    assert MethodSpec.mv_artificial().name == 'mv_artificial[mild,5]'
    assert MethodSpec.mv_real(3).name == 'mv_real[3]'
    assert MethodSpec.mv_real().display_name == 'MV-Real'
    assert MethodSpec.single_view().with_n_extra(2) == MethodSpec.single_view()
    with pytest.raises(ConfigError):
        MethodSpec(MethodKind.SINGLE_VIEW, n_extra=1)
    with pytest.raises(ConfigError):
        MethodSpec.from_json({'kind': 'tta'})


@pytest.mark.parametrize('method', [
    MethodSpec.single_view(),
    MethodSpec.mv_real(2),
    MethodSpec.mv_artificial(PRESETS[Preset.SEVERE], 3),
    MethodSpec.mv_artificial(no_op_setup(), 4),
])
def test_method_spec_json(method):
    assert MethodSpec.from_json(method.to_json()) == method
