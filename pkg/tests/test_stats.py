import itertools

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st
from scipy.stats import rankdata

from mveval.errors import DegenerateClassDistribution, EmptySamples, MetricError, PairingError
from mveval.metrics import ScoredArrays, auroc
from mveval.stats import BootstrapResult, ResamplePlan, bonferroni_threshold, bootstrap_metric, \
    compare_bootstraps, identity_plan, make_resample_plan, percentile_ci, wilcoxon_signed_rank
from mveval.synth import SynthSpec, generate
from tests.create_dummy_data.dummy_lesions import create_dummy_dataset, create_dummy_scores


def _enumerated_p_value(diffs):
    """ two-sided p from all 2^n sign assignments of the ranked |d| """
    diffs = np.asarray([d for d in diffs if d != 0], dtype=float)
    if diffs.size == 0:
        return 1.0
    ranks = rankdata(np.abs(diffs))
    observed = ranks[diffs > 0].sum()
    totals = [sum(r for r, s in zip(ranks, signs) if s)
              for signs in itertools.product([False, True], repeat=len(ranks))]
    upper = np.mean([t >= observed - 1e-9 for t in totals])
    lower = np.mean([t <= observed + 1e-9 for t in totals])
    return min(1.0, 2.0 * min(upper, lower))


def test_resample_plan_shape():
    plan = make_resample_plan(656, 1000, np.random.default_rng(0))
    assert plan.indices.shape == (1000, 656)
    assert plan.n_iter == 1000 and plan.n_lesions == 656


def test_single_lesion_plan():
    plan = make_resample_plan(1, 20, np.random.default_rng(0))
    assert (plan.indices == 0).all()


def test_stratified_plan_keeps_class_counts():
    labels = [True, True, False]
    plan = make_resample_plan(3, 200, np.random.default_rng(0), stratify_labels=labels)
    positive = np.asarray(labels)[plan.indices]
    assert (positive.sum(axis=1) == 2).all()
    with pytest.raises(DegenerateClassDistribution):
        make_resample_plan(2, 5, np.random.default_rng(0), stratify_labels=[True, True])


def test_plans_are_reproducible():
    first = make_resample_plan(50, 30, np.random.default_rng(5), stratify_labels=[i % 3 == 0 for i in range(50)])
    second = make_resample_plan(50, 30, np.random.default_rng(5), stratify_labels=[i % 3 == 0 for i in range(50)])
    assert np.array_equal(first.indices, second.indices)


def test_percentile_ci():
    assert percentile_ci([0.3] * 10) == (0.3, 0.3)
    assert percentile_ci(np.arange(101.0), 0.95) == pytest.approx((2.5, 97.5))
    assert percentile_ci([4.0, 1.0, 3.0], 1.0) == (1.0, 4.0)
    with pytest.raises(EmptySamples):
        percentile_ci([])


@given(samples=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40), extra=st.floats(0, 1e3))
def test_percentile_ci_monotone(samples, extra):
    _, high = percentile_ci(samples)
    _, new_high = percentile_ci(samples + [high + extra])
    assert new_high >= high - 1e-9


def test_constant_metric_bootstrap():
    plan = make_resample_plan(10, 50, np.random.default_rng(1))
    result = bootstrap_metric(list(range(10)), lambda _: 0.9, plan, 'const')
    assert result.point == pytest.approx(0.9)
    assert result.ci == pytest.approx((0.9, 0.9))


def test_identity_plan_bootstrap():
    dataset = create_dummy_dataset(10, 1)
    table = create_dummy_scores(dataset)
    scored = ScoredArrays(dataset.positive_mask,
                          np.array([table.lookup(r.images[0]) for r in dataset]))
    result = bootstrap_metric(scored, auroc, identity_plan(10), 'auroc')
    assert result.samples.tolist() == [auroc(scored)]


def test_bootstrap_pairing_and_errors():
    plan = make_resample_plan(4, 10, np.random.default_rng(2))
    with pytest.raises(PairingError):
        bootstrap_metric([1, 2, 3], sum, plan)
    scored = ScoredArrays(np.array([True, False, True, False]), np.array([0.9, 0.8, 0.2, 0.1]))
    positives_only = ResamplePlan('p', np.array([[0, 1, 2, 3], [0, 2, 0, 2]]), stratified=False)
    with pytest.raises(MetricError) as e:
        bootstrap_metric(scored, auroc, positives_only, 'auroc')
    assert isinstance(e.value.cause, DegenerateClassDistribution)


def test_bootstrap_is_independent_of_workers():
    dataset = create_dummy_dataset(30, 1)
    table = create_dummy_scores(dataset, random_seed=3)
    scored = ScoredArrays(dataset.positive_mask,
                          np.array([table.lookup(r.images[0]) for r in dataset]))
    plan = make_resample_plan(30, 200, np.random.default_rng(4), stratify_labels=dataset.positive_mask)
    serial = bootstrap_metric(scored, auroc, plan, 'auroc', workers=1)
    parallel = bootstrap_metric(scored, auroc, plan, 'auroc', workers=4)
    assert np.array_equal(serial.samples, parallel.samples)
    assert serial.ci == parallel.ci


@pytest.mark.slow
def test_auroc_interval_coverage():
    spec = SynthSpec(n_lesions=300, k=1, noise_sigma=0.15, n_monte_carlo=200_000)
    covered = 0
    for trial in range(100):
        synth = generate(spec, np.random.default_rng(trial))
        scores = synth.ground_truth.view_scores[:, 0]
        scored = ScoredArrays(synth.dataset.positive_mask, scores)
        plan = make_resample_plan(len(scores), 1000, np.random.default_rng(10_000 + trial))
        result = bootstrap_metric(scored, auroc, plan, 'auroc')
        covered += result.ci_low <= synth.ground_truth.population_auroc <= result.ci_high
    assert covered >= 90


def test_wilcoxon_examples():
    assert wilcoxon_signed_rank([1, 2, 3, 4, 5], [0] * 5).p_value == pytest.approx(0.0625)
    same = wilcoxon_signed_rank([0.3, 0.4], [0.3, 0.4])
    assert same.all_zero and same.p_value == 1.0
    assert wilcoxon_signed_rank([1, 0], [0, 1]).p_value == pytest.approx(1.0)


@given(diffs=st.lists(st.integers(-6, 6), min_size=1, max_size=10))
def test_exact_wilcoxon_matches_enumeration(diffs):
    result = wilcoxon_signed_rank(diffs, [0] * len(diffs))
    assert result.p_value == pytest.approx(_enumerated_p_value(diffs), abs=1e-12)


def test_wilcoxon_normal_approximation():
    rng = np.random.default_rng(8)
    a = rng.normal(0.1, 1.0, 200)
    result = wilcoxon_signed_rank(a, np.zeros(200))
    assert not result.exact
    assert 0.0 < result.p_value < 1.0


def test_wilcoxon_needs_pairs():
    with pytest.raises(PairingError):
        wilcoxon_signed_rank([1, 2], [1])


@pytest.mark.parametrize('alpha, m, expected', [(0.05, 2, 0.025), (0.05, 1, 0.05), (0.01, 4, 0.0025)])
def test_bonferroni(alpha, m, expected):
    assert bonferroni_threshold(alpha, m) == pytest.approx(expected)


def test_comparison_needs_one_plan():
    a = BootstrapResult('auroc', 0.8, 0.7, 0.9, np.array([0.8, 0.9]), 'repeat-1')
    b = BootstrapResult('auroc', 0.7, 0.6, 0.8, np.array([0.7, 0.6]), 'repeat-2')
    with pytest.raises(PairingError):
        compare_bootstraps('a', a, 'b', b, 0.025)
    comparison = compare_bootstraps('a', a, 'b', BootstrapResult('auroc', 0.7, 0.6, 0.8,
                                                               np.array([0.7, 0.6]), 'repeat-1'), 0.025)
    assert comparison.p_value == pytest.approx(0.5)
    assert not comparison.significant


def test_bootstrap_result_json():
    result = BootstrapResult('ece', 0.1, 0.05, 0.2, np.array([0.05, 0.1, 0.2]), 'p')
    assert BootstrapResult.from_json(result.to_json()).samples.tolist() == [0.05, 0.1, 0.2]

