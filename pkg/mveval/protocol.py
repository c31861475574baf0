"""
Experiment choreography: downsampling to one original image per lesion,
robustness series, method evaluation, repeated replication and the sweeps.

Every random draw comes from a named stream derived from the master seed,
e.g. ('repeat', 2, 'downsample', lesion_id), so results do not depend on
worker count, scheduling, or on which other quantities were computed.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from mveval import __version__
from mveval.augment import PRESETS, Preset
from mveval.core_model import Dataset, LesionRecord, SplitAssignment, validate_dataset
from mveval.errors import ConfigError, InsufficientRealViews, MvEvalError, \
    NonDivisibleSeriesLength, StageError
from mveval.inference import MethodKind, MethodSpec, predict
from mveval.metrics import ScoredArrays, ScoredLesion, SeriesArrays, auroc, ece, mcc, \
    reliability_bins
from mveval.report import AUROC, ECE, ExperimentReport, RepeatResult, SweepResult, SweepRow, \
    mcc_key, metric_keys
from mveval.scorer import CachedScorer, Scorer
from mveval.stats import BootstrapResult, ComparisonResult, ResamplePlan, bonferroni_threshold, \
    bootstrap_metric, compare_bootstraps, make_resample_plan
from mveval.utils import RandomStreams

logger = logging.getLogger('mveval')

T = TypeVar('T')
R = TypeVar('R')

DEFAULT_SEED = 20230601


def default_methods() -> Tuple[MethodSpec, ...]:
    return MethodSpec.single_view(), MethodSpec.mv_artificial(), MethodSpec.mv_real()


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = DEFAULT_SEED
    n_bootstrap: int = 1000
    n_repeats: int = 5
    alpha: float = 0.05
    bonferroni_m: int = 2
    ece_bins: int = 10
    series_lengths: Tuple[int, ...] = (2, 3)
    methods: Tuple[MethodSpec, ...] = field(default_factory=default_methods)
    sweep_n_extra: Tuple[int, ...] = (1, 2, 3, 4, 5)
    stratified: bool = True
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'series_lengths', tuple(self.series_lengths))
        object.__setattr__(self, 'methods', tuple(self.methods))
        object.__setattr__(self, 'sweep_n_extra', tuple(self.sweep_n_extra))
        problems = []
        if self.n_bootstrap < 1:
            problems.append(f'n_bootstrap must be >= 1, got {self.n_bootstrap}')
        if self.n_repeats < 1:
            problems.append(f'n_repeats must be >= 1, got {self.n_repeats}')
        if not 0.0 < self.alpha < 1.0:
            problems.append(f'alpha must lie in (0, 1), got {self.alpha}')
        if self.bonferroni_m < 1:
            problems.append(f'bonferroni_m must be >= 1, got {self.bonferroni_m}')
        if self.ece_bins < 1:
            problems.append(f'ece_bins must be >= 1, got {self.ece_bins}')
        if any(length < 2 for length in self.series_lengths):
            problems.append(f'series lengths must be >= 2, got {list(self.series_lengths)}')
        if len(set(self.series_lengths)) != len(self.series_lengths):
            problems.append(f'series lengths repeat: {list(self.series_lengths)}')
        if not self.methods:
            problems.append('at least one method is needed')
        names = [method.name for method in self.methods]
        if len(set(names)) != len(names):
            problems.append(f'method names repeat: {names}')
        if any(n < 0 for n in self.sweep_n_extra):
            problems.append(f'sweep n_extra values must be >= 0, got {list(self.sweep_n_extra)}')
        if self.workers < 1:
            problems.append(f'workers must be >= 1, got {self.workers}')
        if problems:
            raise ConfigError('; '.join(problems))

    @property
    def reference_method(self) -> Optional[MethodSpec]:
        """ the first MV-Real method; every other method is compared against it """
        return next((m for m in self.methods if m.kind == MethodKind.MV_REAL), None)

    def to_json(self, include_runtime: bool = False) -> Dict[str, Any]:
        """
        every field explicitly. workers only changes scheduling, so it is left
        out of report echoes unless include_runtime is set
        """
        data: Dict[str, Any] = {
            'seed': self.seed,
            'n_bootstrap': self.n_bootstrap,
            'n_repeats': self.n_repeats,
            'alpha': self.alpha,
            'bonferroni_m': self.bonferroni_m,
            'ece_bins': self.ece_bins,
            'series_lengths': list(self.series_lengths),
            'methods': [method.to_json() for method in self.methods],
            'sweep_n_extra': list(self.sweep_n_extra),
            'stratified': self.stratified,
        }
        if include_runtime:
            data['workers'] = self.workers
        return data

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f'unknown experiment settings: {sorted(unknown)}')
        kwargs = dict(data)
        if 'methods' in kwargs:
            kwargs['methods'] = tuple(MethodSpec.from_json(m) for m in kwargs['methods'])
        for key in ('series_lengths', 'sweep_n_extra'):
            if key in kwargs:
                kwargs[key] = tuple(int(v) for v in kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class RobustnessSeries:
    lesion_id: str
    bundles: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, 'bundles', tuple(tuple(b) for b in self.bundles))

    @property
    def length(self) -> int:
        return len(self.bundles)

    @property
    def bundle_size(self) -> int:
        return len(self.bundles[0])


def _ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def downsample(record: LesionRecord, rng: np.random.Generator) -> SplitAssignment:
    """ one uniformly drawn original image; the rest are set aside in index order """
    original = int(rng.integers(record.k))
    return SplitAssignment(record.lesion_id, original,
                           tuple(i for i in range(record.k) if i != original))


def downsample_dataset(dataset: Dataset, streams: RandomStreams) -> List[SplitAssignment]:
    return [downsample(record, streams.rng('downsample', record.lesion_id)) for record in dataset]


def build_robustness_series(assignment: SplitAssignment,
                            series_length: int,
                            rng: np.random.Generator) -> RobustnessSeries:
    """
    all k images of the lesion shuffled, then cut into series_length
    consecutive bundles of k / series_length images
    """
    indices = sorted(assignment.all_indices)
    k = len(indices)
    if series_length < 1 or k % series_length != 0:
        raise NonDivisibleSeriesLength(
            f'series length {series_length} does not divide the {k} images of '
            f'lesion {assignment.lesion_id!r}')
    shuffled = [int(i) for i in rng.permutation(indices)]
    size = k // series_length
    return RobustnessSeries(assignment.lesion_id,
                            tuple(tuple(shuffled[b * size:(b + 1) * size])
                                  for b in range(series_length)))


def method_for_bundle(method: MethodSpec, bundle_size: int) -> MethodSpec:
    """ MV methods use the bundle's first image plus bundle_size - 1 further views """
    return method.with_n_extra(bundle_size - 1)


def evaluate_method(method: MethodSpec,
                    assignments: Sequence[SplitAssignment],
                    dataset: Dataset,
                    scorer: Scorer,
                    streams: RandomStreams,
                    workers: int = 1) -> List[ScoredLesion]:
    """ one prediction per lesion, in assignment order """
    def _predict_lesion(assignment: SplitAssignment) -> ScoredLesion:
        record = dataset[assignment.lesion_id]
        original = record.images[assignment.original_index]
        extra_real = [record.images[i] for i in assignment.set_aside_indices]
        rng = streams.rng('mv_artificial', method.name, record.lesion_id) \
            if method.kind == MethodKind.MV_ARTIFICIAL else None
        prediction = predict(method, original, extra_real, scorer, rng=rng, dataset=dataset)
        return ScoredLesion(record.lesion_id, record.label, prediction)  # type: ignore[arg-type]

    return _ordered_map(_predict_lesion, assignments, workers)


def evaluate_robustness(method: MethodSpec,
                        series: Sequence[RobustnessSeries],
                        dataset: Dataset,
                        scorer: Scorer,
                        streams: RandomStreams,
                        workers: int = 1) -> SeriesArrays:
    """ one prediction per bundle: an (n_lesions, L) array for mcc """
    def _predict_series(lesion_series: RobustnessSeries) -> List[float]:
        record = dataset[lesion_series.lesion_id]
        predictions = []
        for b, bundle in enumerate(lesion_series.bundles):
            refs = [record.images[i] for i in bundle]
            bundle_method = method_for_bundle(method, len(bundle))
            rng = streams.rng('mv_artificial_series', method.name, lesion_series.length,
                              record.lesion_id, b) \
                if method.kind == MethodKind.MV_ARTIFICIAL else None
            predictions.append(predict(bundle_method, refs[0], refs[1:], scorer,
                                       rng=rng, dataset=dataset))
        return predictions

    values = _ordered_map(_predict_series, series, workers)
    return SeriesArrays(np.array(values, dtype=float))


def _check_dataset_shape(dataset: Dataset, series_lengths: Sequence[int],
                         n_extra_values: Sequence[int]) -> int:
    k = dataset.images_per_lesion
    if k is None:
        raise ConfigError('every lesion must have the same number of images')
    for length in series_lengths:
        if k % length != 0:
            raise NonDivisibleSeriesLength(f'series length {length} does not divide k = {k}')
    needed = list(n_extra_values)
    if needed and max(needed) > k - 1:
        raise InsufficientRealViews(f'{max(needed)} extra real images requested, '
                                    f'lesions have only {k - 1}')
    return k


def _warn_single_class_resamples(plan: ResamplePlan, positive: np.ndarray) -> None:
    resampled = positive[plan.indices]
    n_positive = resampled.sum(axis=1)
    single_class = int(np.sum((n_positive == 0) | (n_positive == plan.n_lesions)))
    if single_class:
        logger.warning(f'{single_class} of {plan.n_iter} unstratified resamples in plan '
                       f'{plan.plan_id!r} hold a single class')


def _resample_plan(config: ExperimentConfig, dataset: Dataset, streams: RandomStreams,
                   plan_id: str) -> ResamplePlan:
    positive = dataset.positive_mask
    plan = make_resample_plan(len(dataset), config.n_bootstrap, streams.rng('bootstrap'),
                              stratify_labels=positive if config.stratified else None,
                              plan_id=plan_id)
    if not config.stratified:
        _warn_single_class_resamples(plan, positive)
    return plan


def _bootstrap_scored(scored: ScoredArrays, plan: ResamplePlan,
                      config: ExperimentConfig) -> Dict[str, BootstrapResult]:
    return {
        AUROC: bootstrap_metric(scored, auroc, plan, AUROC, workers=config.workers),
        ECE: bootstrap_metric(scored, partial(ece, n_bins=config.ece_bins), plan, ECE,
                              workers=config.workers),
    }


def _comparison_plan(config: ExperimentConfig) -> Tuple[Optional[MethodSpec], List[MethodSpec], float]:
    reference = config.reference_method
    if reference is None:
        logger.warning('no MV-Real method configured, skipping comparisons')
        return None, [], bonferroni_threshold(config.alpha, config.bonferroni_m)
    others = [m for m in config.methods if m.name != reference.name]
    m = max(config.bonferroni_m, len(others))
    return reference, others, bonferroni_threshold(config.alpha, m)


def _run_repeat(config: ExperimentConfig, dataset: Dataset, scorer: Scorer, repeat: int,
                k: int) -> RepeatResult:
    streams = RandomStreams(config.seed).child('repeat', repeat)
    bundle_sizes = {length: k // length for length in config.series_lengths}
    keys = metric_keys(list(bundle_sizes.values()))
    reference, others, threshold = _comparison_plan(config)

    stage = 'downsample'
    try:
        assignments = downsample_dataset(dataset, streams)
        stage = 'resample plan'
        plan = _resample_plan(config, dataset, streams, plan_id=f'repeat-{repeat}')

        results: Dict[str, Dict[str, BootstrapResult]] = {key: {} for key in keys}
        reliability = {}
        for method in config.methods:
            stage = f'evaluate {method.name}'
            scored = ScoredArrays.from_items(
                evaluate_method(method, assignments, dataset, scorer, streams, config.workers))
            stage = f'bootstrap {method.name}'
            for metric, result in _bootstrap_scored(scored, plan, config).items():
                results[metric][method.name] = result
            reliability[method.name] = reliability_bins(scored, config.ece_bins)
            logger.debug(f'repeat {repeat}: {method.name} AUROC {results[AUROC][method.name].point:.3f}')

        for length, size in bundle_sizes.items():
            stage = f'robustness series L={length}'
            series = [build_robustness_series(a, length, streams.rng('series', length, a.lesion_id))
                      for a in assignments]
            for method in config.methods:
                stage = f'robustness {method.name} L={length}'
                values = evaluate_robustness(method, series, dataset, scorer, streams, config.workers)
                results[mcc_key(size)][method.name] = bootstrap_metric(
                    values, mcc, plan, mcc_key(size), workers=config.workers)

        stage = 'compare'
        comparisons: List[ComparisonResult] = []
        if reference is not None:
            comparisons = [compare_bootstraps(reference.name, results[key][reference.name],
                                              other.name, results[key][other.name], threshold)
                           for key in keys for other in others]
    except MvEvalError as e:
        raise StageError(repeat, stage, e) from e

    logger.info(f'repeat {repeat} of {config.n_repeats} done')
    return RepeatResult(repeat=repeat,
                        original_indices={a.lesion_id: a.original_index for a in assignments},
                        results=results,
                        comparisons=comparisons,
                        reliability=reliability)


def protocol_metadata(config: ExperimentConfig, dataset: Dataset, k: int) -> Dict[str, Any]:
    reference, others, threshold = _comparison_plan(config)
    return {
        'version': __version__,
        'n_lesions': len(dataset),
        'n_melanoma': int(dataset.positive_mask.sum()),
        'images_per_lesion': k,
        'stratified_bootstrap': config.stratified,
        'point_estimate': 'mean of bootstrap samples',
        'confidence_interval': '95% percentile interval, linear interpolation',
        'robustness_series': 'all images of a lesion shuffled with a seeded stream and cut '
                             'into L consecutive bundles of k / L images',
        'single_view_series': 'first image of each bundle',
        'mv_artificial_series': 'first image of each bundle plus bundle size - 1 artificial views',
        'wilcoxon': 'two-sided paired signed-rank test on bootstrap samples, exact up to '
                    '25 nonzero differences, normal approximation with tie and continuity '
                    'corrections above',
        'reference_method': reference.name if reference else None,
        'n_comparisons_per_metric': len(others),
        'adjusted_alpha': threshold,
        'mcc_alias': 'MMC',
    }


def _as_cached(scorer: Scorer) -> Scorer:
    return scorer if isinstance(scorer, CachedScorer) else CachedScorer(scorer)


def run_experiment(config: ExperimentConfig, dataset: Dataset, scorer: Scorer) -> ExperimentReport:
    """
    n_repeats independent replications, each with a fresh downsampling, one
    stratified resample plan shared by every method and metric, and paired
    tests of the reference method against every other method
    """
    dataset = validate_dataset(dataset)
    k = _check_dataset_shape(dataset, config.series_lengths,
                             [m.n_extra for m in config.methods if m.kind == MethodKind.MV_REAL])
    scorer = _as_cached(scorer)
    logger.info(f'running {config.n_repeats} repeat(s) on {len(dataset)} lesions, '
                f'{config.n_bootstrap} bootstrap iterations')

    repeats = [_run_repeat(config, dataset, scorer, repeat, k)
               for repeat in range(1, config.n_repeats + 1)]
    reference = config.reference_method
    return ExperimentReport(
        config=config.to_json(),
        methods=[m.name for m in config.methods],
        display_names={m.name: m.display_name for m in config.methods},
        metrics=metric_keys([k // length for length in config.series_lengths]),
        reference_method=reference.name if reference else None,
        repeats=repeats,
        metadata=protocol_metadata(config, dataset, k))


def _sweep(config: ExperimentConfig, dataset: Dataset, scorer: Scorer, parameter: str,
           rows: Sequence[Tuple[str, MethodSpec]]) -> SweepResult:
    """ every row on the same assignment and resample plan """
    streams = RandomStreams(config.seed).child('sweep', parameter)
    scorer = _as_cached(scorer)
    stage = 'downsample'
    try:
        assignments = downsample_dataset(dataset, streams)
        stage = 'resample plan'
        plan = _resample_plan(config, dataset, streams, plan_id=f'sweep-{parameter}')
        sweep_rows = []
        for label, method in rows:
            stage = f'evaluate {method.name}'
            scored = ScoredArrays.from_items(
                evaluate_method(method, assignments, dataset, scorer, streams, config.workers))
            sweep_rows.append(SweepRow(label, method.name, _bootstrap_scored(scored, plan, config)))
            logger.info(f'sweep {parameter}={label} done')
    except MvEvalError as e:
        raise StageError(0, f'sweep {parameter}: {stage}', e) from e
    return SweepResult(parameter, sweep_rows)


def sweep_n_images(config: ExperimentConfig, dataset: Dataset, scorer: Scorer) -> SweepResult:
    """ MV-Real with each configured number of extra images; n_extra = 0 is Single-View """
    dataset = validate_dataset(dataset)
    _check_dataset_shape(dataset, (), config.sweep_n_extra)
    rows = [(str(n), MethodSpec.mv_real(n)) for n in config.sweep_n_extra]
    return _sweep(config, dataset, scorer, 'n_extra', rows)


def preset_sweep(config: ExperimentConfig, dataset: Dataset, scorer: Scorer) -> SweepResult:
    """ MV-Artificial under every preset, with the configured number of artificial views """
    dataset = validate_dataset(dataset)
    configured = next((m for m in config.methods if m.kind == MethodKind.MV_ARTIFICIAL),
                      MethodSpec.mv_artificial())
    rows = [(str(preset), MethodSpec.mv_artificial(PRESETS[preset], configured.n_extra))
            for preset in Preset]
    return _sweep(config, dataset, scorer, 'preset', rows)


def build_report_for_sweeps(config: ExperimentConfig, sweeps: List[SweepResult]) -> ExperimentReport:
    """ a report with no repeat tables, for stand-alone sweeps """
    return ExperimentReport(config=config.to_json(), methods=[], display_names={}, metrics=[],
                            reference_method=None, repeats=[], metadata={'version': __version__},
                            sweeps=sweeps)
