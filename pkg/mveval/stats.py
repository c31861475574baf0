"""
Statistical protocol: bootstrap resample plans shared across methods, metric
bootstraps with percentile intervals, paired two-sided Wilcoxon signed-rank
tests on the bootstrap samples, and the Bonferroni threshold.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm, rankdata

from mveval.errors import DegenerateClassDistribution, EmptySamples, MetricError, \
    MvEvalError, PairingError

logger = logging.getLogger('mveval')

DEFAULT_LEVEL = 0.95
EXACT_MAX_N = 25


@dataclass(frozen=True)
class ResamplePlan:
    plan_id: str
    indices: np.ndarray  # (n_iter, n_lesions)
    stratified: bool

    @property
    def n_iter(self) -> int:
        return self.indices.shape[0]

    @property
    def n_lesions(self) -> int:
        return self.indices.shape[1]


def make_resample_plan(n_lesions: int,
                       n_iter: int,
                       rng: np.random.Generator,
                       stratify_labels: Optional[Sequence[bool]] = None,
                       plan_id: str = 'plan') -> ResamplePlan:
    """
    n_iter index vectors drawn with replacement. when stratified, every vector
    keeps the class pattern of the original order: positions of melanoma
    lesions are refilled from melanoma lesions only, likewise for nevi
    """
    if n_lesions < 1 or n_iter < 1:
        raise ValueError(f'a resample plan needs n_lesions >= 1 and n_iter >= 1, '
                         f'got {n_lesions} and {n_iter}')
    if stratify_labels is None:
        indices = rng.integers(0, n_lesions, size=(n_iter, n_lesions))
        return ResamplePlan(plan_id, indices, stratified=False)

    positive = np.asarray(stratify_labels, dtype=bool)
    if len(positive) != n_lesions:
        raise ValueError(f'{len(positive)} labels for {n_lesions} lesions')
    indices = np.empty((n_iter, n_lesions), dtype=np.int64)
    for members in (np.flatnonzero(positive), np.flatnonzero(~positive)):
        if len(members) == 0:
            raise DegenerateClassDistribution('stratified resampling needs both classes')
        draws = rng.integers(0, len(members), size=(n_iter, len(members)))
        indices[:, members] = members[draws]
    return ResamplePlan(plan_id, indices, stratified=True)


def identity_plan(n_lesions: int, plan_id: str = 'identity') -> ResamplePlan:
    """ a single resample holding every lesion once """
    return ResamplePlan(plan_id, np.arange(n_lesions)[np.newaxis, :], stratified=False)


@dataclass(frozen=True)
class BootstrapResult:
    metric: str
    point: float
    ci_low: float
    ci_high: float
    samples: np.ndarray
    plan_id: str
    level: float = DEFAULT_LEVEL

    @property
    def ci(self) -> Tuple[float, float]:
        return self.ci_low, self.ci_high

    def to_json(self, with_samples: bool = True) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'metric': self.metric,
            'point': float(self.point),
            'ci_low': float(self.ci_low),
            'ci_high': float(self.ci_high),
            'level': self.level,
            'plan_id': self.plan_id,
        }
        if with_samples:
            data['samples'] = [float(s) for s in self.samples]
        return data

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'BootstrapResult':
        return cls(metric=data['metric'], point=data['point'], ci_low=data['ci_low'],
                   ci_high=data['ci_high'], samples=np.asarray(data.get('samples', []), dtype=float),
                   plan_id=data['plan_id'], level=data.get('level', DEFAULT_LEVEL))


def percentile_ci(samples: Sequence[float], level: float = DEFAULT_LEVEL) -> Tuple[float, float]:
    """ linear-interpolation quantiles at positions (n - 1) * q """
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise EmptySamples('percentile interval needs at least one sample')
    if not 0.0 < level <= 1.0:
        raise ValueError(f'level must lie in (0, 1], got {level}')
    tail = (1.0 - level) / 2.0
    low, high = np.quantile(values, [tail, 1.0 - tail], method='linear')
    return float(low), float(high)


def _resample(inputs: Any, row: np.ndarray) -> Any:
    if hasattr(inputs, 'take'):
        return inputs.take(row)
    return [inputs[i] for i in row]


def bootstrap_metric(per_lesion_inputs: Any,
                     metric_fn: Callable[[Any], float],
                     plan: ResamplePlan,
                     metric_name: str = 'metric',
                     level: float = DEFAULT_LEVEL,
                     workers: int = 1) -> BootstrapResult:
    """
    metric_fn evaluated on every resample of the plan; point is the mean of
    the bootstrap samples
    :param per_lesion_inputs: a sequence, or anything with take(indices)
    """
    if len(per_lesion_inputs) != plan.n_lesions:
        raise PairingError(f'plan {plan.plan_id!r} covers {plan.n_lesions} lesions, '
                           f'got {len(per_lesion_inputs)} inputs')

    def _evaluate(iteration: int) -> float:
        try:
            return float(metric_fn(_resample(per_lesion_inputs, plan.indices[iteration])))
        except MvEvalError as e:
            raise MetricError(iteration, e) from e

    iterations = range(plan.n_iter)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = np.fromiter(pool.map(_evaluate, iterations), dtype=float, count=plan.n_iter)
    else:
        samples = np.fromiter((_evaluate(i) for i in iterations), dtype=float, count=plan.n_iter)

    low, high = percentile_ci(samples, level)
    return BootstrapResult(metric_name, float(np.mean(samples)), low, high, samples,
                           plan.plan_id, level)


@dataclass(frozen=True)
class WilcoxonResult:
    p_value: float
    w_plus: float
    n_effective: int
    all_zero: bool
    exact: bool


def _exact_upper_and_lower(doubled_ranks: np.ndarray, doubled_w: int) -> Tuple[float, float]:
    """
    P(W >= w) and P(W <= w) under the null, where W sums the doubled ranks
    of a random subset (every sign pattern equally likely)
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    n_patterns = 2.0 ** len(doubled_ranks)
    upper = counts[doubled_w:].sum() / n_patterns
    lower = counts[:doubled_w + 1].sum() / n_patterns
    return float(upper), float(lower)


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> WilcoxonResult:
    """
    two-sided paired signed-rank test on d = a - b. zero differences are
    dropped and tied |d| share midranks. up to 25 nonzero differences use the
    exact sign-enumeration distribution of W+, beyond that the normal
    approximation with tie and continuity corrections
    """
    a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a_arr.shape != b_arr.shape or a_arr.ndim != 1 or a_arr.size == 0:
        raise PairingError(f'paired test needs two equal-length nonempty vectors, '
                           f'got {a_arr.shape} and {b_arr.shape}')

    diffs = a_arr - b_arr
    diffs = diffs[diffs != 0.0]
    n = diffs.size
    if n == 0:
        return WilcoxonResult(p_value=1.0, w_plus=0.0, n_effective=0, all_zero=True, exact=True)

    ranks = rankdata(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())

    if n <= EXACT_MAX_N:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        upper, lower = _exact_upper_and_lower(doubled, int(round(2.0 * w_plus)))
        p_value = min(1.0, 2.0 * min(upper, lower))
        return WilcoxonResult(p_value, w_plus, n, all_zero=False, exact=True)

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    deviation = max(abs(w_plus - mean) - 0.5, 0.0)
    z_score = deviation / np.sqrt(variance)
    p_value = min(1.0, float(2.0 * norm.sf(z_score)))
    return WilcoxonResult(p_value, w_plus, n, all_zero=False, exact=False)


def bonferroni_threshold(alpha: float, m: int) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f'alpha must lie in (0, 1), got {alpha}')
    if m < 1:
        raise ValueError(f'number of comparisons must be >= 1, got {m}')
    return alpha / m


@dataclass(frozen=True)
class ComparisonResult:
    method_a: str
    method_b: str
    metric: str
    p_value: float
    adjusted_alpha: float
    significant: bool
    all_zero: bool = False

    def to_json(self) -> Dict[str, Any]:
        return {
            'method_a': self.method_a,
            'method_b': self.method_b,
            'metric': self.metric,
            'p_value': self.p_value,
            'adjusted_alpha': self.adjusted_alpha,
            'significant': self.significant,
            'all_differences_zero': self.all_zero,
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'ComparisonResult':
        return cls(data['method_a'], data['method_b'], data['metric'], data['p_value'],
                   data['adjusted_alpha'], data['significant'],
                   data.get('all_differences_zero', False))


def compare_bootstraps(method_a: str, result_a: BootstrapResult,
                       method_b: str, result_b: BootstrapResult,
                       adjusted_alpha: float) -> ComparisonResult:
    """ paired test on bootstrap samples; both must come from one resample plan """
    if result_a.plan_id != result_b.plan_id:
        raise PairingError(f'cannot pair samples from plans {result_a.plan_id!r} '
                           f'and {result_b.plan_id!r}')
    test = wilcoxon_signed_rank(result_a.samples, result_b.samples)
    return ComparisonResult(method_a, method_b, result_a.metric, test.p_value, adjusted_alpha,
                            significant=test.p_value < adjusted_alpha, all_zero=test.all_zero)
