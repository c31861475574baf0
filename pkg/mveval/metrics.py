"""
Endpoint metrics: discrimination (AUROC), calibration (ECE) and robustness
(MCC, the mean per-lesion range of melanoma probabilities across a series of
predictions; reports also call it MMC).

Metrics accept either a list of ScoredLesion or the array-backed ScoredArrays,
which is what the bootstrap resamples.
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np
from scipy.stats import rankdata

from mveval.core_model import Label, Probability
from mveval.errors import DegenerateClassDistribution, EmptyInput, SeriesTooShort

logger = logging.getLogger('mveval')

DEFAULT_ECE_BINS = 10


@dataclass(frozen=True)
class ScoredLesion:
    lesion_id: str
    label: Label
    prediction: Probability


@dataclass(frozen=True)
class ScoredArrays:
    """ column view of a list of ScoredLesion: positive mask and predictions """
    positive: np.ndarray
    prediction: np.ndarray

    def __len__(self):
        return len(self.prediction)

    def take(self, indices: np.ndarray) -> 'ScoredArrays':
        return ScoredArrays(self.positive[indices], self.prediction[indices])

    @classmethod
    def from_items(cls, items: Sequence[ScoredLesion]) -> 'ScoredArrays':
        return cls(np.array([item.label is Label.MELANOMA for item in items], dtype=bool),
                   np.array([item.prediction for item in items], dtype=float))


@dataclass(frozen=True)
class SeriesArrays:
    """ per-lesion prediction series of equal length L, shape (n_lesions, L) """
    values: np.ndarray

    def __len__(self):
        return self.values.shape[0]

    def take(self, indices: np.ndarray) -> 'SeriesArrays':
        return SeriesArrays(self.values[indices])


ScoredInput = Union[Sequence[ScoredLesion], ScoredArrays]
SeriesInput = Union[Sequence[Sequence[Probability]], SeriesArrays]


def _as_arrays(items: ScoredInput) -> ScoredArrays:
    return items if isinstance(items, ScoredArrays) else ScoredArrays.from_items(items)


def auroc(items: ScoredInput) -> float:
    """
    Mann-Whitney form: P(score_pos > score_neg) + 0.5 * P(tie) over all
    (melanoma, nevus) pairs
    """
    data = _as_arrays(items)
    n_pos = int(data.positive.sum())
    n_neg = len(data) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateClassDistribution(
            f'AUROC needs both classes, got {n_pos} melanoma and {n_neg} nevus')
    ranks = rankdata(data.prediction)
    u_stat = ranks[data.positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


@dataclass(frozen=True)
class ReliabilityBins:
    n_bins: int
    edges: np.ndarray
    counts: np.ndarray
    mean_confidence: np.ndarray
    accuracy: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0

    def ece(self) -> float:
        occupied = self.occupied
        weights = self.counts[occupied] / self.n_samples
        gaps = np.abs(self.accuracy[occupied] - self.mean_confidence[occupied])
        return float(np.sum(weights * gaps))

    def to_json(self) -> dict:
        def _clean(values):
            return [None if np.isnan(v) else float(v) for v in values]
        return {
            'n_bins': self.n_bins,
            'edges': [float(e) for e in self.edges],
            'counts': [int(c) for c in self.counts],
            'mean_confidence': _clean(self.mean_confidence),
            'accuracy': _clean(self.accuracy),
        }

    @classmethod
    def from_json(cls, data: dict) -> 'ReliabilityBins':
        def _restore(values):
            return np.array([np.nan if v is None else v for v in values], dtype=float)
        return cls(data['n_bins'], np.asarray(data['edges'], dtype=float),
                   np.asarray(data['counts'], dtype=np.int64),
                   _restore(data['mean_confidence']), _restore(data['accuracy']))


def _confidence_and_correct(data: ScoredArrays):
    predicted_positive = data.prediction >= 0.5
    confidence = np.maximum(data.prediction, 1.0 - data.prediction)
    correct = predicted_positive == data.positive
    return confidence, correct


def reliability_bins(items: ScoredInput, n_bins: int = DEFAULT_ECE_BINS) -> ReliabilityBins:
    """
    equal-width bins over [0, 1] on the predicted-class confidence max(p, 1 - p);
    bins are right-closed, the first one also holds 0
    """
    data = _as_arrays(items)
    if len(data) == 0:
        raise EmptyInput('calibration needs at least one prediction')
    if n_bins < 1:
        raise ValueError(f'n_bins must be >= 1, got {n_bins}')

    confidence, correct = _confidence_and_correct(data)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    bin_ids = np.clip(np.digitize(confidence, edges, right=True) - 1, 0, n_bins - 1)

    counts = np.bincount(bin_ids, minlength=n_bins)
    conf_sums = np.bincount(bin_ids, weights=confidence, minlength=n_bins)
    correct_sums = np.bincount(bin_ids, weights=correct.astype(float), minlength=n_bins)
    with np.errstate(invalid='ignore', divide='ignore'):
        mean_confidence = np.where(counts > 0, conf_sums / counts, np.nan)
        accuracy = np.where(counts > 0, correct_sums / counts, np.nan)

    return ReliabilityBins(n_bins, edges, counts, mean_confidence, accuracy)


def ece(items: ScoredInput, n_bins: int = DEFAULT_ECE_BINS) -> float:
    """ sum over bins of (n_b / N) * |accuracy_b - confidence_b| """
    return reliability_bins(items, n_bins).ece()


def series_ranges(series: SeriesInput) -> np.ndarray:
    """ max - min of each lesion's series """
    if isinstance(series, SeriesArrays):
        matrix = series.values
        if matrix.ndim != 2 or matrix.shape[0] == 0:
            raise EmptyInput('MCC needs at least one lesion series')
        if matrix.shape[1] < 2:
            raise SeriesTooShort(f'every lesion series needs >= 2 predictions, got {matrix.shape[1]}')
        return matrix.max(axis=1) - matrix.min(axis=1)

    if len(series) == 0:
        raise EmptyInput('MCC needs at least one lesion series')
    shortest = min(len(s) for s in series)
    if shortest < 2:
        raise SeriesTooShort(f'every lesion series needs >= 2 predictions, got {shortest}')
    return np.array([max(s) - min(s) for s in series], dtype=float)


def mcc(series: SeriesInput) -> float:
    """ mean over lesions of the range of melanoma probabilities; larger is worse """
    return float(np.mean(series_ranges(series)))


def to_scored_lesions(lesion_ids: Sequence[str],
                      labels: Sequence[Label],
                      predictions: Sequence[Probability]) -> List[ScoredLesion]:
    return [ScoredLesion(lesion_id, label, float(p))
            for lesion_id, label, p in zip(lesion_ids, labels, predictions)]
