"""
Synthetic lesion datasets with known ground truth.

Each lesion has a latent melanoma probability theta and k views whose scores
are independent noisy copies of theta. In score-only mode the views are
entries of a ScoreTable; in raster-backed mode every view is a small uniform
raster whose builtin score equals the noisy view score.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from scipy.special import expit, logit

from mveval.core_model import Dataset, ImageRef, Label, LesionRecord, Raster, RasterKey, \
    SCORES_SENTINEL, validate_dataset
from mveval.errors import InvalidSpec
from mveval.metrics import ScoredArrays, auroc
from mveval.scorer import BUILTIN_BIAS, BUILTIN_WEIGHTS, ScoreTable

logger = logging.getLogger('mveval')

# a uniform raster of intensity v has features (v, 0, v, v, v, 0)
_UNIFORM_SLOPE = float(BUILTIN_WEIGHTS[0] + BUILTIN_WEIGHTS[2:5].sum())
RASTER_SCORE_RANGE = (0.01, 0.99)
LOGIT_EPS = 1e-6


class SynthMode(Enum):
    SCORE_ONLY = 'score_only'
    RASTER_BACKED = 'raster_backed'

    def __str__(self):
        return self.value


class CalibrationMode(Enum):
    PERFECTLY_CALIBRATED = 'perfectly_calibrated'
    CONSTANT_OVERCONFIDENT = 'constant_overconfident'

    def __str__(self):
        return self.value


class NoiseSpace(Enum):
    PROBABILITY = 'probability'
    LOGIT = 'logit'

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SynthSpec:
    n_lesions: int = 656
    k: int = 6
    # theta ~ Beta(latent_a, latent_b)
    latent_a: float = 0.4
    latent_b: float = 0.6
    noise_sigma: float = 0.15
    mode: SynthMode = SynthMode.SCORE_ONLY
    calibration: CalibrationMode = CalibrationMode.PERFECTLY_CALIBRATED
    constant_confidence: float = 0.9
    forced_accuracy: float = 0.5
    noise_space: NoiseSpace = NoiseSpace.PROBABILITY
    raster_size: int = 8
    n_monte_carlo: int = 200_000

    def __post_init__(self):
        problems = []
        if self.n_lesions < 2:
            problems.append(f'n_lesions must be >= 2, got {self.n_lesions}')
        if self.k < 1:
            problems.append(f'k must be >= 1, got {self.k}')
        if self.noise_sigma < 0:
            problems.append(f'noise_sigma must be >= 0, got {self.noise_sigma}')
        if self.latent_a <= 0 or self.latent_b <= 0:
            problems.append(f'latent Beta parameters must be positive, '
                            f'got ({self.latent_a}, {self.latent_b})')
        if not 0.0 <= self.constant_confidence <= 1.0:
            problems.append(f'constant_confidence must lie in [0, 1], got {self.constant_confidence}')
        if not 0.0 <= self.forced_accuracy <= 1.0:
            problems.append(f'forced_accuracy must lie in [0, 1], got {self.forced_accuracy}')
        if self.raster_size < 1:
            problems.append(f'raster_size must be >= 1, got {self.raster_size}')
        if self.n_monte_carlo < 2:
            problems.append(f'n_monte_carlo must be >= 2, got {self.n_monte_carlo}')
        if problems:
            raise InvalidSpec('; '.join(problems))

    def to_json(self) -> Dict:
        return {
            'n_lesions': self.n_lesions,
            'k': self.k,
            'latent_a': self.latent_a,
            'latent_b': self.latent_b,
            'noise_sigma': self.noise_sigma,
            'mode': str(self.mode),
            'calibration': str(self.calibration),
            'constant_confidence': self.constant_confidence,
            'forced_accuracy': self.forced_accuracy,
            'noise_space': str(self.noise_space),
            'raster_size': self.raster_size,
            'n_monte_carlo': self.n_monte_carlo,
        }

    @classmethod
    def from_json(cls, data: Dict) -> 'SynthSpec':
        enums = {'mode': SynthMode, 'calibration': CalibrationMode, 'noise_space': NoiseSpace}
        kwargs = {}
        for key, value in data.items():
            if key not in cls.__dataclass_fields__:
                raise InvalidSpec(f'unknown synth field: {key}')
            try:
                kwargs[key] = enums[key](value) if key in enums else value
            except ValueError as e:
                raise InvalidSpec(f'invalid value for {key}: {value}') from e
        return cls(**kwargs)


@dataclass(frozen=True)
class GroundTruth:
    theta: np.ndarray
    view_scores: np.ndarray  # (n_lesions, k)
    population_auroc: float
    noise_sigma: float
    noise_space: NoiseSpace
    calibration: CalibrationMode

    def to_json(self) -> Dict:
        return {
            'population_auroc': self.population_auroc,
            'noise_sigma': self.noise_sigma,
            'noise_space': str(self.noise_space),
            'calibration': str(self.calibration),
            'theta': [float(t) for t in self.theta],
        }


@dataclass(frozen=True)
class SynthResult:
    dataset: Dataset
    ground_truth: GroundTruth
    score_table: Optional[ScoreTable] = None
    rasters: Dict[RasterKey, Raster] = field(default_factory=dict, compare=False)


def lesion_id_for(i: int) -> str:
    return f'L{i:04d}'


def uniform_raster_for_score(score: float, size: int) -> Raster:
    """ uniform raster whose builtin score is score, clamped to RASTER_SCORE_RANGE """
    p = float(np.clip(score, *RASTER_SCORE_RANGE))
    intensity = (float(logit(p)) - BUILTIN_BIAS) / _UNIFORM_SLOPE
    return np.full((size, size, 3), np.clip(intensity, 0.0, 1.0))


class LesionGenerator:
    def __init__(self, spec: SynthSpec, rng: np.random.Generator):
        self._spec = spec
        self._rng = rng

    def generate(self) -> SynthResult:
        spec = self._spec
        theta = self._generate_theta(spec.n_lesions)
        labels = self._generate_labels(theta)
        view_scores = self._generate_view_scores(theta, spec.k)
        if labels.all() or not labels.any():
            raise InvalidSpec(f'generated labels hold a single class for {spec.n_lesions} '
                              f'lesions; change n_lesions or the latent distribution')

        population_auroc = self._population_auroc()
        ground_truth = GroundTruth(theta, view_scores, population_auroc, spec.noise_sigma,
                                   spec.noise_space, spec.calibration)
        lesion_ids = [lesion_id_for(i) for i in range(spec.n_lesions)]
        records = self._generate_records(lesion_ids, labels)

        if spec.mode == SynthMode.SCORE_ONLY:
            table = ScoreTable({(lesion_id, j): view_scores[i, j]
                                for i, lesion_id in enumerate(lesion_ids) for j in range(spec.k)})
            logger.info(f'generated {spec.n_lesions} score-only lesions, {int(labels.sum())} melanoma')
            return SynthResult(validate_dataset(records), ground_truth, score_table=table)

        rasters = {(lesion_id, j): uniform_raster_for_score(view_scores[i, j], spec.raster_size)
                   for i, lesion_id in enumerate(lesion_ids) for j in range(spec.k)}
        logger.info(f'generated {spec.n_lesions} raster-backed lesions, {int(labels.sum())} melanoma')
        return SynthResult(validate_dataset(records, rasters), ground_truth, rasters=rasters)

    def _generate_theta(self, n: int) -> np.ndarray:
        if self._spec.calibration == CalibrationMode.CONSTANT_OVERCONFIDENT:
            return np.full(n, self._spec.constant_confidence)
        return self._rng.beta(self._spec.latent_a, self._spec.latent_b, size=n)

    def _generate_labels(self, theta: np.ndarray) -> np.ndarray:
        """ melanoma mask """
        n = len(theta)
        if self._spec.calibration == CalibrationMode.PERFECTLY_CALIBRATED:
            return self._rng.random(n) < theta
        # exactly round(accuracy * n) lesions carry the predicted class
        predicted_positive = self._spec.constant_confidence >= 0.5
        n_correct = int(round(self._spec.forced_accuracy * n))
        correct = np.zeros(n, dtype=bool)
        correct[self._rng.permutation(n)[:n_correct]] = True
        return correct if predicted_positive else ~correct

    def _generate_view_scores(self, theta: np.ndarray, k: int) -> np.ndarray:
        noise = self._rng.normal(0.0, 1.0, size=(len(theta), k)) * self._spec.noise_sigma
        if self._spec.noise_space == NoiseSpace.LOGIT:
            latent = logit(np.clip(theta, LOGIT_EPS, 1.0 - LOGIT_EPS))
            return expit(latent[:, np.newaxis] + noise)
        return np.clip(theta[:, np.newaxis] + noise, 0.0, 1.0)

    def _population_auroc(self) -> float:
        """ Monte Carlo AUROC of a single view on a fresh large sample """
        n = self._spec.n_monte_carlo
        theta = self._generate_theta(n)
        labels = self._generate_labels(theta)
        scores = self._generate_view_scores(theta, 1)[:, 0]
        return auroc(ScoredArrays(labels, scores))

    def _generate_records(self, lesion_ids: List[str], labels: np.ndarray) -> List[LesionRecord]:
        records = []
        for lesion_id, positive in zip(lesion_ids, labels):
            images = tuple(ImageRef(lesion_id, j, self._image_source(lesion_id, j))
                           for j in range(self._spec.k))
            label = Label.MELANOMA if positive else Label.NEVUS
            records.append(LesionRecord(lesion_id, label, images))
        return records

    def _image_source(self, lesion_id: str, index: int) -> str:
        if self._spec.mode == SynthMode.SCORE_ONLY:
            return SCORES_SENTINEL
        return raster_file_name(lesion_id, index)


def raster_file_name(lesion_id: str, index: int) -> str:
    return f'images/{lesion_id}_{index}.png'


def generate(spec: SynthSpec, rng: np.random.Generator) -> SynthResult:
    return LesionGenerator(spec, rng).generate()

