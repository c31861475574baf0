"""
Domain types shared by every module and the dataset validation step.

A lesion is the unit of analysis. Every probability in the harness is the
predicted probability of melanoma, the positive class.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from mveval.errors import DatasetValidationError, InvalidRaster

logger = logging.getLogger('mveval')

SCORES_SENTINEL = 'scores'

Probability = float
Raster = np.ndarray
RasterKey = Tuple[str, int]


class Label(Enum):
    MELANOMA = 'melanoma'
    NEVUS = 'nevus'

    def __str__(self):
        return self.value

    @property
    def is_positive(self) -> bool:
        return self is Label.MELANOMA

    @classmethod
    def parse(cls, raw: str) -> Union['Label', str]:
        """ returns the raw string back when it is not a known label """
        try:
            return cls(str(raw).strip().lower())
        except ValueError:
            return raw


@dataclass(frozen=True)
class ImageRef:
    lesion_id: str
    index: int
    source: str = SCORES_SENTINEL

    @property
    def key(self) -> RasterKey:
        return self.lesion_id, self.index

    @property
    def is_score_key(self) -> bool:
        return self.source == SCORES_SENTINEL


@dataclass(frozen=True)
class LesionRecord:
    lesion_id: str
    label: Union[Label, str]
    images: Tuple[ImageRef, ...]
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'images', tuple(self.images))
        object.__setattr__(self, 'metadata', MappingProxyType(dict(self.metadata)))

    @property
    def k(self) -> int:
        return len(self.images)

    @property
    def is_melanoma(self) -> bool:
        return self.label is Label.MELANOMA

    def image(self, index: int) -> ImageRef:
        return self.images[index]


@dataclass(frozen=True)
class SplitAssignment:
    lesion_id: str
    original_index: int
    set_aside_indices: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'set_aside_indices', tuple(self.set_aside_indices))

    @property
    def all_indices(self) -> Tuple[int, ...]:
        return (self.original_index,) + self.set_aside_indices


class IssueKind(Enum):
    DUPLICATE_LESION_ID = 'DuplicateLesionId'
    NON_CONTIGUOUS_INDICES = 'NonContiguousIndices'
    EMPTY_SERIES = 'EmptySeries'
    UNKNOWN_LABEL = 'UnknownLabel'
    MISMATCHED_LESION_ID = 'MismatchedLesionId'

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class ValidationIssue:
    kind: IssueKind
    lesion_id: str
    message: str

    def __str__(self):
        return f'{self.kind} [{self.lesion_id}]: {self.message}'


@dataclass(frozen=True)
class Dataset:
    """
    a validated set of lesions. rasters is filled by io.load_rasters (or by the
    synthetic generator) and maps (lesion_id, index) to a preprocessed raster
    """
    records: Tuple[LesionRecord, ...]
    rasters: Mapping[RasterKey, Raster] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'records', tuple(self.records))
        object.__setattr__(self, 'rasters', MappingProxyType(dict(self.rasters)))
        object.__setattr__(self, '_by_id',
                           {record.lesion_id: record for record in self.records})

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, lesion_id: str) -> LesionRecord:
        return self._by_id[lesion_id]  # type: ignore[attr-defined]

    @property
    def lesion_ids(self) -> List[str]:
        return [record.lesion_id for record in self.records]

    @property
    def labels(self) -> List[Label]:
        return [record.label for record in self.records]  # type: ignore[misc]

    @property
    def positive_mask(self) -> np.ndarray:
        return np.array([record.is_melanoma for record in self.records], dtype=bool)

    @property
    def images_per_lesion(self) -> Optional[int]:
        """ k when every lesion has the same series length, else None """
        ks = {record.k for record in self.records}
        return ks.pop() if len(ks) == 1 else None

    @property
    def has_rasters(self) -> bool:
        return len(self.rasters) > 0

    def raster(self, ref: ImageRef) -> Optional[Raster]:
        return self.rasters.get(ref.key)

    def with_rasters(self, rasters: Mapping[RasterKey, Raster]) -> 'Dataset':
        return Dataset(self.records, rasters)


def validate_raster(img: Raster, context: str = '') -> Raster:
    """ a raster is an (h, w, 3) float array with every value in [0, 1] """
    where = f' ({context})' if context else ''
    if not isinstance(img, np.ndarray):
        raise InvalidRaster(f'raster must be a numpy array, got {type(img)}{where}')
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidRaster(f'raster must have shape (h, w, 3), got {img.shape}{where}')
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise InvalidRaster(f'raster has no pixels{where}')
    if not np.all(np.isfinite(img)):
        raise InvalidRaster(f'raster has non-finite pixels{where}')
    if img.min() < 0.0 or img.max() > 1.0:
        raise InvalidRaster(f'raster pixels outside [0, 1]{where}')
    return img


def _record_issues(record: LesionRecord) -> List[ValidationIssue]:
    issues = []
    if not isinstance(record.label, Label):
        issues.append(ValidationIssue(IssueKind.UNKNOWN_LABEL, record.lesion_id,
                                      f'label "{record.label}" is neither melanoma nor nevus'))
    if record.k == 0:
        issues.append(ValidationIssue(IssueKind.EMPTY_SERIES, record.lesion_id,
                                      'lesion has no images'))
        return issues

    foreign = [ref.lesion_id for ref in record.images if ref.lesion_id != record.lesion_id]
    if foreign:
        issues.append(ValidationIssue(IssueKind.MISMATCHED_LESION_ID, record.lesion_id,
                                      f'images reference other lesions: {sorted(set(foreign))}'))

    indices = [ref.index for ref in record.images]
    if indices != list(range(record.k)):
        issues.append(ValidationIssue(IssueKind.NON_CONTIGUOUS_INDICES, record.lesion_id,
                                      f'image indices {indices} are not 0..{record.k - 1} in order'))
    return issues


def find_dataset_issues(records: Iterable[LesionRecord]) -> List[ValidationIssue]:
    """
    every violation in the dataset, not only the first one. a lesion id that
    appears c times contributes c - 1 duplicate issues
    """
    records = list(records)
    issues = []
    for record in records:
        issues.extend(_record_issues(record))

    for lesion_id, count in Counter(r.lesion_id for r in records).items():
        issues.extend(
            ValidationIssue(IssueKind.DUPLICATE_LESION_ID, lesion_id,
                            f'lesion id appears {count} times')
            for _ in range(count - 1)
        )
    return issues


def validate_dataset(records: Union[Dataset, Sequence[LesionRecord]],
                     rasters: Optional[Dict[RasterKey, Raster]] = None) -> Dataset:
    """
    :return: the validated dataset (a Dataset passes through unchanged)
    :raises DatasetValidationError: carrying every issue found
    """
    if isinstance(records, Dataset) and rasters is None:
        candidates: Sequence[LesionRecord] = records.records
        existing: Optional[Dataset] = records
    else:
        candidates = records.records if isinstance(records, Dataset) else records
        existing = None

    issues = find_dataset_issues(candidates)
    if issues:
        logger.warning(f'dataset validation found {len(issues)} issue(s)')
        raise DatasetValidationError(issues)

    if existing is not None:
        return existing
    return Dataset(tuple(candidates), rasters or {})
