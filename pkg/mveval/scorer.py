"""
The boundary that turns an image into a melanoma probability. The trained
classifier itself lives outside the harness: it is either a precomputed score
table, an external process speaking a line protocol, or the builtin
deterministic toy model used by tests and synthetic runs.

External process protocol: the harness writes one absolute image path per
line to the process's stdin and expects one decimal probability per line on
stdout, in the same order. A nonzero exit status is a protocol failure.
"""
import logging
import math
import shlex
import subprocess
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from tempfile import TemporaryDirectory
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from mveval.core_model import ImageRef, Probability, Raster, RasterKey, validate_raster
from mveval.errors import ConfigError, InvalidRaster, MissingScore, NonFiniteScore, \
    ScorerProtocolError
from mveval.rasters import resolve_source, write_raster

logger = logging.getLogger('mveval')

# builtin model: sigmoid(w . f(img) + b) with
# f = (mean, std, red mean, green mean, blue mean, center-minus-border contrast)
BUILTIN_WEIGHTS = np.array([3.2, -1.0, 2.0, 2.0, 2.0, 1.5])
BUILTIN_BIAS = -4.6
# per-feature sensitivity to a max-abs pixel perturbation: the contrast
# feature moves by up to 2 eps, every other feature by up to eps
_FEATURE_SENSITIVITY = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 2.0])
# the sigmoid's slope never exceeds 1/4
BUILTIN_LIPSCHITZ = 0.25 * float(np.abs(BUILTIN_WEIGHTS) @ _FEATURE_SENSITIVITY)


@dataclass
class ScoreTableSchema:
    LESION_ID: str = 'lesion_id'
    IMAGE_INDEX: str = 'image_index'
    SCORE: str = 'score'

    @classmethod
    def get_cols(cls) -> List[str]:
        return [cls.LESION_ID, cls.IMAGE_INDEX, cls.SCORE]


class ScorerKind(Enum):
    BUILTIN = 'builtin'
    EXTERNAL_PROCESS = 'external_process'
    SCORE_TABLE = 'score_table'

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class ScorerSpec:
    kind: ScorerKind
    command: Optional[str] = None
    working_dir: Optional[str] = None
    table_path: Optional[str] = None
    # external process only: directory relative image sources are resolved against
    image_root: Optional[str] = None

    def __post_init__(self):
        if self.kind == ScorerKind.EXTERNAL_PROCESS:
            if not self.command or self.table_path:
                raise ConfigError('external process scorer needs a command and no table path')
        elif self.kind == ScorerKind.SCORE_TABLE:
            if not self.table_path or self.command:
                raise ConfigError('score table scorer needs a table path and no command')
        elif self.command or self.table_path:
            raise ConfigError('builtin scorer takes neither a command nor a table path')
        if self.image_root and self.kind != ScorerKind.EXTERNAL_PROCESS:
            raise ConfigError('only the external process scorer reads image sources')


@dataclass(frozen=True)
class ScoreItem:
    """ one image to score; artificial views carry the ref of the image they were made from """
    ref: ImageRef
    raster: Optional[Raster] = None
    artificial: bool = False


def check_probability(value: float, context: str) -> Probability:
    if not math.isfinite(value):
        raise NonFiniteScore(f'non-finite score {value} for {context}')
    if not 0.0 <= value <= 1.0:
        raise NonFiniteScore(f'score {value} for {context} lies outside [0, 1]')
    return float(value)


def _contrast(img: Raster) -> float:
    height, width = img.shape[:2]
    ys, xs = np.mgrid[0:height, 0:width]
    center = (np.abs(ys - (height - 1) / 2.0) <= height / 4.0) & \
             (np.abs(xs - (width - 1) / 2.0) <= width / 4.0)
    if center.all() or not center.any():
        return 0.0
    return float(img[center].mean() - img[~center].mean())


def builtin_features(img: Raster) -> np.ndarray:
    channel_means = img.mean(axis=(0, 1))
    return np.array([img.mean(), img.std(), *channel_means, _contrast(img)])


def builtin_score(img: Raster) -> Probability:
    """
    deterministic toy classifier, smooth in the pixels: any single-pixel change
    of eps moves the score by at most BUILTIN_LIPSCHITZ * eps
    """
    validate_raster(img)
    return float(expit(BUILTIN_WEIGHTS @ builtin_features(img) + BUILTIN_BIAS))


class ScoreTable:
    def __init__(self, scores: Dict[RasterKey, float]):
        self._scores = {
            (str(lesion_id), int(index)): check_probability(float(value), f'{lesion_id}/{index}')
            for (lesion_id, index), value in scores.items()
        }

    def __len__(self):
        return len(self._scores)

    def __contains__(self, key: RasterKey):
        return key in self._scores

    def __eq__(self, other):
        return isinstance(other, ScoreTable) and self._scores == other._scores

    def lookup(self, ref: ImageRef) -> Probability:
        try:
            return self._scores[ref.key]
        except KeyError:
            raise MissingScore(f'no score for lesion {ref.lesion_id!r} image {ref.index}') from None

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> 'ScoreTable':
        missing = [col for col in ScoreTableSchema.get_cols() if col not in df.columns]
        if missing:
            raise ConfigError(f'score table is missing columns: {missing}')
        return cls({
            (row[ScoreTableSchema.LESION_ID], row[ScoreTableSchema.IMAGE_INDEX]):
                row[ScoreTableSchema.SCORE]
            for row in df[ScoreTableSchema.get_cols()].to_dict('records')
        })

    def to_frame(self) -> pd.DataFrame:
        rows = [(lesion_id, index, score) for (lesion_id, index), score in self._scores.items()]
        return pd.DataFrame(rows, columns=ScoreTableSchema.get_cols())


class Scorer(ABC):
    @abstractmethod
    def score_batch(self, items: Sequence[ScoreItem]) -> List[Probability]:
        """ one probability per item, in item order """

    def score_one(self, item: ScoreItem) -> Probability:
        return self.score_batch([item])[0]


def _require_raster(item: ScoreItem) -> Raster:
    if item.raster is None:
        raise InvalidRaster(f'no raster for lesion {item.ref.lesion_id!r} image {item.ref.index}')
    return item.raster


class BuiltinScorer(Scorer):
    def score_batch(self, items: Sequence[ScoreItem]) -> List[Probability]:
        return [builtin_score(_require_raster(item)) for item in items]


class ScoreTableScorer(Scorer):
    def __init__(self, table: ScoreTable):
        self._table = table

    @property
    def table(self) -> ScoreTable:
        return self._table

    def score_batch(self, items: Sequence[ScoreItem]) -> List[Probability]:
        scores = []
        for item in items:
            if item.artificial:
                raise MissingScore(f'a score table cannot score an artificial view of '
                                   f'lesion {item.ref.lesion_id!r} image {item.ref.index}')
            scores.append(self._table.lookup(item.ref))
        return scores


class ExternalProcessScorer(Scorer):
    """
    :param image_root: when set, real images whose source file exists are sent
        by their original path; artificial views and images without a file are
        sent as temporary 8-bit PNGs of the preprocessed raster
    """
    def __init__(self, command: str, working_dir: Optional[str] = None, image_root: Optional[str] = None):
        self._command = command
        self._working_dir = working_dir
        self._image_root = image_root
        self._lock = threading.Lock()

    def _args(self) -> List[str]:
        try:
            args = shlex.split(self._command)
        except ValueError as e:
            raise ScorerProtocolError(f'cannot parse scorer command {self._command!r}: {e}') from e
        if not args:
            raise ScorerProtocolError('scorer command is empty')
        return args

    def _run(self, manifest: str) -> str:
        args = self._args()
        try:
            result = subprocess.run(args, input=manifest, capture_output=True, text=True,
                                    cwd=self._working_dir, check=False)
        except OSError as e:
            raise ScorerProtocolError(f'could not start scorer {args[0]!r}: {e}') from e
        if result.returncode != 0:
            raise ScorerProtocolError(f'scorer exited with status {result.returncode}: '
                                      f'{result.stderr.strip()[:500]}')
        return result.stdout

    @staticmethod
    def _parse_output(stdout: str, n_expected: int) -> List[Probability]:
        lines = [line.strip() for line in stdout.splitlines() if line.strip()]
        if len(lines) != n_expected:
            raise ScorerProtocolError(f'scorer returned {len(lines)} lines for {n_expected} images')
        scores = []
        for line_no, line in enumerate(lines, start=1):
            try:
                value = float(line)
            except ValueError:
                raise ScorerProtocolError(f'output line {line_no} is not a number: {line!r}') from None
            scores.append(check_probability(value, f'output line {line_no}'))
        return scores

    def _source_path(self, item: ScoreItem) -> Optional[str]:
        if self._image_root is None or item.artificial or item.ref.is_score_key:
            return None
        path = Path(resolve_source(item.ref, self._image_root)).resolve()
        return str(path) if path.is_file() else None

    def score_batch(self, items: Sequence[ScoreItem]) -> List[Probability]:
        if not items:
            return []
        with self._lock, TemporaryDirectory(prefix='mveval-') as tmp_dir:
            paths = []
            for i, item in enumerate(items):
                source = self._source_path(item)
                if source is None:
                    source = write_raster(_require_raster(item), str(Path(tmp_dir, f'{i:06d}.png').resolve()))
                paths.append(source)
            logger.debug(f'sending {len(paths)} images to external scorer')
            stdout = self._run('\n'.join(paths) + '\n')
        return self._parse_output(stdout, len(items))


class CachedScorer(Scorer):
    """ memoizes real images by (lesion_id, index); artificial views always go through """
    def __init__(self, inner: Scorer):
        self._inner = inner
        self._cache: Dict[RasterKey, Probability] = {}
        self._lock = threading.Lock()

    def score_batch(self, items: Sequence[ScoreItem]) -> List[Probability]:
        with self._lock:
            pending = [i for i, item in enumerate(items)
                       if item.artificial or item.ref.key not in self._cache]
        fresh = self._inner.score_batch([items[i] for i in pending]) if pending else []
        fresh_by_position = dict(zip(pending, fresh))
        scores = []
        with self._lock:
            for i, item in enumerate(items):
                if i in fresh_by_position:
                    value = fresh_by_position[i]
                    if not item.artificial:
                        self._cache[item.ref.key] = value
                    scores.append(value)
                else:
                    scores.append(self._cache[item.ref.key])
        return scores


def create_scorer(spec: ScorerSpec, table: Optional[ScoreTable] = None) -> Scorer:
    if spec.kind == ScorerKind.BUILTIN:
        return BuiltinScorer()
    if spec.kind == ScorerKind.EXTERNAL_PROCESS:
        return ExternalProcessScorer(spec.command, spec.working_dir, spec.image_root)  # type: ignore[arg-type]
    if table is None:
        from mveval.file_io import load_score_table
        table = load_score_table(spec.table_path)  # type: ignore[arg-type]
    return ScoreTableScorer(table)


def score_batch(spec: ScorerSpec, images: Sequence[ScoreItem]) -> List[Probability]:
    return create_scorer(spec).score_batch(images)
