import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Optional, Sequence

import numpy as np

from mveval.augment import AugSetup, PRESETS, Preset, generate_artificial_views, get_preset
from mveval.core_model import Dataset, ImageRef, Probability, Raster
from mveval.errors import ConfigError, EmptyList, InsufficientRealViews, InvalidRaster
from mveval.scorer import ScoreItem, Scorer

logger = logging.getLogger('mveval')

DEFAULT_N_EXTRA = 5


class MethodKind(Enum):
    SINGLE_VIEW = 'single_view'
    MV_ARTIFICIAL = 'mv_artificial'
    MV_REAL = 'mv_real'

    def __str__(self):
        return self.value

    @property
    def display_name(self) -> str:
        return {
            MethodKind.SINGLE_VIEW: 'Single-View',
            MethodKind.MV_ARTIFICIAL: 'MV-Artificial',
            MethodKind.MV_REAL: 'MV-Real',
        }[self]


@dataclass(frozen=True)
class MethodSpec:
    kind: MethodKind
    n_extra: int = 0
    setup: Optional[AugSetup] = None

    def __post_init__(self):
        if self.n_extra < 0:
            raise ConfigError(f'n_extra must be >= 0, got {self.n_extra}')
        if self.kind == MethodKind.SINGLE_VIEW and self.n_extra != 0:
            raise ConfigError('Single-View takes no extra images')
        if self.kind == MethodKind.MV_ARTIFICIAL and self.setup is None:
            raise ConfigError('MV-Artificial needs an augmentation setup')

    @classmethod
    def single_view(cls) -> 'MethodSpec':
        return cls(MethodKind.SINGLE_VIEW)

    @classmethod
    def mv_artificial(cls, setup: Optional[AugSetup] = None,
                      n_extra: int = DEFAULT_N_EXTRA) -> 'MethodSpec':
        return cls(MethodKind.MV_ARTIFICIAL, n_extra, setup or PRESETS[Preset.MILD])

    @classmethod
    def mv_real(cls, n_extra: int = DEFAULT_N_EXTRA) -> 'MethodSpec':
        return cls(MethodKind.MV_REAL, n_extra)

    def with_n_extra(self, n_extra: int) -> 'MethodSpec':
        if self.kind == MethodKind.SINGLE_VIEW:
            return self
        return replace(self, n_extra=n_extra)

    @property
    def name(self) -> str:
        """ stable key, e.g. mv_artificial[mild,5] """
        if self.kind == MethodKind.SINGLE_VIEW:
            return str(self.kind)
        if self.kind == MethodKind.MV_ARTIFICIAL:
            return f'{self.kind}[{self.setup.name},{self.n_extra}]'  # type: ignore[union-attr]
        return f'{self.kind}[{self.n_extra}]'

    @property
    def display_name(self) -> str:
        return self.kind.display_name

    def to_json(self) -> Dict:
        data: Dict = {'kind': str(self.kind)}
        if self.kind != MethodKind.SINGLE_VIEW:
            data['n_extra'] = self.n_extra
        if self.setup is not None:
            data['preset'] = str(self.setup.name)
            if self.setup != PRESETS[self.setup.name]:
                data['setup'] = self.setup.to_json()
        return data

    @classmethod
    def from_json(cls, data: Dict) -> 'MethodSpec':
        try:
            kind = MethodKind(data['kind'])
        except (KeyError, ValueError) as e:
            raise ConfigError(f'Unknown method: {data}') from e
        n_extra = int(data.get('n_extra', DEFAULT_N_EXTRA))
        if kind == MethodKind.SINGLE_VIEW:
            return cls.single_view()
        if kind == MethodKind.MV_REAL:
            return cls.mv_real(n_extra)
        setup = get_preset(data.get('preset', str(Preset.MILD)))
        overrides = {k: v for k, v in data.get('setup', {}).items()
                     if k not in ('name', 'pad_mode')}
        return cls.mv_artificial(replace(setup, **overrides), n_extra)


def aggregate_mean(scores: Sequence[Probability]) -> Probability:
    """
    unweighted mean in probability space. computed as min + mean of the
    offsets with an exactly rounded sum, so the result is independent of order
    and a list of identical scores returns that score bit for bit
    """
    if len(scores) == 0:
        raise EmptyList('cannot aggregate an empty list of scores')
    base = min(scores)
    mean = base + math.fsum(s - base for s in scores) / len(scores)
    return float(min(max(mean, 0.0), 1.0))


def _raster_of(ref: ImageRef, dataset: Optional[Dataset]) -> Optional[Raster]:
    return dataset.raster(ref) if dataset is not None else None


def predict(method: MethodSpec,
            original: ImageRef,
            extra_real: Sequence[ImageRef],
            scorer: Scorer,
            rng: Optional[np.random.Generator] = None,
            dataset: Optional[Dataset] = None) -> Probability:
    """
    one prediction for one lesion.
    Single-View scores the original, MV-Artificial averages it with n_extra
    augmented copies of itself, MV-Real averages it with the first n_extra
    set-aside photographs in stored order
    :param dataset: source of rasters, when the scorer needs them
    """
    original_item = ScoreItem(original, _raster_of(original, dataset))

    if method.kind == MethodKind.SINGLE_VIEW:
        return scorer.score_one(original_item)

    if method.kind == MethodKind.MV_REAL:
        if len(extra_real) < method.n_extra:
            raise InsufficientRealViews(
                f'lesion {original.lesion_id!r} has {len(extra_real)} set-aside images, '
                f'MV-Real needs {method.n_extra}')
        items = [original_item] + [ScoreItem(ref, _raster_of(ref, dataset))
                                   for ref in extra_real[:method.n_extra]]
        return aggregate_mean(scorer.score_batch(items))

    if original_item.raster is None:
        raise InvalidRaster(f'MV-Artificial needs the raster of lesion '
                            f'{original.lesion_id!r} image {original.index}')
    if rng is None:
        raise ValueError('MV-Artificial needs a random stream')
    views = generate_artificial_views(original_item.raster, method.n_extra,
                                      method.setup, rng)  # type: ignore[arg-type]
    items = [original_item] + [ScoreItem(original, view, artificial=True) for view in views]
    return aggregate_mean(scorer.score_batch(items))
