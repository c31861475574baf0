import hashlib
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Tuple, Union

import numpy as np


METRIC_DECIMALS = 3
P_VALUE_FLOOR = 1e-3

StreamKey = Union[str, int]


def _key_to_word(key: StreamKey) -> int:
    """ stable 32 bit word for a stream key; python's hash() is salted per process """
    digest = hashlib.sha256(f'{type(key).__name__}:{key}'.encode('utf-8')).digest()
    return int.from_bytes(digest[:4], 'little')


def derive_seed_sequence(seed: int, *keys: StreamKey) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed,
                                  spawn_key=tuple(_key_to_word(k) for k in keys))


def derive_rng(seed: int, *keys: StreamKey) -> np.random.Generator:
    """
    independent named stream for (seed, purpose, ...) so results never depend on
    the order in which streams are consumed
    example: derive_rng(7, 'downsample', 0, 'L1')
    """
    return np.random.default_rng(derive_seed_sequence(seed, *keys))


@dataclass(frozen=True)
class RandomStreams:
    """ a family of named streams under one master seed """
    seed: int
    prefix: Tuple[StreamKey, ...] = ()

    def child(self, *keys: StreamKey) -> 'RandomStreams':
        return RandomStreams(self.seed, self.prefix + tuple(keys))

    def rng(self, *keys: StreamKey) -> np.random.Generator:
        return derive_rng(self.seed, *self.prefix, *keys)


def check_null(value: Any) -> bool:
    """ check if a value is null """
    if value is None:
        return True
    if isinstance(value, str) and value.strip() == '':
        return True
    return bool(isinstance(value, float) and np.isnan(value))


def format_metric(value: float) -> str:
    return f'{value:.{METRIC_DECIMALS}f}'


def format_ci(point: float, ci: Tuple[float, float]) -> str:
    """ 0.871 (95% CI: 0.850-0.893) """
    low, high = ci
    return f'{format_metric(point)} (95% CI: {format_metric(low)}-{format_metric(high)})'


def format_p_value(p_value: Optional[float]) -> str:
    if p_value is None:
        return ''
    if p_value < P_VALUE_FLOOR:
        return '(p<0.001)'
    return f'(p={p_value:.3f})'


def unique_in_order(items: Iterable[Any]) -> list:
    seen = set()
    out = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out
