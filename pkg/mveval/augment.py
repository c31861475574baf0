"""
MV-Artificial view generation: seeded random flips, rotation, zoom, perspective
warp and lighting applied to one raster.

Geometric stages (rotate, zoom, warp) are composed into a single inverse
coordinate map and sampled once with bilinear interpolation, so the fixed
order flip -> rotate -> zoom -> warp -> lighting holds without accumulating
resampling blur. Pixels mapped from outside the frame are filled with 0.
"""
import logging
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from scipy import ndimage
from scipy.special import expit, logit

from mveval.core_model import Raster, validate_raster
from mveval.errors import ConfigError

logger = logging.getLogger('mveval')

DEFAULT_APPLY_PROB = 0.75
FLIP_PROB = 0.5
LIGHTING_GAIN = 4.0
LIGHTING_EPS = 1e-6
# sampling coordinates are snapped to this many decimals so exact
# rotations by multiples of 90 degrees land on pixel centers
COORD_DECIMALS = 9


class Preset(Enum):
    MILD = 'mild'
    MODERATE = 'moderate'
    STRONG = 'strong'
    SEVERE = 'severe'
    EXTREME = 'extreme'

    def __str__(self):
        return self.value


class PadMode(Enum):
    ZEROS = 'zeros'

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class AugSetup:
    name: Preset
    flip_vert: bool
    max_rotate: float
    max_zoom: float
    max_lighting: float
    max_warp: float
    pad_mode: PadMode = PadMode.ZEROS
    apply_prob: float = DEFAULT_APPLY_PROB
    do_flip: bool = True

    def __post_init__(self):
        if self.max_zoom < 1.0:
            raise ConfigError(f'max_zoom must be >= 1, got {self.max_zoom}')
        if not 0.0 <= self.max_lighting < 1.0 or not 0.0 <= self.max_warp < 1.0:
            raise ConfigError('max_lighting and max_warp must lie in [0, 1)')
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ConfigError(f'apply_prob must lie in [0, 1], got {self.apply_prob}')
        if self.max_rotate < 0:
            raise ConfigError(f'max_rotate must be >= 0, got {self.max_rotate}')

    def to_json(self) -> Dict:
        data = asdict(self)
        data['name'] = str(self.name)
        data['pad_mode'] = str(self.pad_mode)
        return data


PRESETS: Dict[Preset, AugSetup] = {
    Preset.MILD: AugSetup(Preset.MILD, True, 90.0, 1.1, 0.2, 0.2),
    Preset.MODERATE: AugSetup(Preset.MODERATE, True, 90.0, 1.2, 0.3, 0.3),
    Preset.STRONG: AugSetup(Preset.STRONG, True, 90.0, 1.3, 0.4, 0.4),
    Preset.SEVERE: AugSetup(Preset.SEVERE, True, 90.0, 1.4, 0.5, 0.5),
    Preset.EXTREME: AugSetup(Preset.EXTREME, True, 90.0, 1.5, 0.6, 0.6),
}


def get_preset(name) -> AugSetup:
    try:
        return PRESETS[Preset(str(name).lower())]
    except ValueError as e:
        raise ConfigError(f'Unknown augmentation preset: {name}') from e


def no_op_setup(name: Preset = Preset.MILD) -> AugSetup:
    """ a setup whose every draw is the identity """
    return replace(PRESETS[name], apply_prob=0.0, do_flip=False)


@dataclass(frozen=True)
class TransformParams:
    flip_h: bool = False
    flip_v: bool = False
    rotate_deg: float = 0.0
    zoom: float = 1.0
    lighting: float = 0.0
    warp: float = 0.0

    @property
    def is_identity(self) -> bool:
        return self == TransformParams()

    @property
    def is_geometric_identity(self) -> bool:
        return self.rotate_deg == 0.0 and self.zoom == 1.0 and self.warp == 0.0


def sample_transform(setup: AugSetup, rng: np.random.Generator) -> TransformParams:
    """
    every random number is drawn whether or not its transform ends up active,
    so one draw always consumes the same amount of the stream
    """
    flip_draws = rng.random(2)
    active = rng.random(4) < setup.apply_prob
    rotate = rng.uniform(-setup.max_rotate, setup.max_rotate)
    zoom = rng.uniform(1.0, setup.max_zoom)
    lighting = rng.uniform(-setup.max_lighting, setup.max_lighting)
    warp = rng.uniform(-setup.max_warp, setup.max_warp)

    flip_h = bool(setup.do_flip and flip_draws[0] < FLIP_PROB)
    flip_v = bool(setup.do_flip and setup.flip_vert and flip_draws[1] < FLIP_PROB)

    return TransformParams(
        flip_h=flip_h,
        flip_v=flip_v,
        rotate_deg=float(rotate) if active[0] else 0.0,
        zoom=float(zoom) if active[1] else 1.0,
        lighting=float(lighting) if active[2] else 0.0,
        warp=float(warp) if active[3] else 0.0,
    )


def _rotation_inverse(rotate_deg: float) -> np.ndarray:
    """ inverse of a counterclockwise rotation about the origin, in (x, y) with y down """
    theta = np.deg2rad(rotate_deg)
    cos, sin = np.cos(theta), np.sin(theta)
    return np.array([[cos, -sin, 0.0],
                     [sin, cos, 0.0],
                     [0.0, 0.0, 1.0]])


def _zoom_inverse(zoom: float) -> np.ndarray:
    return np.diag([1.0 / zoom, 1.0 / zoom, 1.0])


def _warp_corners(warp: float, width: int, height: int) -> np.ndarray:
    """
    corner displacement of the perspective warp, centered coordinates.
    top corners move inward and bottom corners outward by |warp| * (min(w, h) - 1) / 2,
    which stays within the min(w, h) / 2 bound and never folds the frame
    (reversed for negative warp)
    """
    shift = warp * (min(width, height) - 1) / 2.0
    half_w, half_h = (width - 1) / 2.0, (height - 1) / 2.0
    return np.array([[-half_w + shift, -half_h],
                     [half_w - shift, -half_h],
                     [half_w + shift, half_h],
                     [-half_w - shift, half_h]])


def _homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """ 3x3 projective map sending the 4 src points onto the 4 dst points """
    rows, rhs = [], []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        rhs.extend([u, v])
    h = np.linalg.solve(np.array(rows, dtype=float), np.array(rhs, dtype=float))
    return np.append(h, 1.0).reshape(3, 3)


def _warp_inverse(warp: float, width: int, height: int) -> np.ndarray:
    half_w, half_h = (width - 1) / 2.0, (height - 1) / 2.0
    frame = np.array([[-half_w, -half_h], [half_w, -half_h],
                      [half_w, half_h], [-half_w, half_h]])
    # maps output coordinates back onto the undistorted frame
    return _homography(_warp_corners(warp, width, height), frame)


def _geometric_resample(img: Raster, params: TransformParams) -> Raster:
    height, width = img.shape[:2]
    center_x, center_y = (width - 1) / 2.0, (height - 1) / 2.0

    inverse = np.eye(3)
    if params.warp != 0.0 and min(width, height) > 1:
        inverse = _warp_inverse(params.warp, width, height) @ inverse
    if params.zoom != 1.0:
        inverse = _zoom_inverse(params.zoom) @ inverse
    if params.rotate_deg != 0.0:
        inverse = _rotation_inverse(params.rotate_deg) @ inverse

    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    points = np.stack([xs.ravel() - center_x, ys.ravel() - center_y, np.ones(xs.size)])
    src = inverse @ points
    src_x = np.round(src[0] / src[2] + center_x, COORD_DECIMALS)
    src_y = np.round(src[1] / src[2] + center_y, COORD_DECIMALS)

    out = np.empty_like(img)
    for channel in range(img.shape[2]):
        out[..., channel] = ndimage.map_coordinates(
            img[..., channel], [src_y, src_x], order=1, mode='constant', cval=0.0
        ).reshape(height, width)
    return out


def _adjust_lighting(img: Raster, lighting: float) -> Raster:
    clamped = np.clip(img, LIGHTING_EPS, 1.0 - LIGHTING_EPS)
    return expit(logit(clamped) + lighting * LIGHTING_GAIN)


def apply_transform(img: Raster, params: TransformParams) -> Raster:
    """
    flip -> rotate -> zoom -> warp -> lighting; inactive stages are skipped,
    so the identity params return an exact copy. 1x1 rasters are never
    resampled geometrically
    """
    validate_raster(img)
    out = np.array(img, dtype=float, copy=True)

    if params.flip_h:
        out = out[:, ::-1, :]
    if params.flip_v:
        out = out[::-1, :, :]

    is_single_pixel = out.shape[0] == 1 and out.shape[1] == 1
    if not params.is_geometric_identity and not is_single_pixel:
        out = _geometric_resample(np.ascontiguousarray(out), params)

    if params.lighting != 0.0:
        out = _adjust_lighting(out, params.lighting)

    return np.clip(np.ascontiguousarray(out), 0.0, 1.0)


def generate_artificial_views(img: Raster,
                              n: int,
                              setup: AugSetup,
                              rng: np.random.Generator,
                              params_out: Optional[List[TransformParams]] = None
                              ) -> List[Raster]:
    """
    n independent augmented copies of img. deterministic given the stream state
    :param params_out: when given, the sampled params are appended to it
    """
    if n < 0:
        raise ValueError(f'number of artificial views must be >= 0, got {n}')
    views = []
    for _ in range(n):
        params = sample_transform(setup, rng)
        if params_out is not None:
            params_out.append(params)
        views.append(apply_transform(img, params))
    logger.debug(f'generated {n} artificial views with preset {setup.name}')
    return views
