"""
Decoding of lesion photographs into rasters: crop the near-black margin left
by the dermatoscope, resize bilinearly to a square and scale to [0, 1].
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from mveval.core_model import Dataset, ImageRef, Raster, RasterKey, validate_raster
from mveval.errors import UnreadableImage, UnsupportedFormat

logger = logging.getLogger('mveval')

RASTER_SIZE = 300
CROP_THRESHOLD = 0.04
SUPPORTED_FORMATS = ('PNG', 'JPEG')
# modes that convert losslessly to 8 bit RGB
_CONVERTIBLE_MODES = ('RGB', 'RGBA', 'L', 'LA', 'P')


def read_image(path: str) -> np.ndarray:
    """ 8 bit RGB array of shape (h, w, 3) """
    try:
        with Image.open(path) as img:
            if img.format not in SUPPORTED_FORMATS:
                raise UnsupportedFormat(f'{path}: {img.format} images are not supported')
            if img.mode not in _CONVERTIBLE_MODES:
                raise UnsupportedFormat(f'{path}: image mode {img.mode} is not 8 bit RGB')
            img.load()
            return np.asarray(img.convert('RGB'), dtype=np.uint8)
    except UnidentifiedImageError as e:
        raise UnreadableImage(f'{path}: cannot identify image data') from e
    except (OSError, SyntaxError) as e:
        raise UnreadableImage(f'{path}: {e}') from e


def margin_bounds(pixels: np.ndarray, threshold: float = CROP_THRESHOLD) -> Tuple[int, int, int, int]:
    """
    (top, bottom, left, right) of the region left after stripping full border
    rows and columns where every channel of every pixel is below threshold
    """
    dark = np.all(pixels.astype(float) / 255.0 < threshold, axis=2)
    bright_rows = np.flatnonzero(~dark.all(axis=1))
    bright_cols = np.flatnonzero(~dark.all(axis=0))
    if bright_rows.size == 0 or bright_cols.size == 0:
        return 0, pixels.shape[0], 0, pixels.shape[1]
    return bright_rows[0], bright_rows[-1] + 1, bright_cols[0], bright_cols[-1] + 1


def crop_black_margin(pixels: np.ndarray, threshold: float = CROP_THRESHOLD) -> np.ndarray:
    top, bottom, left, right = margin_bounds(pixels, threshold)
    return pixels[top:bottom, left:right]


def preprocess(pixels: np.ndarray, size: int = RASTER_SIZE,
               crop_threshold: float = CROP_THRESHOLD) -> Raster:
    cropped = crop_black_margin(pixels, crop_threshold)
    if cropped.shape[:2] != (size, size):
        cropped = np.asarray(Image.fromarray(cropped).resize((size, size), Image.Resampling.BILINEAR))
    return validate_raster(cropped.astype(float) / 255.0)


def read_raster(path: str, size: int = RASTER_SIZE, crop_threshold: float = CROP_THRESHOLD) -> Raster:
    return preprocess(read_image(path), size, crop_threshold)


def write_raster(raster: Raster, path: str) -> str:
    """ 8 bit PNG; parent directories are created """
    validate_raster(raster, path)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(raster * 255.0).astype(np.uint8)).save(path, format='PNG')
    return str(path)


def resolve_source(ref: ImageRef, base_dir: str) -> str:
    source = Path(ref.source)
    return str(source if source.is_absolute() else Path(base_dir, source))


def load_rasters(dataset: Dataset,
                 base_dir: str = '.',
                 size: int = RASTER_SIZE,
                 crop_threshold: float = CROP_THRESHOLD,
                 workers: int = 1) -> Dataset:
    """
    decode every image whose source is a path; score-table keys are skipped
    :param base_dir: directory relative sources are resolved against
    """
    refs: List[ImageRef] = [ref for record in dataset for ref in record.images
                            if not ref.is_score_key]
    if not refs:
        return dataset

    def _load(ref: ImageRef) -> Raster:
        return read_raster(resolve_source(ref, base_dir), size, crop_threshold)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            loaded = list(pool.map(_load, refs))
    else:
        loaded = [_load(ref) for ref in refs]

    rasters: Dict[RasterKey, Raster] = {ref.key: raster for ref, raster in zip(refs, loaded)}
    logger.info(f'loaded {len(rasters)} rasters at {size}x{size}')
    return dataset.with_rasters(rasters)


def write_dataset_rasters(dataset: Dataset, base_dir: str,
                          rasters: Optional[Dict[RasterKey, Raster]] = None) -> List[str]:
    """ write each in-memory raster to its source path under base_dir """
    rasters = rasters if rasters is not None else dict(dataset.rasters)
    written = []
    for record in dataset:
        for ref in record.images:
            if not ref.is_score_key and ref.key in rasters:
                written.append(write_raster(rasters[ref.key], resolve_source(ref, base_dir)))
    return written
