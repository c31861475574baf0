import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from mveval.core_model import Dataset, ImageRef, Label, LesionRecord, validate_dataset
from mveval.errors import ParseError
from mveval.file_io import FileIO, LocalIO
from mveval.utils import check_null, unique_in_order

logger = logging.getLogger('mveval')

# header row is line 1, the first data row line 2
_FIRST_DATA_LINE = 2
_PANDAS_LINE = re.compile(r'line (\d+)')


@dataclass
class ManifestSchema:
    LESION_ID: str = 'lesion_id'
    IMAGE_INDEX: str = 'image_index'
    LABEL: str = 'label'
    SOURCE: str = 'source'

    @classmethod
    def get_cols(cls) -> List[str]:
        return [cls.LESION_ID, cls.IMAGE_INDEX, cls.LABEL, cls.SOURCE]


def parse_manifest(path: str, file_io: Optional[FileIO] = None) -> Dataset:
    """
    comma-separated UTF-8 manifest, one row per image. columns beyond the
    schema become lesion metadata (taken from the lesion's first row)
    :raises ParseError: with the 1-based line number where it applies
    :raises DatasetValidationError: for a well-formed file that describes an invalid dataset
    """
    manifest = _load_manifest(path, file_io or LocalIO())
    manifest = _check_columns(manifest, path)
    manifest = _parse_indices(manifest, path)
    records = _to_records(manifest, path)
    logger.info(f'parsed {len(records)} lesions from {path}')
    return validate_dataset(records)


def _load_manifest(path: str, file_io: FileIO) -> pd.DataFrame:
    try:
        return file_io.load_file(path, ftype='csv')
    except pd.errors.EmptyDataError:
        raise ParseError(f'{path}: manifest is empty', 1) from None
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        raise ParseError(f'{path}: malformed row: {e}', int(match.group(1)) if match else None) from e
    except UnicodeDecodeError as e:
        raise ParseError(f'{path}: manifest is not UTF-8 text') from e
    except OSError as e:
        raise ParseError(f'{path}: cannot read manifest: {e}') from e


def _check_columns(manifest: pd.DataFrame, path: str) -> pd.DataFrame:
    manifest = manifest.rename(columns=lambda c: str(c).strip())
    missing = [col for col in ManifestSchema.get_cols() if col not in manifest.columns]
    if missing:
        raise ParseError(f'{path}: missing column(s): {", ".join(missing)}', 1)

    for col in ManifestSchema.get_cols():
        for row_ind, value in manifest[col].items():
            if check_null(value):
                raise ParseError(f'{path}: empty {col}', _FIRST_DATA_LINE + int(row_ind))
        manifest[col] = manifest[col].str.strip()
    return manifest


def _parse_indices(manifest: pd.DataFrame, path: str) -> pd.DataFrame:
    indices = pd.to_numeric(manifest[ManifestSchema.IMAGE_INDEX], errors='coerce')
    for row_ind, value in indices.items():
        if pd.isna(value) or value != int(value):
            raw = manifest.loc[row_ind, ManifestSchema.IMAGE_INDEX]
            raise ParseError(f'{path}: image_index {raw!r} is not an integer',
                             _FIRST_DATA_LINE + int(row_ind))
    manifest[ManifestSchema.IMAGE_INDEX] = indices.astype(int)
    return manifest


def _to_records(manifest: pd.DataFrame, path: str) -> List[LesionRecord]:
    metadata_cols = [col for col in manifest.columns if col not in ManifestSchema.get_cols()]
    records = []
    for lesion_id in unique_in_order(manifest[ManifestSchema.LESION_ID]):
        rows = manifest[manifest[ManifestSchema.LESION_ID] == lesion_id]
        labels = unique_in_order(rows[ManifestSchema.LABEL])
        if len(labels) > 1:
            conflict = rows.index[rows[ManifestSchema.LABEL] != labels[0]][0]
            raise ParseError(f'{path}: lesion {lesion_id!r} has conflicting labels {labels}',
                             _FIRST_DATA_LINE + int(conflict))

        # images in index order, ties keep row order
        rows = rows.sort_values(ManifestSchema.IMAGE_INDEX, kind='stable')
        images = tuple(ImageRef(lesion_id, int(index), source)
                       for index, source in zip(rows[ManifestSchema.IMAGE_INDEX],
                                                rows[ManifestSchema.SOURCE]))
        first = manifest.loc[rows.index.min()]
        metadata = {col: str(first[col]) for col in metadata_cols if not check_null(first[col])}
        records.append(LesionRecord(lesion_id, Label.parse(labels[0]), images, metadata))
    return records


def manifest_frame(dataset: Dataset) -> pd.DataFrame:
    metadata_cols = sorted({key for record in dataset for key in record.metadata})
    rows: List[Dict[str, object]] = []
    for record in dataset:
        for ref in record.images:
            row: Dict[str, object] = {
                ManifestSchema.LESION_ID: record.lesion_id,
                ManifestSchema.IMAGE_INDEX: ref.index,
                ManifestSchema.LABEL: str(record.label),
                ManifestSchema.SOURCE: ref.source,
            }
            row.update({col: record.metadata.get(col, '') for col in metadata_cols})
            rows.append(row)
    return pd.DataFrame(rows, columns=ManifestSchema.get_cols() + metadata_cols)


def emit_manifest(dataset: Dataset, path: str, file_io: Optional[FileIO] = None) -> str:
    file_io = file_io or LocalIO(str(Path(path).parent))
    return file_io.save_file(path, manifest_frame(dataset), ftype='csv')
