import json
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
import yaml

from mveval.errors import ConfigError, ParseError


class Ftype:
    JSON = 'json'
    YAML = 'yaml'
    CSV = 'csv'
    PARQUET = 'parquet'
    TEXT = 'text'


_EXTENSIONS = {
    '.json': Ftype.JSON,
    '.yaml': Ftype.YAML,
    '.yml': Ftype.YAML,
    '.csv': Ftype.CSV,
    '.parquet': Ftype.PARQUET,
    '.pq': Ftype.PARQUET,
    '.md': Ftype.TEXT,
    '.txt': Ftype.TEXT,
    '.html': Ftype.TEXT,
}

SCORE_FLOAT_FORMAT = '%.12g'


def infer_ftype(path: str, ftype: Optional[str] = None) -> str:
    if ftype is not None:
        return ftype
    suffix = Path(path).suffix.lower()
    if suffix not in _EXTENSIONS:
        raise ValueError(f'Unknown file type for extension: {path}')
    return _EXTENSIONS[suffix]


def _is_within(path: Path, root: str) -> bool:
    """ compared resolved, so './out/x' and 'out/x' both lie under './out' """
    try:
        path.resolve().relative_to(Path(root).resolve())
    except ValueError:
        return False
    return True


class FileIO(ABC):
    def __init__(self, data_root: str):
        self._data_root = data_root

    @property
    def data_root(self) -> str:
        return self._data_root

    def _add_root_prefix(self, path: str) -> str:
        candidate = Path(path)
        if candidate.is_absolute() or _is_within(candidate, self._data_root):
            return str(candidate)
        return str(Path(self._data_root, candidate))

    def save_file(self, save_path: str, data: Any, ftype: Optional[str] = None) -> str:
        save_path = self._add_root_prefix(save_path)
        ftype = infer_ftype(save_path, ftype)
        if ftype == Ftype.JSON:
            self._save_json(data, save_path)
        elif ftype == Ftype.YAML:
            self._save_text(yaml.safe_dump(data, sort_keys=False), save_path)
        elif ftype == Ftype.CSV:
            self._save_csv(data, save_path)
        elif ftype == Ftype.PARQUET:
            self._save_parquet(data, save_path)
        else:
            self._save_text(data, save_path)
        return save_path

    def load_file(self, load_path: str, ftype: Optional[str] = None) -> Any:
        load_path = self._add_root_prefix(load_path)
        ftype = infer_ftype(load_path, ftype)
        if ftype == Ftype.JSON:
            return self._read_json(load_path)
        elif ftype == Ftype.YAML:
            return self.read_yaml(load_path)
        elif ftype == Ftype.CSV:
            return self._read_csv(load_path)
        elif ftype == Ftype.PARQUET:
            return self._read_parquet(load_path)
        return self._read_text(load_path)

    @abstractmethod
    def _read_json(self, load_path: str) -> Union[List, Dict[str, Any]]:
        pass

    @abstractmethod
    def _read_csv(self, load_path: str) -> pd.DataFrame:
        pass

    @abstractmethod
    def _read_parquet(self, load_path: str) -> pd.DataFrame:
        pass

    @abstractmethod
    def _read_text(self, load_path: str) -> str:
        pass

    @abstractmethod
    def _save_json(self, data: Any, save_path: str) -> None:
        pass

    @abstractmethod
    def _save_csv(self, data: pd.DataFrame, save_path: str) -> None:
        pass

    @abstractmethod
    def _save_parquet(self, data: pd.DataFrame, save_path: str) -> None:
        pass

    @abstractmethod
    def _save_text(self, data: str, save_path: str) -> None:
        pass

    @abstractmethod
    def read_yaml(self, load_path: str) -> Any:
        pass


class LocalIO(FileIO):
    """
    files under a local data root. text is written with '\n' line endings and
    UTF-8 so identical content always gives identical bytes
    """
    def __init__(self, data_root: str = '.'):
        super().__init__(data_root)

    @staticmethod
    def _ensure_parent(save_path: str) -> None:
        Path(save_path).parent.mkdir(parents=True, exist_ok=True)

    def read_yaml(self, load_path: str) -> Any:
        load_path = self._add_root_prefix(load_path)
        with open(load_path, 'r', encoding='utf-8') as f:
            return yaml.safe_load(f)

    def _read_json(self, load_path: str) -> Union[List, Dict[str, Any]]:
        with open(load_path, encoding='utf-8') as f:
            try:
                return json.load(f)
            except json.JSONDecodeError as e:
                raise ParseError(f'{load_path}: invalid JSON: {e.msg}', e.lineno) from e

    def _read_csv(self, load_path: str) -> pd.DataFrame:
        return pd.read_csv(load_path, dtype=str, keep_default_na=False, encoding='utf-8')

    def _read_parquet(self, load_path: str) -> pd.DataFrame:
        try:
            return pd.read_parquet(load_path)
        except Exception as e:
            raise ValueError(f'Could not read parquet file {load_path}: {e}') from e

    def _read_text(self, load_path: str) -> str:
        with open(load_path, encoding='utf-8') as f:
            return f.read()

    def _save_json(self, data: Any, save_path: str) -> None:
        self._save_text(json.dumps(data, indent=2, ensure_ascii=False) + '\n', save_path)

    def _save_csv(self, data: pd.DataFrame, save_path: str) -> None:
        if not isinstance(data, pd.DataFrame):
            raise ValueError(f'Unknown data type for csv: {type(data)}')
        self._save_text(data.to_csv(index=False, lineterminator='\n',
                                    float_format=SCORE_FLOAT_FORMAT), save_path)

    def _save_parquet(self, data: pd.DataFrame, save_path: str) -> None:
        if not isinstance(data, pd.DataFrame):
            raise ValueError(f'Unknown data type for parquet: {type(data)}')
        self._ensure_parent(save_path)
        data.to_parquet(save_path, index=False)

    def _save_text(self, data: str, save_path: str) -> None:
        self._ensure_parent(save_path)
        with open(save_path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(data)


def load_score_table(path: str, file_io: Optional[FileIO] = None):
    from mveval.scorer import ScoreTable, ScoreTableSchema

    file_io = file_io or LocalIO()
    try:
        df = file_io.load_file(path)
    except OSError as e:
        raise ConfigError(f'cannot read score table {path}: {e}') from e
    try:
        df = df.astype({ScoreTableSchema.IMAGE_INDEX: int, ScoreTableSchema.SCORE: float})
    except (KeyError, ValueError) as e:
        raise ConfigError(f'score table {path} is malformed: {e}') from e
    return ScoreTable.from_frame(df)


def save_score_table(table, path: str, file_io: Optional[FileIO] = None) -> str:
    file_io = file_io or LocalIO()
    return file_io.save_file(path, table.to_frame())
