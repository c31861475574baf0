"""
Layered configuration: dataclass defaults, then settings.yaml, then an
optional JSON or YAML config file, then environment variables, then
command-line flags.
"""
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml

from mveval.augment import get_preset
from mveval.errors import ConfigError
from mveval.file_io import FileIO, LocalIO
from mveval.inference import MethodKind
from mveval.protocol import ExperimentConfig
from mveval.rasters import CROP_THRESHOLD, RASTER_SIZE
from mveval.report import FORMATS

logger = logging.getLogger('mveval')

SETTINGS_FILE = 'settings.yaml'
ENV_SETTINGS = 'MVEVAL_SETTINGS'
ENV_WORKERS = 'MVEVAL_WORKERS'

SECTIONS = ('experiment', 'preprocessing', 'report')


@dataclass(frozen=True)
class PreprocessConfig:
    raster_size: int = RASTER_SIZE
    crop_threshold: float = CROP_THRESHOLD

    def __post_init__(self):
        if self.raster_size < 1:
            raise ConfigError(f'raster_size must be >= 1, got {self.raster_size}')
        if not 0.0 <= self.crop_threshold < 1.0:
            raise ConfigError(f'crop_threshold must lie in [0, 1), got {self.crop_threshold}')


@dataclass(frozen=True)
class ReportConfig:
    formats: Tuple[str, ...] = FORMATS
    plots: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'formats', tuple(self.formats))
        unknown = [f for f in self.formats if f not in FORMATS]
        if unknown:
            raise ConfigError(f'unknown report formats {unknown}, choose from {list(FORMATS)}')


@dataclass(frozen=True)
class HarnessConfig:
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    preprocessing: PreprocessConfig = field(default_factory=PreprocessConfig)
    report: ReportConfig = field(default_factory=ReportConfig)

    def to_json(self) -> Dict[str, Any]:
        return {
            'experiment': self.experiment.to_json(include_runtime=True),
            'preprocessing': {'raster_size': self.preprocessing.raster_size,
                              'crop_threshold': self.preprocessing.crop_threshold},
            'report': {'formats': list(self.report.formats), 'plots': self.report.plots},
        }


def _read_mapping(path: str, file_io: FileIO) -> Dict[str, Any]:
    if Path(path).suffix.lower() not in ('.json', '.yaml', '.yml'):
        raise ConfigError(f'config file must be JSON or YAML: {path}')
    try:
        data = file_io.load_file(path)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f'cannot read config file {path}: {e}') from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f'{path}: top level must be a mapping')
    return data


def _sections(data: Dict[str, Any], path: str) -> Dict[str, Dict[str, Any]]:
    """ a config file either has the three sections or is a flat experiment mapping """
    if not any(key in SECTIONS for key in data):
        return {'experiment': dict(data)}
    unknown = [key for key in data if key not in SECTIONS]
    if unknown:
        raise ConfigError(f'{path}: unknown sections {unknown}')
    return {section: dict(data.get(section) or {}) for section in SECTIONS}


def _merge(base: Dict[str, Dict[str, Any]], update: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
    merged = {section: dict(base.get(section, {})) for section in SECTIONS}
    for section, values in update.items():
        merged[section].update(values)
    return merged


def default_settings_path() -> Optional[str]:
    path = os.environ.get(ENV_SETTINGS, SETTINGS_FILE)
    return path if Path(path).is_file() else None


def _env_overrides() -> Dict[str, Dict[str, Any]]:
    workers = os.environ.get(ENV_WORKERS)
    if workers is None:
        return {}
    try:
        return {'experiment': {'workers': int(workers)}}
    except ValueError:
        raise ConfigError(f'{ENV_WORKERS} must be an integer, got {workers!r}') from None


def build_config(config_path: Optional[str] = None,
                 overrides: Optional[Dict[str, Any]] = None,
                 settings_path: Optional[str] = None,
                 file_io: Optional[FileIO] = None) -> HarnessConfig:
    """
    :param overrides: experiment fields from the command line; None values are ignored
    :param settings_path: defaults file, settings.yaml in the working directory when omitted
    """
    file_io = file_io or LocalIO()
    layers: Dict[str, Dict[str, Any]] = {section: {} for section in SECTIONS}

    settings_path = settings_path or default_settings_path()
    if settings_path:
        layers = _merge(layers, _sections(_read_mapping(settings_path, file_io), settings_path))
    if config_path:
        layers = _merge(layers, _sections(_read_mapping(config_path, file_io), config_path))
    layers = _merge(layers, _env_overrides())
    layers = _merge(layers, {'experiment': {k: v for k, v in (overrides or {}).items()
                                            if v is not None}})

    try:
        return HarnessConfig(experiment=ExperimentConfig.from_json(layers['experiment']),
                             preprocessing=PreprocessConfig(**layers['preprocessing']),
                             report=ReportConfig(**layers['report']))
    except TypeError as e:
        raise ConfigError(f'invalid configuration: {e}') from e


def with_preset(config: ExperimentConfig, preset_name: Optional[str]) -> ExperimentConfig:
    """ every MV-Artificial method switched to the named preset """
    if preset_name is None:
        return config
    setup = get_preset(preset_name)
    methods = tuple(replace(m, setup=setup) if m.kind == MethodKind.MV_ARTIFICIAL else m
                    for m in config.methods)
    return replace(config, methods=methods)
