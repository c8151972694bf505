#!/usr/bin/env python3

"""
Run configuration: a JSON document of stage sections with flat keys,
merged over the packaged defaults, then overridden from the command line.
"""

from __future__ import annotations
from typing import Any, Dict, Iterable, List, Mapping, Optional
from copy import deepcopy
from pathlib import Path
import json
import logging

from .types import ClusterMethod, EmbedMode, EmbedSource, LossKind
from .errors import ConfigurationError
from .resources import load_json_resource
from .utils import derive_seed

logger = logging.getLogger(__name__)

DEFAULTS_NAME = 'default_config.json'
STAGE_ORDER = (
    'ingest', 'synth', 'train', 'embed', 'cluster',
    'stability', 'evaluate', 'forecast', 'report')


def default_config() -> Dict[str, Any]:
    return load_json_resource(DEFAULTS_NAME)


def _merge(base: Dict[str, Any], update: Mapping[str, Any], trail: str = '') -> Dict[str, Any]:
    for key, value in update.items():
        name = f'{trail}{key}'
        if key not in base:
            raise ConfigurationError(f'Unknown configuration key: {name}')
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigurationError(f'Configuration key {name} must be a section')
            _merge(base[key], value, f'{name}.')
        else:
            base[key] = deepcopy(value)
    return base


def parse_override(text: str) -> Dict[str, Any]:
    """'section.key=value' to a nested update; values are read as JSON when possible"""
    if '=' not in text:
        raise ConfigurationError(f'Override must look like section.key=value: {repr(text)}')
    path, raw = text.split('=', 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    update: Dict[str, Any] = dict()
    node = update
    parts = path.strip().split('.')
    for part in parts[:-1]:
        node = node.setdefault(part, dict())
    node[parts[-1]] = value
    return update


class RunConfig:
    """Validated view of a merged configuration document"""

    def __init__(self, data: Mapping[str, Any]):
        self.data = _merge(default_config(), data)

    @classmethod
    def load(
        cls,
        path: Optional[Path] = None,
        overrides: Iterable[Mapping[str, Any]] = (),
    ) -> RunConfig:
        data: Dict[str, Any] = dict()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigurationError(f'Configuration file not found: {str(path)}')
            try:
                with path.open(encoding='utf-8') as file:
                    data = json.load(file)
            except json.JSONDecodeError as e:
                raise ConfigurationError(f'{str(path)}: invalid JSON: {e}') from e
        config = cls(data)
        for update in overrides:
            _merge(config.data, update)
        return config

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self.data[section]

    @property
    def seed(self) -> int:
        return int(self.data['seed'])

    @property
    def out_dir(self) -> Path:
        return Path(self.data['paths']['out_dir'])

    def path(self, name: str) -> Optional[Path]:
        value = self.data['paths'][name]
        return None if value is None else Path(value)

    def enabled(self, stage: str) -> bool:
        return bool(self.data['stages'][stage])

    def enabled_stages(self) -> List[str]:
        return [stage for stage in STAGE_ORDER if self.enabled(stage)]

    def stage_seed(self, stage: str) -> int:
        return derive_seed(self.seed, stage)

    def only(self, *stages: str) -> RunConfig:
        """Copy with exactly the given stages enabled"""
        copy = RunConfig(deepcopy(self.data))
        for stage in STAGE_ORDER:
            copy.data['stages'][stage] = stage in stages
        return copy

    def to_dict(self) -> Dict[str, Any]:
        return deepcopy(self.data)

    def validate(self) -> RunConfig:
        stages = self.enabled_stages()
        if not stages:
            raise ConfigurationError('No stage is enabled')
        if self.enabled('ingest') and self.enabled('synth'):
            raise ConfigurationError('Stages ingest and synth both produce entities; enable one')
        if self.enabled('ingest'):
            for name in ('census', 'cases_dir'):
                if self.path(name) is None:
                    raise ConfigurationError(f'Ingestion needs paths.{name}')
            for name in ('census', 'usda', 'cases_dir'):
                path = self.path(name)
                if path is not None and not path.exists():
                    raise ConfigurationError(f'Input path not found: {str(path)}')
        elif not self.enabled('synth') and set(stages) - {'report'}:
            entities = self.path('entities_dir')
            if entities is None:
                raise ConfigurationError('Without ingest or synth, paths.entities_dir is needed')
            if not entities.is_dir():
                raise ConfigurationError(f'Entity directory not found: {str(entities)}')

        train = self['train']
        try:
            LossKind.from_key(train['loss'])
            EmbedSource.from_key(self['embed']['source'])
            for mode in self['embed']['modes']:
                EmbedMode.from_key(mode)
            for method in self['cluster']['methods']:
                ClusterMethod.from_key(method)
            ClusterMethod.from_key(self['forecast']['method'])
            EmbedMode.from_key(self['forecast']['mode'])
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        if 1 not in train['offsets']:
            raise ConfigurationError('train.offsets must include 1 for recursive forecasting')
        if any(int(pit) < 1 for pit in self['embed']['pits']):
            raise ConfigurationError('embed.pits must be positive')
        if self.enabled('stability') and self['stability']['reference_pit'] not in self['embed']['pits']:
            raise ConfigurationError('stability.reference_pit must be one of embed.pits')
        if self.enabled('forecast') and self['forecast']['pit'] not in self['embed']['pits']:
            raise ConfigurationError('forecast.pit must be one of embed.pits')
        if int(self['cluster']['k']) < 1:
            raise ConfigurationError('cluster.k must be positive')
        return self


def select_keys(available: Iterable[str], selection: Any) -> List[str]:
    """Keys named by a 'ALL' / list / comma separated selection, in store order"""
    available = [str(key) for key in available]
    if selection in (None, 'ALL', 'all'):
        return available
    if isinstance(selection, str):
        selection = [part for part in selection.split(',') if part.strip()]
    wanted = [str(item).strip().zfill(5) for item in selection]
    missing = [key for key in wanted if key not in available]
    if missing:
        raise ConfigurationError(f'Unknown FIPS selected: {", ".join(missing)}')
    return wanted
