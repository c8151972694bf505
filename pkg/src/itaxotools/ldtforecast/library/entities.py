#!/usr/bin/env python3

"""Repair, normalization and static feature assembly of county records"""

from __future__ import annotations
from typing import Dict, Iterable, List, Mapping, Optional, Tuple
from dataclasses import dataclass, field
from pathlib import Path
import json
import logging

import numpy as np
import pandas as pd

from .errors import DataError
from .model import CaseSeries, EntityKey, EntityRecord, StaticFeatures

logger = logging.getLogger(__name__)

POPULATION_FEATURE = 'TOT_POP_AG0'
MANIFEST_NAME = 'features.json'


class JoinError(DataError):
    def __init__(self, keys: List[str]):
        self.keys = keys
        super().__init__(f'No static features for: {", ".join(keys)}')


def repair_monotone(series: np.ndarray) -> np.ndarray:
    """Hold the last reported value through any drop of a cumulative count"""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise DataError('Cannot repair an empty series')
    return np.maximum.accumulate(series)


def normalize_by_population(series: np.ndarray, population: float) -> np.ndarray:
    if not population or population <= 0:
        raise DataError(f'Population must be positive, got {population}')
    return np.asarray(series, dtype=float) / float(population)


def repair_series(series: CaseSeries) -> CaseSeries:
    return series.with_values(np.stack([
        repair_monotone(series.cumulative_infections),
        repair_monotone(series.cumulative_deaths)], axis=1))


def normalize_series(series: CaseSeries, population: Optional[int] = None) -> CaseSeries:
    population = population if population is not None else series.population
    values = normalize_by_population(series.values(), population)
    return series.with_values(values, population=int(population), normalized=True)


@dataclass
class StaticMatrix:
    """Standardized static features with the statistics to reuse them"""

    features: pd.DataFrame
    means: pd.Series
    stdevs: pd.Series
    dropped: List[str] = field(default_factory=list)
    imputed: Dict[str, int] = field(default_factory=dict)

    @property
    def names(self) -> List[str]:
        return list(self.features.columns)

    def for_key(self, key: EntityKey) -> StaticFeatures:
        return StaticFeatures(
            key=EntityKey(key),
            values=self.features.loc[key].to_numpy(dtype=float),
            names=tuple(self.names))

    def manifest(self) -> Dict:
        return dict(
            names=self.names,
            means=[float(x) for x in self.means],
            stdevs=[float(x) for x in self.stdevs],
            dropped=list(self.dropped),
            imputed=dict(self.imputed))


def build_static_matrix(
    census: Optional[pd.DataFrame],
    usda: Optional[pd.DataFrame],
    keys: Iterable[str],
) -> StaticMatrix:
    keys = [EntityKey(key) for key in keys]
    tables = [table for table in (census, usda) if table is not None]
    if not tables:
        raise DataError('No static feature tables given')
    present = set()
    for table in tables:
        present.update(str(key) for key in table.index)
    missing = [key for key in keys if key not in present]
    if missing:
        raise JoinError(missing)

    joined = pd.concat(
        [table.reindex(pd.Index(keys, name='fips')) for table in tables], axis=1)
    imputed = dict()
    for column in joined.columns:
        count = int(joined[column].isna().sum())
        if count:
            joined[column] = joined[column].fillna(joined[column].median())
            imputed[column] = count
    if imputed:
        logger.warning(f'Imputed {sum(imputed.values())} static values with medians')

    means = joined.mean(axis=0)
    stdevs = joined.std(axis=0, ddof=0)
    constant = [column for column in joined.columns if not stdevs[column] > 0]
    if constant:
        logger.warning(f'Dropped {len(constant)} constant static features')
    kept = [column for column in joined.columns if column not in constant]
    standardized = (joined[kept] - means[kept]) / stdevs[kept]
    return StaticMatrix(standardized, means[kept], stdevs[kept], constant, imputed)


def apply_standardization(raw: pd.DataFrame, manifest: Mapping) -> pd.DataFrame:
    """Standardize new entities with the statistics of an earlier build"""
    names = list(manifest['names'])
    missing = [name for name in names if name not in raw.columns]
    if missing:
        raise DataError(f'Missing static features: {", ".join(missing[:5])}')
    means = pd.Series(manifest['means'], index=names)
    stdevs = pd.Series(manifest['stdevs'], index=names)
    return (raw[names] - means) / stdevs


def assemble_entities(
    census: pd.DataFrame,
    usda: Optional[pd.DataFrame],
    cases: Mapping[EntityKey, CaseSeries],
    keys: Optional[Iterable[str]] = None,
) -> Tuple[List[EntityRecord], StaticMatrix]:
    """Join statics and case series into repaired, normalized records"""
    if keys is None:
        keys = sorted(cases.keys())
    usable = list()
    for key in keys:
        key = EntityKey(key)
        if key not in cases:
            logger.warning(f'{key}: no case reports, skipped')
        elif key not in census.index or POPULATION_FEATURE not in census.columns:
            logger.warning(f'{key}: no census population, skipped')
        elif pd.isna(census.loc[key, POPULATION_FEATURE]) or census.loc[key, POPULATION_FEATURE] <= 0:
            logger.warning(f'{key}: census population missing or not positive, skipped')
        else:
            usable.append(key)
    if not usable:
        raise DataError('No county has both case reports and a census population')
    statics = build_static_matrix(census, usda, usable)
    records = list()
    for key in usable:
        population = int(census.loc[key, POPULATION_FEATURE])
        series = repair_series(cases[key])
        series = normalize_series(series, population)
        records.append(EntityRecord(key, series, statics.for_key(key)))
    return records, statics


def write_store(
    directory: Path,
    records: Iterable[EntityRecord],
    manifest: Optional[Mapping] = None,
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for record in records:
        with (directory / f'{record.key}.json').open('w', encoding='utf-8') as file:
            json.dump(record.to_dict(), file, indent=1, sort_keys=True)
    if manifest is not None:
        with (directory / MANIFEST_NAME).open('w', encoding='utf-8') as file:
            json.dump(dict(manifest), file, indent=1, sort_keys=True)


def read_store(directory: Path, keys: Optional[Iterable[str]] = None) -> List[EntityRecord]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f'Entity directory not found: {str(directory)}')
    if keys is None:
        paths = sorted(
            path for path in directory.glob('*.json') if path.name != MANIFEST_NAME)
    else:
        paths = [directory / f'{EntityKey(key)}.json' for key in keys]
    records = list()
    for path in paths:
        if not path.exists():
            raise DataError(f'No entity record: {path.name}')
        with path.open(encoding='utf-8') as file:
            records.append(EntityRecord.from_dict(json.load(file)))
    return records


def read_manifest(directory: Path) -> Optional[Dict]:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        return None
    with path.open(encoding='utf-8') as file:
        return json.load(file)
