#!/usr/bin/env python3

"""Readers for the static and daily CSV tables, registered per source"""

from __future__ import annotations
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, TextIO, Tuple, Union
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
import logging

import numpy as np
import pandas as pd
import regex

from itaxotools.common.param.core import Field

from .types import DataSource
from .utils import ConfigurableCallable
from .errors import DataError, LdtError
from .model import CaseSeries, EntityKey

logger = logging.getLogger(__name__)

CsvInput = Union[str, Path, TextIO]

_CENSUS_KEYS = ('SUMLEV', 'STATE', 'COUNTY', 'YEAR', 'AGEGRP')
_DATE_PATTERN = regex.compile(r'(?<!\d)(\d{2})-(\d{2})-(\d{4})(?!\d)')


class SchemaError(DataError):
    def __init__(self, source: DataSource, columns: List[str]):
        self.source = source
        self.columns = columns
        super().__init__(
            f'{str(source)}: missing mandatory column(s): {", ".join(columns)}')


class UndatedFile(DataError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f'No MM-DD-YYYY date in file name: {repr(name)}')


class ReaderNotFound(LdtError):
    def __init__(self, source: DataSource):
        self.source = source
        super().__init__(f'No reader for {str(source)}')


@dataclass
class ParseReport:
    source: DataSource
    rows: int = 0
    skipped: List[Tuple[int, str]] = field(default_factory=list)
    duplicates: int = 0
    imputed: Dict[str, int] = field(default_factory=dict)

    def summary(self) -> Dict:
        return dict(
            source=self.source.name,
            rows=self.rows,
            skipped=len(self.skipped),
            duplicates=self.duplicates,
            imputed=dict(self.imputed))


class SourceTable(NamedTuple):
    features: pd.DataFrame
    report: ParseReport


def _read_csv(stream: CsvInput) -> pd.DataFrame:
    if isinstance(stream, (str, Path)):
        return pd.read_csv(stream, dtype=str, keep_default_na=False, encoding='utf-8')
    return pd.read_csv(stream, dtype=str, keep_default_na=False)


def _check_columns(source: DataSource, data: pd.DataFrame, columns: Iterable[str]) -> None:
    missing = [column for column in columns if column not in data.columns]
    if missing:
        raise SchemaError(source, missing)


def _to_number(column: pd.Series) -> pd.Series:
    cleaned = column.str.strip().str.replace(r'[,$%]', '', regex=True)
    return pd.to_numeric(cleaned, errors='coerce')


def _to_key(value: str) -> Optional[EntityKey]:
    try:
        return EntityKey(value)
    except DataError:
        return None


class SourceReader(ConfigurableCallable):
    source: DataSource = None

    states = Field(
        key='states',
        label='State filter',
        doc='Two digit state FIPS prefixes to keep; empty keeps all.',
        type=list,
        default=[])

    def keep_state(self, keys: pd.Series) -> pd.Series:
        if not self.states:
            return pd.Series(True, index=keys.index)
        wanted = {str(state).zfill(2) for state in self.states}
        return keys.str[:2].isin(wanted)

    def skip_rows(self, report: ParseReport, lines: Iterable[int], reason: str) -> None:
        for line in lines:
            report.skipped.append((int(line), reason))
            logger.warning(f'{str(self.source)}: line {line} skipped: {reason}')


source_readers: Dict[DataSource, type] = dict()


def source_reader(source: DataSource) -> Callable[[type], type]:
    def decorator(reader: type) -> type:
        source_readers[source] = reader
        reader.source = source
        return reader
    return decorator


@source_reader(DataSource.Census)
class CensusReader(SourceReader):
    reference_year = Field(
        key='reference_year',
        label='Reference year',
        doc='Value of the YEAR column to keep; the latest one if unset.',
        type=int,
        default=None)

    summary_level = Field(
        key='summary_level',
        label='Summary level',
        doc='SUMLEV code of county rows.',
        type=int,
        default=50)

    def call(self, stream: CsvInput) -> SourceTable:
        report = ParseReport(self.source)
        data = _read_csv(stream)
        _check_columns(self.source, data, self.source.columns)
        report.rows = len(data)
        values = [column for column in self.source.columns if column not in _CENSUS_KEYS]

        numbers = pd.DataFrame({
            column: _to_number(data[column])
            for column in _CENSUS_KEYS[:1] + _CENSUS_KEYS[3:] + tuple(values)})
        states = data['STATE'].str.strip()
        counties = data['COUNTY'].str.strip()
        valid_parts = (
            states.str.fullmatch(r'\d{1,2}') & counties.str.fullmatch(r'\d{1,3}'))
        bad = numbers.isna().any(axis=1) | ~valid_parts
        self.skip_rows(report, data.index[bad] + 2, 'unparseable value')

        numbers = numbers.loc[~bad].astype(np.int64)
        numbers['fips'] = states[~bad].str.zfill(2) + counties[~bad].str.zfill(3)
        numbers = numbers.loc[numbers['SUMLEV'] == self.summary_level]
        numbers = numbers.loc[numbers['fips'].str[:2] != '00']
        numbers = numbers.loc[self.keep_state(numbers['fips'])]

        year = self.reference_year
        if year is None and len(numbers):
            year = int(numbers['YEAR'].max())
        numbers = numbers.loc[numbers['YEAR'] == year]

        duplicated = numbers.duplicated(['fips', 'AGEGRP'], keep='last')
        report.duplicates = int(duplicated.sum())
        if report.duplicates:
            logger.warning(
                f'{str(self.source)}: {report.duplicates} duplicate county/age rows, last kept')
        numbers = numbers.loc[~duplicated]

        wide = numbers.pivot(index='fips', columns='AGEGRP', values=values)
        wide = wide.reindex(columns=sorted(wide.columns, key=lambda x: (values.index(x[0]), x[1])))
        wide.columns = [f'{column}_AG{group}' for column, group in wide.columns]
        wide.index = pd.Index([EntityKey(key) for key in wide.index], name='fips')
        wide = wide.sort_index().astype(float)
        logger.info(
            f'{str(self.source)}: {len(wide)} counties, {wide.shape[1]} features, year {year}')
        return SourceTable(wide, report)


@source_reader(DataSource.Usda)
class UsdaReader(SourceReader):

    def call(self, stream: CsvInput) -> SourceTable:
        report = ParseReport(self.source)
        data = _read_csv(stream)
        _check_columns(self.source, data, self.source.columns)
        report.rows = len(data)
        values = list(self.source.columns[1:])

        keys = data['FIPS_Code'].map(_to_key)
        bad_key = keys.isna()
        self.skip_rows(report, data.index[bad_key] + 2, 'invalid FIPS_Code')
        data = data.loc[~bad_key]
        keys = keys.loc[~bad_key].astype(str)

        # State and national summary rows
        county = keys.str[2:] != '000'
        data, keys = data.loc[county], keys.loc[county]
        kept = self.keep_state(keys)
        data, keys = data.loc[kept], keys.loc[kept]

        numbers = pd.DataFrame({column: _to_number(data[column]) for column in values})
        blank = data[values].apply(lambda column: column.str.strip() == '')
        bad = (numbers.isna() & ~blank).any(axis=1)
        self.skip_rows(report, data.index[bad] + 2, 'unparseable value')
        numbers, keys, blank = numbers.loc[~bad], keys.loc[~bad], blank.loc[~bad]

        numbers.index = pd.Index([EntityKey(key) for key in keys], name='fips')
        duplicated = numbers.index.duplicated(keep='last')
        report.duplicates = int(duplicated.sum())
        numbers = numbers.loc[~duplicated]
        blank = blank.loc[~duplicated]

        for column in values:
            missing = int(numbers[column].isna().sum())
            if missing:
                median = numbers[column].median()
                numbers[column] = numbers[column].fillna(median)
                report.imputed[column] = missing
                logger.warning(
                    f'{str(self.source)}: {missing} blank {column} imputed with median {median}')
        numbers = numbers.sort_index().astype(float)
        logger.info(f'{str(self.source)}: {len(numbers)} counties')
        return SourceTable(numbers, report)


def file_date(name: str) -> date:
    match = _DATE_PATTERN.search(Path(name).name)
    if not match:
        raise UndatedFile(name)
    month, day, year = (int(part) for part in match.groups())
    try:
        return date(year, month, day)
    except ValueError as e:
        raise UndatedFile(name) from e


@source_reader(DataSource.DailyCases)
class DailyCasesReader(SourceReader):

    def read_day(self, name: str, stream: CsvInput, report: ParseReport) -> pd.DataFrame:
        data = _read_csv(stream)
        _check_columns(self.source, data, self.source.columns)
        report.rows += len(data)
        keys = data['FIPS'].map(_to_key)
        confirmed = _to_number(data['Confirmed'])
        deaths = _to_number(data['Deaths'])
        bad = keys.isna() | confirmed.isna() | deaths.isna()
        if bad.any():
            report.skipped.extend((int(line), f'{name}: invalid row') for line in data.index[bad] + 2)
            logger.debug(f'{name}: {int(bad.sum())} rows without county data skipped')
        day = pd.DataFrame({
            'fips': keys.loc[~bad].astype(str),
            'confirmed': confirmed.loc[~bad],
            'deaths': deaths.loc[~bad]})
        day = day.loc[self.keep_state(day['fips'])]
        duplicated = day['fips'].duplicated(keep='last')
        if duplicated.any():
            report.duplicates += int(duplicated.sum())
            logger.warning(f'{name}: {int(duplicated.sum())} duplicate FIPS rows, last kept')
        return day.loc[~duplicated]

    def call(self, files: Iterable[Tuple[str, CsvInput]]) -> Dict[EntityKey, CaseSeries]:
        report = ParseReport(self.source)
        frames = list()
        for name, stream in files:
            day = self.read_day(name, stream, report)
            day['date'] = pd.Timestamp(file_date(name))
            frames.append(day)
        self.report = report
        if not frames:
            return dict()
        long = pd.concat(frames, ignore_index=True)
        long = long.drop_duplicates(['date', 'fips'], keep='last')
        dates = pd.date_range(long['date'].min(), long['date'].max(), freq='D')
        result = dict()
        for channel in ('confirmed', 'deaths'):
            wide = long.pivot(index='date', columns='fips', values=channel)
            result[channel] = wide.reindex(dates).ffill().fillna(0.0)
        start = dates[0].date()
        series = dict()
        for fips in sorted(result['confirmed'].columns):
            key = EntityKey(fips)
            series[key] = CaseSeries(
                key=key,
                start_date=start,
                cumulative_infections=result['confirmed'][fips].to_numpy(dtype=float),
                cumulative_deaths=result['deaths'][fips].to_numpy(dtype=float))
        logger.info(
            f'{str(self.source)}: {len(series)} counties over {len(dates)} days from {start}')
        return series


def get_reader(source: DataSource, *args, **kwargs) -> SourceReader:
    if source not in source_readers:
        raise ReaderNotFound(source)
    return source_readers[source](*args, **kwargs)


def parse_census(stream: CsvInput, **kwargs) -> SourceTable:
    return get_reader(DataSource.Census, **kwargs)(stream)


def parse_usda(stream: CsvInput, **kwargs) -> SourceTable:
    return get_reader(DataSource.Usda, **kwargs)(stream)


def parse_daily_cases(files: Iterable[Tuple[str, CsvInput]], **kwargs) -> Dict[EntityKey, CaseSeries]:
    return get_reader(DataSource.DailyCases, **kwargs)(files)


def case_files(directory: Path) -> List[Tuple[str, Path]]:
    """Dated CSV files of a directory, in file name order"""
    return [(path.name, path) for path in sorted(Path(directory).glob('*.csv'))]
