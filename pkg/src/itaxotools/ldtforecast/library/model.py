from __future__ import annotations
from typing import Any, Dict, Optional, Tuple
from dataclasses import dataclass, field, replace
from datetime import date

import numpy as np

from .errors import DataError, ShapeError


class BadEntityKey(DataError):
    def __init__(self, value: Any):
        self.value = value
        super().__init__(f'Not a county FIPS code: {repr(value)}')


class EntityKey(str):
    """Five digit state+county FIPS code, zero padded"""

    def __new__(cls, value: Any) -> EntityKey:
        text = str(value).strip()
        if text.endswith('.0'):
            text = text[:-2]
        if not text.isdigit() or len(text) > 5:
            raise BadEntityKey(value)
        text = text.zfill(5)
        if text[:2] == '00':
            raise BadEntityKey(value)
        return super().__new__(cls, text)

    @classmethod
    def from_parts(cls, state: Any, county: Any) -> EntityKey:
        state = str(state).strip()
        county = str(county).strip()
        if not state.isdigit() or not county.isdigit():
            raise BadEntityKey(f'{state}/{county}')
        if len(state) > 2 or len(county) > 3:
            raise BadEntityKey(f'{state}/{county}')
        return cls(state.zfill(2) + county.zfill(3))

    @property
    def state(self) -> str:
        return self[:2]

    @property
    def county(self) -> str:
        return self[2:]


@dataclass(frozen=True)
class StaticFeatures:
    key: EntityKey
    values: np.ndarray
    names: Tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(self.names):
            raise ShapeError(
                f'{self.key}: {len(self.values)} values '
                f'for {len(self.names)} feature names')

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class CaseSeries:
    """Cumulative infections and deaths, one value per consecutive day"""

    key: EntityKey
    start_date: date
    cumulative_infections: np.ndarray
    cumulative_deaths: np.ndarray
    population: Optional[int] = None
    normalized: bool = False

    def __post_init__(self):
        self.cumulative_infections = np.asarray(
            self.cumulative_infections, dtype=float)
        self.cumulative_deaths = np.asarray(
            self.cumulative_deaths, dtype=float)
        if len(self.cumulative_infections) != len(self.cumulative_deaths):
            raise ShapeError(
                f'{self.key}: infections and deaths differ in length')

    def __len__(self) -> int:
        return len(self.cumulative_infections)

    def values(self) -> np.ndarray:
        """Day-major matrix of shape (days, 2): infections, deaths"""
        return np.stack(
            [self.cumulative_infections, self.cumulative_deaths], axis=1)

    def with_values(self, values: np.ndarray, **kwargs) -> CaseSeries:
        values = np.asarray(values, dtype=float)
        return replace(
            self,
            cumulative_infections=values[:, 0].copy(),
            cumulative_deaths=values[:, 1].copy(),
            **kwargs)

    def head(self, days: int) -> CaseSeries:
        return self.with_values(self.values()[:days])

    def tail(self, days: int) -> CaseSeries:
        start = len(self) - days
        shifted = date.fromordinal(self.start_date.toordinal() + start)
        return self.with_values(self.values()[start:], start_date=shifted)

    def copy(self) -> CaseSeries:
        return self.with_values(self.values())


@dataclass
class EntityRecord:
    key: EntityKey
    series: CaseSeries
    statics: Optional[StaticFeatures] = None
    tags: Dict[str, Any] = field(default_factory=dict)

    @property
    def static_vector(self) -> Optional[np.ndarray]:
        if self.statics is None:
            return None
        return self.statics.values

    @property
    def static_dim(self) -> int:
        if self.statics is None:
            return 0
        return len(self.statics)

    def to_dict(self) -> Dict[str, Any]:
        series = self.series
        data = dict(
            fips=str(self.key),
            start_date=series.start_date.isoformat(),
            population=series.population,
            normalized=series.normalized,
            cumulative_infections=[float(x) for x in series.cumulative_infections],
            cumulative_deaths=[float(x) for x in series.cumulative_deaths],
            tags=dict(self.tags),
        )
        if self.statics is not None:
            data['static_names'] = list(self.statics.names)
            data['static_values'] = [float(x) for x in self.statics.values]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> EntityRecord:
        key = EntityKey(data['fips'])
        series = CaseSeries(
            key=key,
            start_date=date.fromisoformat(data['start_date']),
            cumulative_infections=np.array(data['cumulative_infections'], dtype=float),
            cumulative_deaths=np.array(data['cumulative_deaths'], dtype=float),
            population=data.get('population'),
            normalized=bool(data.get('normalized', False)),
        )
        statics = None
        if 'static_values' in data:
            statics = StaticFeatures(
                key=key,
                values=np.array(data['static_values'], dtype=float),
                names=tuple(data['static_names']))
        return cls(key, series, statics, dict(data.get('tags', {})))
