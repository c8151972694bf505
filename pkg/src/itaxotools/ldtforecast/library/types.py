#!/usr/bin/env python3

from enum import Enum


class DataSource(Enum):
    """Input tables understood by the ingestion stage"""

    Census = ('Census demographic estimates', (
        'SUMLEV', 'STATE', 'COUNTY', 'YEAR', 'AGEGRP',
        'TOT_POP', 'TOT_MALE', 'TOT_FEMALE',
        'WA_MALE', 'WA_FEMALE', 'BA_MALE', 'BA_FEMALE',
        'AA_MALE', 'AA_FEMALE', 'TOM_MALE', 'TOM_FEMALE'))
    Usda = ('USDA county economic indicators', (
        'FIPS_Code',
        'Median_Household_Income_2019',
        'Unemployment_rate_2019',
        'Unemployment_rate_2020',
        'Med_HH_Income_Percent_of_State_Total_2019'))
    DailyCases = ('Daily cumulative case report', (
        'FIPS', 'Confirmed', 'Deaths'))

    def __init__(self, description: str, columns: tuple):
        self.description = description
        self.columns = columns

    def __str__(self):
        return self.description


class LossKind(Enum):
    """Training objectives, selected by name in the run config"""

    MseAbs = ('mse_abs', 'Absolute mean square error')
    RmseRel = ('rmse_rel', 'Relative mean square error with monotonic penalty')

    def __init__(self, key: str, description: str):
        self.key = key
        self.description = description

    def __str__(self):
        return self.key

    @classmethod
    def from_key(cls, key: str) -> 'LossKind':
        for kind in cls:
            if kind.key == key:
                return kind
        raise ValueError(f'Unknown loss: {repr(key)}')


class ClusterMethod(Enum):
    KMeans = ('kmeans', 'k-means')
    KMedoids = ('kmedoids', 'k-medoids')

    def __init__(self, key: str, label: str):
        self.key = key
        self.label = label

    def __str__(self):
        return self.key

    @classmethod
    def from_key(cls, key: str) -> 'ClusterMethod':
        for method in cls:
            if method.key == key:
                return method
        raise ValueError(f'Unknown clustering method: {repr(key)}')


class EmbedMode(Enum):
    """Which layers contribute to a hidden-state embedding"""

    Last = ('last', 'Top layer only')
    All = ('all', 'All layers, bottom to top')

    def __init__(self, key: str, description: str):
        self.key = key
        self.description = description

    def __str__(self):
        return self.key

    @classmethod
    def from_key(cls, key: str) -> 'EmbedMode':
        for mode in cls:
            if mode.key == key:
                return mode
        raise ValueError(f'Unknown embedding mode: {repr(key)}')


class EmbedSource(Enum):
    """Which LSTM tensor is read out as the embedding"""

    Hidden = ('h', 'Hidden output')
    Cell = ('s_c', 'Internal cell state')
    Both = ('h++s_c', 'Hidden output followed by cell state')

    def __init__(self, key: str, description: str):
        self.key = key
        self.description = description

    def __str__(self):
        return self.key

    @classmethod
    def from_key(cls, key: str) -> 'EmbedSource':
        for source in cls:
            if source.key == key:
                return source
        raise ValueError(f'Unknown embedding source: {repr(key)}')


class Channel(Enum):
    """Per-day input channels, in model input order"""

    Infections = (0, 'infections')
    Deaths = (1, 'deaths')

    def __init__(self, index: int, label: str):
        self.index = index
        self.label = label

    def __str__(self):
        return self.label
