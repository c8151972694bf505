#!/usr/bin/env python3

from datetime import date

import pytest
import numpy as np

from itaxotools.ldtforecast.library.errors import ShapeError
from itaxotools.ldtforecast.library.model import (
    BadEntityKey, CaseSeries, EntityKey, EntityRecord, StaticFeatures)


@pytest.fixture
def series() -> CaseSeries:
    return CaseSeries(
        key=EntityKey('01001'),
        start_date=date(2020, 3, 1),
        cumulative_infections=[0.0, 1.0, 2.0, 4.0, 8.0],
        cumulative_deaths=[0.0, 0.0, 0.0, 1.0, 1.0],
        population=1000)


@pytest.mark.parametrize("value, expected", [
    ('01001', '01001'),
    (1001, '01001'),
    ('1001.0', '01001'),
    (' 48201 ', '48201'),
])
def test_entity_key(value, expected):
    key = EntityKey(value)
    assert key == expected
    assert isinstance(key, str)


@pytest.mark.parametrize("value", ['', 'abc', '123456', '00001', 'nan'])
def test_entity_key_invalid(value):
    with pytest.raises(BadEntityKey):
        EntityKey(value)


def test_entity_key_parts():
    key = EntityKey.from_parts('1', '3')
    assert key == '01003'
    assert key.state == '01'
    assert key.county == '003'
    with pytest.raises(BadEntityKey):
        EntityKey.from_parts('1', '1234')


def test_series_values(series):
    values = series.values()
    assert values.shape == (5, 2)
    assert list(values[:, 0]) == [0, 1, 2, 4, 8]
    assert list(values[:, 1]) == [0, 0, 0, 1, 1]


def test_series_head_tail(series):
    head = series.head(3)
    assert len(head) == 3
    assert head.start_date == series.start_date
    tail = series.tail(2)
    assert list(tail.cumulative_infections) == [4, 8]
    assert tail.start_date == date(2020, 3, 4)
    assert tail.population == 1000


def test_series_length_mismatch():
    with pytest.raises(ShapeError):
        CaseSeries(EntityKey('01001'), date(2020, 3, 1), [1.0, 2.0], [0.0])


def test_static_features_length():
    with pytest.raises(ShapeError):
        StaticFeatures(EntityKey('01001'), np.zeros(3), ('a', 'b'))


def test_record_dict(series):
    statics = StaticFeatures(EntityKey('01001'), np.array([0.5, -1.5]), ('a', 'b'))
    record = EntityRecord(series.key, series, statics, dict(group=2))
    data = record.to_dict()
    assert data['fips'] == '01001'
    assert data['start_date'] == '2020-03-01'
    assert data['static_names'] == ['a', 'b']

    loaded = EntityRecord.from_dict(data)
    assert loaded.key == '01001'
    assert loaded.static_dim == 2
    assert np.array_equal(loaded.static_vector, [0.5, -1.5])
    assert np.array_equal(loaded.series.values(), series.values())
    assert loaded.tags == dict(group=2)


def test_record_without_statics(series):
    record = EntityRecord(series.key, series)
    assert record.static_vector is None
    assert record.static_dim == 0
    assert 'static_values' not in record.to_dict()
