#!/usr/bin/env python3

from pathlib import Path
from datetime import date

import pytest
import numpy as np
import pandas as pd

from itaxotools.ldtforecast.library.errors import DataError
from itaxotools.ldtforecast.library.model import CaseSeries, EntityKey
from itaxotools.ldtforecast.library.sources import (
    case_files, parse_census, parse_daily_cases, parse_usda)
from itaxotools.ldtforecast.library.entities import (
    JoinError, apply_standardization, assemble_entities, build_static_matrix,
    normalize_by_population, normalize_series, read_manifest, read_store,
    repair_monotone, repair_series, write_store)

TEST_DATA_DIR = Path(__file__).parent / 'test_sources'


@pytest.fixture
def census() -> pd.DataFrame:
    return parse_census(TEST_DATA_DIR / 'census.csv').features


@pytest.fixture
def usda() -> pd.DataFrame:
    return parse_usda(TEST_DATA_DIR / 'usda.csv').features


@pytest.fixture
def cases():
    return parse_daily_cases(case_files(TEST_DATA_DIR / 'cases'))


@pytest.mark.parametrize("series, expected", [
    ([1, 3, 2, 2, 4], [1, 3, 3, 3, 4]),
    ([0, 0, 0], [0, 0, 0]),
    ([5, 1, 1, 6], [5, 5, 5, 6]),
    ([2], [2]),
])
def test_repair_monotone(series, expected):
    assert list(repair_monotone(series)) == expected


def test_repair_monotone_properties():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        series = np.cumsum(rng.normal(size=rng.integers(1, 40)))
        repaired = repair_monotone(series)
        assert np.all(np.diff(repaired) >= 0)
        assert np.array_equal(repair_monotone(repaired), repaired)
        assert np.all(repaired >= series)


def test_repair_monotone_empty():
    with pytest.raises(DataError):
        repair_monotone([])


def test_normalize_by_population():
    assert list(normalize_by_population([10, 20], 100)) == [0.1, 0.2]
    with pytest.raises(DataError):
        normalize_by_population([1], 0)


def test_repair_and_normalize_series():
    series = CaseSeries(EntityKey('01001'), date(2020, 1, 22), [1, 3, 2], [0, 1, 0])
    repaired = repair_series(series)
    assert list(repaired.cumulative_infections) == [1, 3, 3]
    assert list(repaired.cumulative_deaths) == [0, 1, 1]
    normalized = normalize_series(repaired, 10)
    assert normalized.normalized
    assert normalized.population == 10
    assert list(normalized.cumulative_infections) == [0.1, 0.3, 0.3]


def test_static_matrix(census, usda):
    keys = ['01001', '01003', '01005']
    statics = build_static_matrix(census, usda, keys)
    features = statics.features
    assert list(features.index) == keys
    assert np.allclose(features.mean(axis=0), 0.0)
    assert np.allclose(features.std(axis=0, ddof=0), 1.0)
    assert 'Median_Household_Income_2019' in statics.names
    vector = statics.for_key(EntityKey('01003'))
    assert len(vector) == len(statics.names)


def test_static_matrix_drops_constant():
    frame = pd.DataFrame(
        {'a': [1.0, 2.0, 3.0], 'b': [5.0, 5.0, 5.0]},
        index=pd.Index(['01001', '01003', '01005'], name='fips'))
    statics = build_static_matrix(frame, None, frame.index)
    assert statics.names == ['a']
    assert statics.dropped == ['b']


def test_static_matrix_imputes():
    frame = pd.DataFrame(
        {'a': [1.0, np.nan, 3.0, 10.0]},
        index=pd.Index(['01001', '01003', '01005', '01007'], name='fips'))
    statics = build_static_matrix(frame, None, frame.index)
    assert statics.imputed == {'a': 1}
    assert statics.means['a'] == pytest.approx((1 + 3 + 3 + 10) / 4)


def test_static_matrix_missing_key(census):
    with pytest.raises(JoinError) as info:
        build_static_matrix(census, None, ['01001', '01099'])
    assert info.value.keys == ['01099']


def test_apply_standardization(census, usda):
    statics = build_static_matrix(census, usda, ['01001', '01003', '01005', '02013'])
    raw = pd.concat([census, usda], axis=1)
    again = apply_standardization(raw, statics.manifest())
    assert np.allclose(again.to_numpy(), statics.features.to_numpy())


def test_assemble_entities(census, usda, cases):
    records, statics = assemble_entities(census, usda, cases)
    assert [record.key for record in records] == ['01001', '01003', '01005', '02013']
    autauga = records[0]
    assert autauga.series.normalized
    assert autauga.series.population == 1000
    assert np.allclose(autauga.series.cumulative_infections, [0.001, 0.003, 0.003, 0.003])
    assert autauga.static_dim == len(statics.names)


def test_assemble_entities_skips_unknown(census, cases):
    cases = dict(cases)
    cases[EntityKey('01099')] = cases[EntityKey('01001')]
    records, _ = assemble_entities(census, None, cases)
    assert EntityKey('01099') not in [record.key for record in records]


@pytest.mark.parametrize("population", [np.nan, 0.0])
def test_assemble_entities_skips_bad_population(cases, population):
    census = pd.DataFrame(
        {'TOT_POP_AG0': [1000.0, population, 3000.0], 'TOT_MALE_AG0': [480.0, 700.0, 1500.0]},
        index=pd.Index(['01001', '01003', '01005'], name='fips'))
    records, _ = assemble_entities(census, None, cases)
    assert [record.key for record in records] == ['01001', '01005']
    assert [record.series.population for record in records] == [1000, 3000]


def test_store(tmp_path, census, usda, cases):
    records, statics = assemble_entities(census, usda, cases)
    write_store(tmp_path, records, statics.manifest())
    loaded = read_store(tmp_path)
    assert [record.key for record in loaded] == [record.key for record in records]
    assert np.array_equal(loaded[2].static_vector, records[2].static_vector)
    assert read_manifest(tmp_path)['names'] == statics.names
    subset = read_store(tmp_path, ['2013'])
    assert [record.key for record in subset] == ['02013']
    with pytest.raises(DataError):
        read_store(tmp_path, ['01099'])
