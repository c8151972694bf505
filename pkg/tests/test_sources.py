#!/usr/bin/env python3

from pathlib import Path
from datetime import date
from io import StringIO

import pytest
import numpy as np

from itaxotools.ldtforecast.library.types import DataSource
from itaxotools.ldtforecast.library.model import EntityKey
from itaxotools.ldtforecast.library.sources import (
    SchemaError, UndatedFile, case_files, file_date, get_reader,
    parse_census, parse_daily_cases, parse_usda)

TEST_DATA_DIR = Path(__file__).parent / Path(__file__).stem


def test_census_counties():
    table = parse_census(TEST_DATA_DIR / 'census.csv')
    features = table.features
    assert list(features.index) == ['01001', '01003', '01005', '02013']
    assert features.shape[1] == 22
    assert features.loc['01001', 'TOT_POP_AG0'] == 1000
    assert features.loc['01005', 'TOT_POP_AG1'] == 300
    assert features.columns[0] == 'TOT_POP_AG0'
    assert features.columns[1] == 'TOT_POP_AG1'
    assert table.report.rows == 11
    assert table.report.skipped == [(10, 'unparseable value')]


def test_census_state_filter():
    table = parse_census(TEST_DATA_DIR / 'census.csv', states=['02'])
    assert list(table.features.index) == ['02013']


def test_census_reference_year():
    table = parse_census(TEST_DATA_DIR / 'census.csv', reference_year=11)
    assert list(table.features.index) == ['01001']
    assert table.features.loc['01001', 'TOT_POP_AG0'] == 990


def test_census_missing_column():
    stream = StringIO('SUMLEV,STATE,COUNTY\n050,01,001\n')
    with pytest.raises(SchemaError) as info:
        parse_census(stream)
    assert 'YEAR' in info.value.columns
    assert info.value.exit_code == 2


def test_usda_counties():
    table = parse_usda(TEST_DATA_DIR / 'usda.csv')
    features = table.features
    assert list(features.index) == ['01001', '01003', '01005', '02013']
    assert list(features.columns) == list(DataSource.Usda.columns[1:])
    assert features.loc['01001', 'Median_Household_Income_2019'] == 58233
    assert features.loc['01005', 'Unemployment_rate_2020'] == 7.1
    assert table.report.duplicates == 1
    assert table.report.skipped == [(6, 'invalid FIPS_Code')]


def test_usda_imputes_blank_with_median():
    table = parse_usda(TEST_DATA_DIR / 'usda.csv')
    assert table.features.loc['01003', 'Unemployment_rate_2020'] == pytest.approx(7.1)
    assert table.report.imputed == {'Unemployment_rate_2020': 1}


@pytest.mark.parametrize("name, expected", [
    ('01-22-2020.csv', date(2020, 1, 22)),
    ('daily/12-31-2020.csv', date(2020, 12, 31)),
    ('report_03-01-2021_final.csv', date(2021, 3, 1)),
])
def test_file_date(name, expected):
    assert file_date(name) == expected


@pytest.mark.parametrize("name", ['cases.csv', '13-01-2020.csv', '101-22-2020.csv'])
def test_file_date_invalid(name):
    with pytest.raises(UndatedFile):
        file_date(name)


def test_daily_cases():
    series = parse_daily_cases(case_files(TEST_DATA_DIR / 'cases'))
    assert list(series.keys()) == ['01001', '01003', '01005', '02013']
    autauga = series[EntityKey('1001')]
    assert autauga.start_date == date(2020, 1, 22)
    assert len(autauga) == 4
    # Missing day carries the previous report, drops stay unrepaired here
    assert list(autauga.cumulative_infections) == [1, 3, 3, 2]
    assert list(autauga.cumulative_deaths) == [0, 0, 0, 1]
    assert list(series[EntityKey('01005')].cumulative_infections) == [0, 1, 1, 2]


def test_daily_cases_report():
    reader = get_reader(DataSource.DailyCases, states=['01'])
    series = reader(case_files(TEST_DATA_DIR / 'cases'))
    assert EntityKey('02013') not in series
    assert reader.report.rows == 10
    assert len(reader.report.skipped) == 1


def test_daily_cases_streams():
    files = [
        ('02-01-2020.csv', StringIO('FIPS,Confirmed,Deaths\n01001,1,0\n01001,2,0\n')),
        ('02-02-2020.csv', StringIO('FIPS,Confirmed,Deaths\n01001,4,1\n')),
    ]
    series = parse_daily_cases(files)
    values = series[EntityKey('01001')].values()
    assert np.array_equal(values, [[2, 0], [4, 1]])
