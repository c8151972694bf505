#!/usr/bin/env python3

from datetime import date
from itertools import combinations

import pytest
import numpy as np
import pandas as pd

from itaxotools.ldtforecast.library.errors import UsageError
from itaxotools.ldtforecast.library.model import CaseSeries, EntityKey, EntityRecord
from itaxotools.ldtforecast.library.nn_core import LstmModel, ModelConfig, init_params
from itaxotools.ldtforecast.library.metrics import (
    CURVE_COLUMNS, ConfusionMatrix, adjusted_rand_index, cluster_stability,
    concordance, confusion_matrix, horizon_errors, median_curve,
    moving_average, permutation_accuracy, relative_error, stability_error,
    stability_over_time, stable_count, stable_entities)


def pair_counting_ari(a, b) -> float:
    n = len(a)
    pairs = list(combinations(range(n), 2))
    same_a = np.array([a[i] == a[j] for i, j in pairs])
    same_b = np.array([b[i] == b[j] for i, j in pairs])
    index = np.sum(same_a & same_b)
    rows, columns = same_a.sum(), same_b.sum()
    expected = rows * columns / len(pairs)
    maximum = (rows + columns) / 2
    return (index - expected) / (maximum - expected)


def test_permutation_accuracy():
    matrix = ConfusionMatrix(np.array([[4, 3, 3], [2, 1, 1], [1, 1, 1]]))
    accuracy, best = permutation_accuracy(matrix)
    assert accuracy == pytest.approx(6 / 17)
    assert sorted(best) == [0, 1, 2]


def test_permutation_accuracy_identity():
    accuracy, best = permutation_accuracy(np.diag([3, 2, 5]))
    assert accuracy == 1.0
    assert best == (0, 1, 2)


def test_permutation_accuracy_swapped():
    accuracy, best = permutation_accuracy(np.array([[0, 5], [4, 0]]))
    assert accuracy == 1.0
    assert best == (1, 0)


def test_permutation_accuracy_large_k():
    rng = np.random.default_rng(1)
    counts = rng.integers(0, 10, size=(10, 10))
    order = rng.permutation(10)
    counts[np.arange(10), order] += 100
    accuracy, best = permutation_accuracy(counts)
    assert best == tuple(int(x) for x in order)
    assert accuracy == pytest.approx(counts[np.arange(10), order].sum() / counts.sum())


@pytest.mark.parametrize("counts", [np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((0, 0))])
def test_permutation_accuracy_invalid(counts):
    with pytest.raises(UsageError):
        permutation_accuracy(counts)


def test_confusion_matrix():
    matrix = confusion_matrix([0, 0, 1, 2], [1, 1, 0, 2], 3)
    assert matrix.counts.tolist() == [[0, 2, 0], [1, 0, 0], [0, 0, 1]]
    assert matrix.n == 4
    with pytest.raises(UsageError):
        confusion_matrix([0, 3], [0, 1], 3)
    with pytest.raises(UsageError):
        confusion_matrix([0], [0, 1], 3)


@pytest.mark.parametrize("a, b, expected", [
    ([0, 0, 1, 1], [1, 1, 0, 0], 1.0),
    ([0, 0, 0, 0], [0, 1, 2, 3], 0.0),
    ([0, 1, 2, 3], [0, 1, 2, 3], 1.0),
    ([0, 0, 0], [1, 1, 1], 1.0),
])
def test_ari_examples(a, b, expected):
    assert adjusted_rand_index(a, b) == pytest.approx(expected)


def test_ari_matches_pair_counting():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(5, 15))
        a = rng.integers(0, 3, n)
        b = rng.integers(0, 3, n)
        if len(set(a)) < 2 or len(set(b)) < 2:
            continue
        assert adjusted_rand_index(a, b) == pytest.approx(pair_counting_ari(a, b))


def test_ari_invalid():
    with pytest.raises(UsageError):
        adjusted_rand_index([0], [0])
    with pytest.raises(UsageError):
        adjusted_rand_index([0, 1], [0])


def test_cluster_stability():
    t1 = {'01001': 0, '01003': 0, '01005': 1, '01007': 1, '01009': 2}
    t2 = {'01001': 2, '01003': 2, '01005': 0, '01007': 1, '01009': 1}
    report = cluster_stability(t1, t2, 3)
    assert report.accuracy == pytest.approx(4 / 5)
    assert stable_count(report) == 4
    assert report.to_dict()['n'] == 5
    assert report.best_permutation == (2, 0, 1)
    assert stable_entities(t1, t2, 3) == ['01001', '01003', '01005', '01009']


def test_cluster_stability_keys_differ():
    with pytest.raises(UsageError) as info:
        cluster_stability({'01001': 0, '01003': 1}, {'01001': 0, '01005': 1}, 2)
    assert '01003' in str(info.value)


def test_concordance():
    labels = {'01001': 0, '01003': 1, '01005': 1}
    assert concordance(labels, labels, 2) == (1.0, 1.0)


@pytest.mark.parametrize("actual, embedding, expected", [
    (13, 6, 0.54),
    (13, 7, 0.46),
    (17, 10, 0.41),
])
def test_stability_error(actual, embedding, expected):
    assert round(stability_error(actual, embedding), 2) == expected


def test_stability_error_invalid():
    with pytest.raises(UsageError):
        stability_error(0, 3)


def test_stability_over_time():
    labels = {
        30: {'01001': 1, '01003': 0, '01005': 0},
        60: {'01001': 0, '01003': 1, '01005': 1},
        90: {'01001': 0, '01003': 0, '01005': 1},
    }
    frame = stability_over_time(labels, 2)
    assert list(frame['pit']) == [30, 60, 90]
    assert list(frame['stability']) == pytest.approx([1.0, 1.0, 2 / 3])
    with pytest.raises(UsageError):
        stability_over_time(labels, 2, reference=45)


@pytest.mark.parametrize("series, window, expected", [
    ([1, 2, 3, 4], 2, [1.0, 1.5, 2.5, 3.5]),
    ([4, 4, 4], 10, [4.0, 4.0, 4.0]),
    ([2, 4, 6], 1, [2.0, 4.0, 6.0]),
])
def test_moving_average(series, window, expected):
    assert list(moving_average(series, window)) == expected


def test_moving_average_invalid():
    with pytest.raises(UsageError):
        moving_average([1.0], 0)


def test_relative_error():
    errors = relative_error([1.1, 0.9], [1.0, 1.0])
    assert errors == pytest.approx([0.1, -0.1])
    assert np.isfinite(relative_error([1.0], [0.0])).all()


def test_horizon_errors():
    config = ModelConfig(hidden_size=3, rng_seed=2)
    model = LstmModel(config, init_params(config), dict(window_len=4, offsets=[1], test_days=6))
    series = CaseSeries(
        EntityKey('01001'), date(2020, 1, 22),
        np.linspace(0.1, 0.5, 20), np.linspace(0.01, 0.05, 20), normalized=True)
    entity = EntityRecord(EntityKey('01001'), series)
    frame = horizon_errors(model, entity, horizons=10)
    assert list(frame.columns) == list(CURVE_COLUMNS)
    assert list(frame['horizon']) == [1, 2, 3, 4, 5, 6]


def test_median_curve():
    curves = [
        horizon_frame([0.1, 0.2]),
        horizon_frame([0.3, 0.4]),
        horizon_frame([0.2, 0.9]),
    ]
    median = median_curve(curves)
    assert list(median['horizon']) == [1, 2]
    assert list(median['rel_err_infections']) == pytest.approx([0.2, 0.4])


def horizon_frame(values) -> pd.DataFrame:
    return pd.DataFrame({
        'horizon': [1, 2],
        'rel_err_infections': values,
        'rel_err_deaths': values,
    })
