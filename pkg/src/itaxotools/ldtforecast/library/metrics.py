#!/usr/bin/env python3

"""Agreement between clusterings, stability over time and forecast error curves"""

from __future__ import annotations
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple
from dataclasses import dataclass
from itertools import permutations
import logging

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment
from scipy.special import comb

from .types import Channel
from .errors import UsageError
from .model import EntityRecord
from .nn_core import LstmModel
from .forecast import forecast_entity

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 8
CURVE_COLUMNS = ('horizon', 'rel_err_infections', 'rel_err_deaths')


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows follow clustering A, columns clustering B"""

    counts: np.ndarray

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def n(self) -> int:
        return int(self.counts.sum())


class StabilityReport(NamedTuple):
    matrix: ConfusionMatrix
    accuracy: float
    best_permutation: Tuple[int, ...]
    ari: float

    def to_dict(self) -> Dict:
        return dict(
            matrix=self.matrix.counts.tolist(),
            accuracy=self.accuracy,
            best_permutation=list(self.best_permutation),
            ari=self.ari,
            n=self.matrix.n)


def _labels(labels) -> np.ndarray:
    return np.asarray(labels, dtype=int).ravel()


def confusion_matrix(labels_a, labels_b, k: int) -> ConfusionMatrix:
    a, b = _labels(labels_a), _labels(labels_b)
    if len(a) != len(b):
        raise UsageError(f'Label sequences differ in length: {len(a)} and {len(b)}')
    if len(a) and (min(a.min(), b.min()) < 0 or max(a.max(), b.max()) >= k):
        raise UsageError(f'Labels must lie in [0, {k})')
    counts = np.zeros((k, k), dtype=int)
    np.add.at(counts, (a, b), 1)
    return ConfusionMatrix(counts)


def permutation_accuracy(matrix: ConfusionMatrix) -> Tuple[float, Tuple[int, ...]]:
    """
    Largest diagonal fraction over all column orders. The permutation
    maps each row to the column it is matched with.
    """
    counts = np.asarray(matrix.counts if isinstance(matrix, ConfusionMatrix) else matrix)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.size == 0:
        raise UsageError(f'Expected a non-empty square matrix, got shape {counts.shape}')
    n = counts.sum()
    if n <= 0:
        raise UsageError('Confusion matrix is empty')
    k = counts.shape[0]
    rows = np.arange(k)
    if k <= EXHAUSTIVE_LIMIT:
        best, best_total = None, -1
        for order in permutations(range(k)):
            total = counts[rows, order].sum()
            if total > best_total:
                best, best_total = order, total
    else:
        _, columns = linear_sum_assignment(counts, maximize=True)
        best, best_total = tuple(int(x) for x in columns), counts[rows, columns].sum()
    return float(best_total) / float(n), tuple(int(x) for x in best)


def adjusted_rand_index(labels_a, labels_b) -> float:
    a, b = _labels(labels_a), _labels(labels_b)
    if len(a) != len(b):
        raise UsageError(f'Label sequences differ in length: {len(a)} and {len(b)}')
    if len(a) < 2:
        raise UsageError('Adjusted Rand index needs at least two items')
    _, a = np.unique(a, return_inverse=True)
    _, b = np.unique(b, return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)

    index = comb(table, 2).sum()
    rows = comb(table.sum(axis=1), 2).sum()
    columns = comb(table.sum(axis=0), 2).sum()
    expected = rows * columns / comb(len(a), 2)
    maximum = (rows + columns) / 2.0
    if maximum == expected:
        # Both partitions trivial: all singletons or one block
        return 1.0 if rows == columns else 0.0
    return float((index - expected) / (maximum - expected))


def cluster_stability(
    labels_t1: Mapping[str, int],
    labels_t2: Mapping[str, int],
    k: int,
) -> StabilityReport:
    """Agreement of the same entities' clusters at two points in time"""
    keys_1, keys_2 = set(labels_t1), set(labels_t2)
    if keys_1 != keys_2:
        difference = sorted(keys_1 ^ keys_2)
        raise UsageError(f'Entity sets differ: {", ".join(difference)}')
    keys = sorted(keys_1)
    a = [labels_t1[key] for key in keys]
    b = [labels_t2[key] for key in keys]
    matrix = confusion_matrix(a, b, k)
    accuracy, best = permutation_accuracy(matrix)
    ari = adjusted_rand_index(a, b) if len(keys) >= 2 else 1.0
    return StabilityReport(matrix, accuracy, best, ari)


def concordance(
    labels_embedding: Mapping[str, int],
    labels_actuals: Mapping[str, int],
    k: int,
) -> Tuple[float, float]:
    """Acc and ARI of an embedding clustering against the observed-value one"""
    report = cluster_stability(labels_embedding, labels_actuals, k)
    return report.accuracy, report.ari


def stable_count(report: StabilityReport) -> int:
    """Entities on the best diagonal"""
    rows = np.arange(report.matrix.k)
    return int(report.matrix.counts[rows, list(report.best_permutation)].sum())


def stable_entities(
    labels_t1: Mapping[str, int],
    labels_t2: Mapping[str, int],
    k: int,
) -> List[str]:
    """Entities whose cluster at the second time is the best match of their first"""
    report = cluster_stability(labels_t1, labels_t2, k)
    return sorted(
        key for key in labels_t1
        if report.best_permutation[labels_t1[key]] == labels_t2[key])


def stability_error(n_actual: int, n_embedding: int) -> float:
    if n_actual <= 0:
        raise UsageError(f'Stable entity count must be positive, got {n_actual}')
    return abs(n_actual - n_embedding) / n_actual


def stability_over_time(
    labels_by_pit: Mapping[int, Mapping[str, int]],
    k: int,
    reference: int = 60,
) -> pd.DataFrame:
    """Stability of every point in time against the reference one"""
    if reference not in labels_by_pit:
        raise UsageError(f'No clustering at reference point in time {reference}')
    rows = list()
    for pit in sorted(labels_by_pit):
        report = cluster_stability(labels_by_pit[reference], labels_by_pit[pit], k)
        rows.append(dict(
            pit=pit,
            reference_pit=reference,
            stability=report.accuracy,
            ari=report.ari,
            stable=stable_count(report),
            n=report.matrix.n))
    return pd.DataFrame(rows)


def relative_error(pred: np.ndarray, actual: np.ndarray, epsilon: float = 1e-8) -> np.ndarray:
    """Signed: positive when the forecast overshoots"""
    return (np.asarray(pred, dtype=float) - actual) / (np.asarray(actual, dtype=float) + epsilon)


def horizon_errors(
    model: LstmModel,
    entity: EntityRecord,
    horizons: int = 30,
    test_days: Optional[int] = None,
) -> pd.DataFrame:
    """Recursive forecast from the train cut against the test buffer"""
    if test_days is None:
        test_days = int(model.metadata.get('test_days', 30))
    values = entity.series.values()
    cut = len(values) - test_days
    if horizons > test_days:
        logger.warning(
            f'{entity.key}: horizon {horizons} truncated to the {test_days} test days')
        horizons = test_days
    predictions = forecast_entity(model, entity, horizons, cut=cut)
    errors = relative_error(predictions, values[cut:cut + horizons])
    return pd.DataFrame({
        CURVE_COLUMNS[0]: np.arange(1, horizons + 1),
        CURVE_COLUMNS[1]: errors[:, Channel.Infections.index],
        CURVE_COLUMNS[2]: errors[:, Channel.Deaths.index],
    })


def moving_average(series: Sequence[float], window: int = 10) -> np.ndarray:
    """Trailing mean, over the available prefix while warming up"""
    if window < 1:
        raise UsageError(f'Window must be positive, got {window}')
    values = np.asarray(series, dtype=float)
    return pd.Series(values).rolling(window, min_periods=1).mean().to_numpy()


def median_curve(curves: Iterable[pd.DataFrame]) -> pd.DataFrame:
    stacked = pd.concat(list(curves))
    return stacked.groupby(CURVE_COLUMNS[0], as_index=False).median()
