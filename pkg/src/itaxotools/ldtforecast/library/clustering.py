#!/usr/bin/env python3

"""
K-means and K-medoids over embedding vectors. Distances are squared
Euclidean throughout, so the inertia of either method is the summed
squared distance of every point to the center of its cluster.
"""

from __future__ import annotations
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
from dataclasses import dataclass, field
from pathlib import Path
import json
import logging

import numpy as np
from scipy.spatial.distance import cdist

from itaxotools.common.param.core import Field

from .types import ClusterMethod
from .errors import ConfigurationError, DataError, LdtError
from .model import EntityKey
from .embedding import Embedding, embedding_matrix
from .utils import ConfigurableCallable

logger = logging.getLogger(__name__)

_TINY = 1e-12


class ClustererNotFound(LdtError):
    def __init__(self, method: ClusterMethod):
        self.method = method
        super().__init__(f'No clusterer for {str(method)}')


@dataclass
class ClusterModel:
    k: int
    method: ClusterMethod
    labels: np.ndarray
    # Centroid vectors for kmeans, medoid point indices for kmedoids
    centers: np.ndarray
    inertia: float
    keys: Optional[List[EntityKey]] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    inertia_history: List[float] = field(default_factory=list)

    def label_for(self, key: str) -> int:
        if self.keys is None:
            raise DataError('Cluster model has no entity keys')
        return int(self.labels[self.keys.index(EntityKey(key))])

    def members(self, label: int) -> List[EntityKey]:
        if self.keys is None:
            raise DataError('Cluster model has no entity keys')
        return [key for key, own in zip(self.keys, self.labels) if own == label]

    def labels_by_key(self) -> Dict[str, int]:
        return {str(key): int(label) for key, label in zip(self.keys, self.labels)}


def _as_points(points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.ndim != 2 or not np.isfinite(points).all():
        raise DataError(f'Points must be a finite (n, d) array, got shape {points.shape}')
    return points


def _check_k(points: np.ndarray, k: int) -> None:
    if k < 1:
        raise ConfigurationError(f'k must be positive, got {k}')
    if k > len(points):
        raise ConfigurationError(f'k={k} exceeds the {len(points)} points')


def _canonical(labels: np.ndarray, k: int) -> np.ndarray:
    """Relabel clusters in order of first appearance, as a permutation"""
    order = list()
    for label in labels:
        if label not in order:
            order.append(int(label))
    order.extend(label for label in range(k) if label not in order)
    return np.array(order)


def _plusplus(distances: np.ndarray, k: int, rng: np.random.Generator) -> List[int]:
    """k-means++ choice of k distinct point indices from a squared distance matrix"""
    n = len(distances)
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        nearest = distances[:, chosen].min(axis=1)
        nearest[chosen] = 0.0
        total = nearest.sum()
        if total > 0:
            pick = int(rng.choice(n, p=nearest / total))
        else:
            free = [index for index in range(n) if index not in chosen]
            pick = int(rng.choice(free))
        chosen.append(pick)
    return chosen


def _inertia(points: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> float:
    diff = points - centers[labels]
    return float(np.sum(diff * diff))


def _repair_empty(points: np.ndarray, labels: np.ndarray, centers: np.ndarray, k: int) -> None:
    """Give every empty cluster the point farthest from its own center"""
    for cluster in range(k):
        counts = np.bincount(labels, minlength=k)
        if counts[cluster]:
            continue
        own = np.sum((points - centers[labels]) ** 2, axis=1)
        own[counts[labels] < 2] = -1.0
        point = int(np.argmax(own))
        labels[point] = cluster
        centers[cluster] = points[point]


def _means(points: np.ndarray, labels: np.ndarray, centers: np.ndarray, k: int) -> np.ndarray:
    updated = centers.copy()
    for cluster in range(k):
        members = points[labels == cluster]
        if len(members):
            updated[cluster] = members.mean(axis=0)
    return updated


def _hartigan(points: np.ndarray, labels: np.ndarray, centers: np.ndarray, k: int) -> None:
    """Single point transfers that lower the inertia, until none does"""
    counts = np.bincount(labels, minlength=k).astype(float)
    moved = True
    while moved:
        moved = False
        for index, point in enumerate(points):
            own = labels[index]
            if counts[own] < 2:
                continue
            distances = np.sum((centers - point) ** 2, axis=1)
            leave = counts[own] / (counts[own] - 1) * distances[own]
            join = counts / (counts + 1) * distances
            join[own] = np.inf
            target = int(np.argmin(join))
            if join[target] < leave - _TINY:
                centers[own] = (centers[own] * counts[own] - point) / (counts[own] - 1)
                centers[target] = (centers[target] * counts[target] + point) / (counts[target] + 1)
                counts[own] -= 1
                counts[target] += 1
                labels[index] = target
                moved = True


def _lloyd(
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int,
    tol: float,
) -> Tuple[np.ndarray, np.ndarray, float, List[float]]:
    distances = cdist(points, points, 'sqeuclidean')
    centers = points[_plusplus(distances, k, rng)].copy()
    history = list()
    inertia = np.inf
    labels = np.zeros(len(points), dtype=int)
    for _ in range(max_iter):
        labels = np.argmin(cdist(points, centers, 'sqeuclidean'), axis=1)
        _repair_empty(points, labels, centers, k)
        centers = _means(points, labels, centers, k)
        current = _inertia(points, labels, centers)
        history.append(current)
        if inertia - current < tol:
            inertia = current
            break
        inertia = current
    _hartigan(points, labels, centers, k)
    centers = _means(points, labels, centers, k)
    inertia = _inertia(points, labels, centers)
    history.append(inertia)
    return labels, centers, inertia, history


def kmeans(
    points,
    k: int,
    restarts: int = 10,
    max_iter: int = 300,
    tol: float = 1e-8,
    seed: int = 0,
) -> ClusterModel:
    points = _as_points(points)
    _check_k(points, k)
    best = None
    for child in np.random.SeedSequence(seed).spawn(max(1, restarts)):
        result = _lloyd(points, k, np.random.default_rng(child), max_iter, tol)
        if best is None or result[2] < best[2] - _TINY:
            best = result
    labels, centers, inertia, history = best
    order = _canonical(labels, k)
    relabel = np.argsort(order)
    return ClusterModel(
        k=k,
        method=ClusterMethod.KMeans,
        labels=relabel[labels],
        centers=centers[order],
        inertia=inertia,
        inertia_history=history)


def _assign(distances: np.ndarray, medoids: Sequence[int]) -> np.ndarray:
    labels = np.argmin(distances[:, medoids], axis=1)
    for cluster, medoid in enumerate(medoids):
        labels[medoid] = cluster
    return labels


def _cost(distances: np.ndarray, medoids: Sequence[int]) -> float:
    labels = _assign(distances, medoids)
    return float(distances[np.arange(len(distances)), np.asarray(medoids)[labels]].sum())


def _best_member(distances: np.ndarray, members: np.ndarray) -> int:
    costs = distances[np.ix_(members, members)].sum(axis=0)
    lowest = costs.min()
    return int(members[np.flatnonzero(costs <= lowest + _TINY)[0]])


def _pam(distances: np.ndarray, k: int, rng: np.random.Generator, max_iter: int) -> Tuple[List[int], float]:
    n = len(distances)
    medoids = _plusplus(distances, k, rng)
    cost = _cost(distances, medoids)

    for _ in range(max_iter):
        labels = _assign(distances, medoids)
        updated = [
            _best_member(distances, np.flatnonzero(labels == cluster))
            for cluster in range(k)]
        updated_cost = _cost(distances, updated)
        if updated == medoids or updated_cost > cost - _TINY:
            break
        medoids, cost = updated, updated_cost

    improved = True
    while improved:
        improved = False
        best_swap = None
        for slot in range(k):
            for candidate in range(n):
                if candidate in medoids:
                    continue
                trial = list(medoids)
                trial[slot] = candidate
                trial_cost = _cost(distances, trial)
                if trial_cost < cost - _TINY and (best_swap is None or trial_cost < best_swap[1]):
                    best_swap = (trial, trial_cost)
        if best_swap is not None:
            medoids, cost = best_swap
            improved = True

    labels = _assign(distances, medoids)
    medoids = [
        _best_member(distances, np.flatnonzero(labels == cluster))
        for cluster in range(k)]
    return medoids, _cost(distances, medoids)


def kmedoids(
    points,
    k: int,
    restarts: int = 10,
    max_iter: int = 100,
    seed: int = 0,
) -> ClusterModel:
    points = _as_points(points)
    _check_k(points, k)
    distances = cdist(points, points, 'sqeuclidean')
    best = None
    for child in np.random.SeedSequence(seed).spawn(max(1, restarts)):
        medoids, cost = _pam(distances, k, np.random.default_rng(child), max_iter)
        if best is None:
            best = (medoids, cost)
            continue
        if cost < best[1] - _TINY or (
            abs(cost - best[1]) <= _TINY and sorted(medoids) < sorted(best[0])
        ):
            best = (medoids, cost)
    medoids, cost = best
    medoids = sorted(medoids)
    labels = _assign(distances, medoids)
    order = _canonical(labels, k)
    relabel = np.argsort(order)
    return ClusterModel(
        k=k,
        method=ClusterMethod.KMedoids,
        labels=relabel[labels],
        centers=np.array(medoids)[order],
        inertia=cost)


class Clusterer(ConfigurableCallable):
    method: ClusterMethod = None

    k = Field(
        key='k',
        label='Clusters',
        doc='Number of clusters.',
        type=int,
        default=3)

    restarts = Field(
        key='restarts',
        label='Restarts',
        doc='Independently seeded runs; the lowest inertia wins.',
        type=int,
        default=10)

    seed = Field(
        key='seed',
        label='Seed',
        doc='Seed of the restart sequence.',
        type=int,
        default=0)

    def call(self, points) -> ClusterModel:
        raise NotImplementedError()


clusterers: Dict[ClusterMethod, type] = dict()


def clusterer(method: ClusterMethod) -> Callable[[type], type]:
    def decorator(cls: type) -> type:
        clusterers[method] = cls
        cls.method = method
        return cls
    return decorator


@clusterer(ClusterMethod.KMeans)
class KMeansClusterer(Clusterer):
    max_iter = Field(
        key='max_iter',
        label='Iterations',
        doc='Lloyd iterations per restart.',
        type=int,
        default=300)

    tol = Field(
        key='tol',
        label='Tolerance',
        doc='Stop once an iteration lowers the inertia by less.',
        type=float,
        default=1e-8)

    def call(self, points) -> ClusterModel:
        return kmeans(points, self.k, self.restarts, self.max_iter, self.tol, self.seed)


@clusterer(ClusterMethod.KMedoids)
class KMedoidsClusterer(Clusterer):
    max_iter = Field(
        key='max_iter',
        label='Iterations',
        doc='Assignment and update rounds before the swap phase.',
        type=int,
        default=100)

    def call(self, points) -> ClusterModel:
        return kmedoids(points, self.k, self.restarts, self.max_iter, self.seed)


def get_clusterer(method: ClusterMethod, *args, **kwargs) -> Clusterer:
    if method not in clusterers:
        raise ClustererNotFound(method)
    return clusterers[method](*args, **kwargs)


def cluster_entities(
    embeddings: Sequence[Embedding],
    method: ClusterMethod = ClusterMethod.KMeans,
    k: int = 3,
    **kwargs,
) -> ClusterModel:
    keys, points = embedding_matrix(embeddings)
    operator = get_clusterer(method, k=k, **kwargs)
    model = operator(points)
    model.keys = keys
    first = embeddings[0]
    model.metadata.update(
        pit=first.pit_days,
        mode=first.mode.key,
        source=first.source.key if first.source else 'actuals',
        with_static=first.with_static,
        w_static=first.w_static)
    model.metadata.update(
        (key, value) for key, value in operator.settings().items() if key != 'k')
    logger.info(
        f'{method.label}: {len(keys)} entities in {k} clusters at PIT {first.pit_days}, '
        f'inertia {model.inertia:.4g}')
    return model


def clusters_to_dict(model: ClusterModel) -> Dict[str, Any]:
    if model.method is ClusterMethod.KMedoids:
        centers = [int(index) for index in model.centers]
    else:
        centers = [[float(x) for x in center] for center in model.centers]
    data = dict(
        method=model.method.key,
        k=model.k,
        labels=model.labels_by_key(),
        centers=centers,
        inertia=model.inertia,
        **model.metadata)
    if model.method is ClusterMethod.KMedoids:
        data['medoids'] = [str(model.keys[index]) for index in model.centers]
    return data


def clusters_from_dict(data: Dict[str, Any]) -> ClusterModel:
    method = ClusterMethod.from_key(data['method'])
    keys = [EntityKey(key) for key in data['labels']]
    labels = np.array([int(label) for label in data['labels'].values()])
    if method is ClusterMethod.KMedoids:
        centers = np.array(data['centers'], dtype=int)
    else:
        centers = np.array(data['centers'], dtype=float)
    reserved = {'method', 'k', 'labels', 'centers', 'inertia', 'medoids'}
    metadata = {key: value for key, value in data.items() if key not in reserved}
    return ClusterModel(
        k=int(data['k']),
        method=method,
        labels=labels,
        centers=centers,
        inertia=float(data['inertia']),
        keys=keys,
        metadata=metadata)


def write_clusters(path: Path, model: ClusterModel) -> None:
    with Path(path).open('w', encoding='utf-8') as file:
        json.dump(clusters_to_dict(model), file, indent=1)


def read_clusters(path: Path) -> ClusterModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f'Cluster file not found: {str(path)}')
    try:
        with path.open(encoding='utf-8') as file:
            return clusters_from_dict(json.load(file))
    except (KeyError, ValueError) as e:
        raise DataError(f'{str(path)}: not a cluster file: {e}') from e
