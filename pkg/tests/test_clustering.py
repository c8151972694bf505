#!/usr/bin/env python3

from itertools import combinations, product
from typing import List

import pytest
import numpy as np

from itaxotools.ldtforecast.library.types import ClusterMethod, EmbedMode
from itaxotools.ldtforecast.library.errors import ConfigurationError, DataError, UsageError
from itaxotools.ldtforecast.library.model import EntityKey
from itaxotools.ldtforecast.library.embedding import Embedding
from itaxotools.ldtforecast.library.clustering import (
    KMeansClusterer, KMedoidsClusterer, cluster_entities, clusters_from_dict,
    clusters_to_dict, get_clusterer, kmeans, kmedoids, read_clusters, write_clusters)


def blobs(seed: int, sizes=(3, 4, 3), spread: float = 0.1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-1, 1, size=(len(sizes), 2)) * 10 + np.arange(len(sizes))[:, None] * 25
    return np.concatenate([
        center + rng.normal(scale=spread, size=(size, 2))
        for center, size in zip(centers, sizes)])


def blob_labels(sizes=(3, 4, 3)) -> List[int]:
    return [label for label, size in enumerate(sizes) for _ in range(size)]


def brute_force_medoid_cost(points: np.ndarray, k: int) -> float:
    distances = np.sum((points[:, None] - points[None]) ** 2, axis=2)
    return min(
        distances[:, list(medoids)].min(axis=1).sum()
        for medoids in combinations(range(len(points)), k))


def same_partition(a, b) -> bool:
    pairs = set(zip(a, b))
    return len(pairs) == len(set(a)) == len(set(b))


@pytest.mark.parametrize("seed", range(20))
def test_kmeans_finds_blobs(seed):
    points = blobs(seed)
    model = kmeans(points, 3, seed=seed)
    assert same_partition(model.labels, blob_labels())
    for label in range(3):
        assert np.allclose(model.centers[label], points[model.labels == label].mean(axis=0))


@pytest.mark.parametrize("seed", range(20))
def test_kmedoids_finds_blobs(seed):
    points = blobs(seed)
    model = kmedoids(points, 3, seed=seed)
    assert same_partition(model.labels, blob_labels())
    assert model.inertia == pytest.approx(brute_force_medoid_cost(points, 3))


@pytest.mark.parametrize("seed", range(10))
def test_kmeans_local_optimum(seed):
    points = np.random.default_rng(100 + seed).normal(size=(15, 3))
    model = kmeans(points, 4, restarts=3, seed=seed)
    distances = np.sum((points[:, None] - model.centers[None]) ** 2, axis=2)
    own = distances[np.arange(len(points)), model.labels]
    assert np.all(own <= distances.min(axis=1) + 1e-9)
    assert model.inertia == pytest.approx(own.sum())
    assert model.inertia_history[-1] == pytest.approx(model.inertia)


@pytest.mark.parametrize("seed", range(10))
def test_kmedoids_swap_optimum(seed):
    points = np.random.default_rng(200 + seed).normal(size=(12, 2))
    model = kmedoids(points, 3, restarts=2, seed=seed)
    distances = np.sum((points[:, None] - points[None]) ** 2, axis=2)
    medoids = list(model.centers)
    assert model.inertia == pytest.approx(distances[:, medoids].min(axis=1).sum())
    for slot in range(3):
        for candidate in range(len(points)):
            if candidate in medoids:
                continue
            trial = list(medoids)
            trial[slot] = candidate
            assert distances[:, trial].min(axis=1).sum() >= model.inertia - 1e-9


@pytest.mark.parametrize("method", [kmeans, kmedoids])
def test_labels_are_canonical(method):
    points = blobs(3)[::-1]
    model = method(points, 3)
    firsts = [int(np.flatnonzero(model.labels == label)[0]) for label in range(3)]
    assert firsts == sorted(firsts)
    assert model.labels[0] == 0


@pytest.mark.parametrize("method", [kmeans, kmedoids])
def test_deterministic(method):
    points = np.random.default_rng(5).normal(size=(20, 2))
    first = method(points, 4, seed=9)
    second = method(points, 4, seed=9)
    assert np.array_equal(first.labels, second.labels)
    assert first.inertia == second.inertia


@pytest.mark.parametrize("method", [kmeans, kmedoids])
def test_k_equals_n(method):
    points = np.arange(8.0).reshape(4, 2)
    model = method(points, 4)
    assert sorted(model.labels) == [0, 1, 2, 3]
    assert model.inertia == pytest.approx(0.0)


def test_kmeans_duplicate_points():
    points = np.array([[0.0, 0.0]] * 4 + [[1.0, 1.0]])
    model = kmeans(points, 3)
    assert len(set(model.labels)) == 3


@pytest.mark.parametrize("method", [kmeans, kmedoids])
def test_invalid_inputs(method):
    points = np.zeros((3, 2))
    with pytest.raises(ConfigurationError):
        method(points, 0)
    with pytest.raises(ConfigurationError):
        method(points, 4)
    with pytest.raises(DataError):
        method(np.array([[0.0, np.nan], [1.0, 1.0]]), 1)


def test_registry():
    assert isinstance(get_clusterer(ClusterMethod.KMeans, k=2), KMeansClusterer)
    assert isinstance(get_clusterer(ClusterMethod.KMedoids, k=2), KMedoidsClusterer)
    model = get_clusterer(ClusterMethod.KMedoids, k=3, restarts=2)(blobs(1))
    assert model.method is ClusterMethod.KMedoids


def make_embeddings(points) -> List[Embedding]:
    return [
        Embedding(EntityKey(f'01{2 * index + 1:03d}'), 30, EmbedMode.Last, np.asarray(point))
        for index, point in enumerate(points)]


@pytest.mark.parametrize("method", list(ClusterMethod))
def test_cluster_entities(tmp_path, method):
    embeddings = make_embeddings(blobs(2))
    model = cluster_entities(embeddings, method, k=3, restarts=2)
    assert model.keys[0] == '01001'
    assert model.metadata['pit'] == 30
    assert model.label_for('1003') == model.labels[1]
    assert set(model.members(0)) == {key for key, label in zip(model.keys, model.labels) if label == 0}

    path = tmp_path / 'clusters.json'
    write_clusters(path, model)
    loaded = read_clusters(path)
    assert loaded.labels_by_key() == model.labels_by_key()
    assert loaded.method is method
    assert loaded.metadata['mode'] == 'last'


def test_kmedoids_dict_names_medoids():
    model = cluster_entities(make_embeddings(blobs(4)), ClusterMethod.KMedoids, k=3, restarts=1)
    data = clusters_to_dict(model)
    assert data['medoids'] == [str(model.keys[index]) for index in model.centers]
    assert np.array_equal(clusters_from_dict(data).centers, model.centers)


def test_read_clusters_errors(tmp_path):
    with pytest.raises(DataError):
        read_clusters(tmp_path / 'missing.json')
    path = tmp_path / 'bad.json'
    path.write_text('{"method": "kmeans"}')
    with pytest.raises(DataError):
        read_clusters(path)


def test_cluster_entities_mixed():
    embeddings = make_embeddings(blobs(2))
    embeddings[0].pit_days = 45
    with pytest.raises(UsageError):
        cluster_entities(embeddings, k=3)


def brute_force_partition_inertia(points: np.ndarray, k: int) -> float:
    best = np.inf
    for labels in product(range(k), repeat=len(points)):
        labels = np.array(labels)
        if len(set(labels)) < k:
            continue
        total = sum(
            np.sum((points[labels == cluster] - points[labels == cluster].mean(axis=0)) ** 2)
            for cluster in range(k))
        best = min(best, total)
    return best


random_fixtures = [
    (seed, int(n), int(dim), int(k))
    for seed, (n, dim, k) in enumerate(
        zip(np.random.default_rng(42).integers(4, 9, 20),
            np.random.default_rng(43).integers(1, 4, 20),
            np.random.default_rng(44).integers(1, 4, 20)))
]


@pytest.mark.parametrize("seed, n, dim, k", random_fixtures)
def test_kmeans_matches_brute_force(seed, n, dim, k):
    points = np.random.default_rng(seed).normal(size=(n, dim))
    model = kmeans(points, k, restarts=10, seed=seed)
    assert model.inertia == pytest.approx(brute_force_partition_inertia(points, k), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("seed, n, dim, k", random_fixtures)
def test_kmedoids_random_matches_brute_force(seed, n, dim, k):
    points = np.random.default_rng(seed).normal(size=(n, dim))
    model = kmedoids(points, k, restarts=10, seed=seed)
    assert model.inertia == pytest.approx(brute_force_medoid_cost(points, k), rel=1e-9, abs=1e-12)
