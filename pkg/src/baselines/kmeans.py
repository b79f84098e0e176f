from typing import Optional, Tuple
import logging

import numpy as np
from sklearn.cluster import kmeans_plusplus

from src.models.segmentation_model import PixelBatch, RunConfig
from src.models.errors import InvalidInputError


def squared_distances(samples: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Квадраты евклидовых расстояний N×K"""
    return np.sum((samples[:, np.newaxis, :] - centroids[np.newaxis, :, :]) ** 2, axis=2)


def nearest_centroid(samples: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Индекс ближайшего центроида; при равенстве меньший индекс"""
    return np.argmin(squared_distances(samples, centroids), axis=1)


def kmeans_inertia(samples: np.ndarray, centroids: np.ndarray) -> float:
    """Сумма квадратов расстояний до ближайших центроидов"""
    return float(np.sum(np.min(squared_distances(samples, centroids), axis=1)))


class MiniBatchKMeans:
    """Минибатчевый k-means с посевом k-means++ и темпом 1/count для каждого центроида.

    Счётчики сбрасываются в начале каждой эпохи, поэтому при batch_size ≥ N
    одна эпоха совпадает с итерацией Ллойда.
    """

    def __init__(self, k: int, config: RunConfig):
        self.k = k
        self.config = config
        self.logger = logging.getLogger(__name__)
        self.centroids_: Optional[np.ndarray] = None
        self.labels_: Optional[np.ndarray] = None
        self.inertia_: Optional[float] = None
        self.n_epochs_ = 0

    def fit(self, batch: PixelBatch) -> 'MiniBatchKMeans':
        samples = batch.samples
        n = samples.shape[0]
        if self.k < 1 or n < self.k:
            raise InvalidInputError(f"k-means needs 1 ≤ K ≤ N, got K={self.k}, N={n}")

        centroids, _ = kmeans_plusplus(samples, n_clusters=self.k, random_state=self.config.seed % (2 ** 32))
        centroids = np.array(centroids, dtype=np.float64)
        rng = np.random.default_rng(self.config.seed)
        batch_size = min(self.config.batch_size, n)

        for epoch in range(self.config.epochs):
            previous = centroids.copy()
            counts = np.zeros(self.k)
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                minibatch = samples[order[start:start + batch_size]]
                assignment = nearest_centroid(minibatch, centroids)
                for j in range(self.k):
                    members = minibatch[assignment == j]
                    if members.shape[0] == 0:
                        continue
                    counts[j] += members.shape[0]
                    centroids[j] += (members.sum(axis=0) - members.shape[0] * centroids[j]) / counts[j]
            self.n_epochs_ = epoch + 1
            movement = float(np.max(np.linalg.norm(centroids - previous, axis=1)))
            self.logger.debug(f"k-means epoch {epoch + 1}: max centroid movement {movement:.3e}")
            if movement < self.config.kmeans_tolerance:
                break

        self.centroids_ = centroids
        self.labels_ = nearest_centroid(samples, centroids)
        self.inertia_ = kmeans_inertia(samples, centroids)
        self.logger.info(f"Minibatch k-means (K={self.k}) finished after {self.n_epochs_} epochs, inertia={self.inertia_:.6f}")
        return self


def minibatch_kmeans(batch: PixelBatch, k: int, config: RunConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Возвращает (центроиды K×D, метки пикселей)"""
    model = MiniBatchKMeans(k, config).fit(batch)
    return model.centroids_, model.labels_
