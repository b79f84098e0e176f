from dataclasses import dataclass, field
from typing import List, Optional, Tuple
from enum import Enum

import numpy as np
from skimage.segmentation import relabel_sequential

from src.models.errors import InvalidInputError


class Layout(Enum):
    BLOB = "blob"
    STRIPES = "stripes"
    VORONOI = "voronoi"


class LikelihoodScale(Enum):
    """Масштаб правдоподобия в 𝓛_C: сумма по пикселям или среднее на пиксель"""
    SUM = "sum"
    MEAN = "mean"


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """Изображение H×W×C с вещественными интенсивностями (обычно в [0,1])"""
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, np.newaxis]
        if data.ndim != 3 or data.shape[2] < 1 or data.size == 0:
            raise InvalidInputError(f"image must be H×W×C with C ≥ 1, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("image contains non-finite values")
        object.__setattr__(self, 'data', data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def in_unit_range(self) -> bool:
        """Проверяет, что все значения лежат в [0,1]"""
        return bool(self.data.min() >= 0.0 and self.data.max() <= 1.0)


@dataclass(frozen=True, eq=False)
class PixelBatch:
    """N пикселей по D каналов (матрица X)"""
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, np.newaxis]
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise InvalidInputError(f"pixel batch must be N×D with N, D ≥ 1, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("pixel batch contains non-finite rows")
        object.__setattr__(self, 'samples', samples)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def subset(self, indices: np.ndarray) -> 'PixelBatch':
        return PixelBatch(self.samples[indices])


@dataclass(frozen=True, eq=False)
class BatchStats:
    """Наблюдаемое среднее и (ограниченная снизу) дисперсия минибатча по каналам"""
    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Параметры смеси Θ: веса α, средние μ (K×D), ковариации Σ (K×D×D)"""
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        means = np.asarray(self.means, dtype=np.float64)
        covariances = np.asarray(self.covariances, dtype=np.float64)
        if means.ndim != 2:
            raise InvalidInputError(f"means must be K×D, got shape {means.shape}")
        k, d = means.shape
        if weights.shape != (k,) or covariances.shape != (k, d, d):
            raise InvalidInputError(
                f"inconsistent mixture shapes: weights {weights.shape}, means {means.shape}, "
                f"covariances {covariances.shape}"
            )
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(covariances))):
            raise InvalidInputError("mixture parameters contain non-finite values")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise InvalidInputError(f"mixture weights must lie on the simplex, sum={weights.sum()}")
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'means', means)
        object.__setattr__(self, 'covariances', covariances)

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True, eq=False)
class PosteriorField:
    """Апостериорные вероятности γ (N×K), каждая строка на симплексе"""
    gamma: np.ndarray

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=np.float64)
        if gamma.ndim != 2:
            raise InvalidInputError(f"posterior must be N×K, got shape {gamma.shape}")
        if np.any(gamma < 0) or np.any(np.abs(gamma.sum(axis=1) - 1.0) > 1e-9):
            raise InvalidInputError("posterior rows must be probability vectors")
        object.__setattr__(self, 'gamma', gamma)

    @property
    def n_samples(self) -> int:
        return self.gamma.shape[0]

    @property
    def k(self) -> int:
        return self.gamma.shape[1]

    def hard_labels(self) -> np.ndarray:
        """argmax по классам; при равенстве побеждает меньший индекс"""
        return np.argmax(self.gamma, axis=1)


@dataclass(frozen=True, eq=False)
class SegmentationMask:
    """Семантическая маска: метки классов из [0, K)"""
    labels: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise InvalidInputError(f"mask must be H×W, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise InvalidInputError(f"mask labels must lie in [0, {self.k})")
        object.__setattr__(self, 'labels', labels.astype(np.int64))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def class_ratios(self) -> np.ndarray:
        """Доля пикселей каждого класса"""
        counts = np.bincount(self.labels.ravel(), minlength=self.k)
        return counts / self.labels.size


@dataclass(frozen=True, eq=False)
class InstanceMask:
    """Карта экземпляров: 0 означает фон, каждый положительный id отдельный объект"""
    ids: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids)
        if ids.ndim != 2:
            raise InvalidInputError(f"instance mask must be H×W, got shape {ids.shape}")
        if ids.size and ids.min() < 0:
            raise InvalidInputError("instance ids must be non-negative")
        object.__setattr__(self, 'ids', ids.astype(np.int64))

    def canonical(self) -> 'InstanceMask':
        """Перенумеровывает экземпляры в непрерывный набор {0..M}"""
        relabeled, _, _ = relabel_sequential(self.ids)
        return InstanceMask(relabeled)

    @property
    def n_instances(self) -> int:
        return int(np.count_nonzero(np.unique(self.ids)))


@dataclass(frozen=True)
class RunConfig:
    """Параметры одного прогона (обучение, EM, k-means)"""
    k: int = 3
    lam: float = 0.005
    learning_rate: float = 5e-5
    lr_decay: float = 0.98
    epochs: int = 200
    batch_size: int = 4096
    seed: int = 0
    gamma_floor: float = 1e-8
    covariance_floor: float = 1e-6
    variance_floor: float = 1e-6
    hidden_widths: Tuple[int, ...] = (32, 32)
    grad_clip: Optional[float] = None
    augment: bool = False
    em_tolerance: float = 1e-7
    kmeans_tolerance: float = 1e-6
    likelihood_scale: LikelihoodScale = LikelihoodScale.SUM
    pull_limit: bool = False
    init_em_iterations: int = 10
    warmup_epochs: int = 5

    def __post_init__(self):
        if isinstance(self.likelihood_scale, str):
            try:
                object.__setattr__(self, 'likelihood_scale', LikelihoodScale(self.likelihood_scale))
            except ValueError:
                raise InvalidInputError(f"unknown likelihood_scale '{self.likelihood_scale}'") from None
        if self.k < 2:
            raise InvalidInputError(f"k must be at least 2, got {self.k}")
        if self.lam < 0:
            raise InvalidInputError(f"lambda must be non-negative, got {self.lam}")
        if not 0 < self.lr_decay <= 1:
            raise InvalidInputError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if min(self.gamma_floor, self.covariance_floor, self.variance_floor) <= 0:
            raise InvalidInputError("all floors must be positive")
        if self.gamma_floor * self.k >= 1:
            raise InvalidInputError("gamma_floor too large for the class count")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("epochs and batch_size must be positive")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise InvalidInputError("grad_clip must be positive when set")
        if self.init_em_iterations < 0 or self.warmup_epochs < 0:
            raise InvalidInputError("init_em_iterations and warmup_epochs must be non-negative")
        object.__setattr__(self, 'hidden_widths', tuple(int(w) for w in self.hidden_widths))

    @property
    def per_pixel(self) -> bool:
        return self.likelihood_scale is LikelihoodScale.MEAN


@dataclass(frozen=True)
class SyntheticSpec:
    """Описание синтетического изображения с известной разметкой"""
    width: int = 64
    height: int = 64
    k: int = 3
    layout: Layout = Layout.BLOB
    class_means: Tuple[Tuple[float, ...], ...] = (
        (0.85, 0.25, 0.25),
        (0.25, 0.8, 0.3),
        (0.25, 0.3, 0.85),
    )
    class_stds: Tuple[Tuple[float, ...], ...] = (
        (0.03, 0.03, 0.03),
        (0.03, 0.03, 0.03),
        (0.03, 0.03, 0.03),
    )
    outlier_fraction: float = 0.0
    outlier_mean: Tuple[float, ...] = (0.97, 0.97, 0.97)
    outlier_std: Tuple[float, ...] = (0.01, 0.01, 0.01)
    outlier_blob: bool = False

    def __post_init__(self):
        if isinstance(self.layout, str):
            object.__setattr__(self, 'layout', Layout(self.layout))
        means = np.asarray(self.class_means, dtype=np.float64)
        stds = np.asarray(self.class_stds, dtype=np.float64)
        if self.width < 1 or self.height < 1 or self.k < 1:
            raise InvalidInputError("synthetic image needs positive size and class count")
        if means.shape[0] != self.k or stds.shape != means.shape:
            raise InvalidInputError(
                f"need {self.k} class means and stds of equal shape, got {means.shape} and {stds.shape}"
            )
        if np.any(means < 0) or np.any(means > 1):
            raise InvalidInputError("class means must lie in [0,1]")
        if np.any(stds < 0) or np.any(np.asarray(self.outlier_std) < 0):
            raise InvalidInputError("standard deviations must be non-negative")
        if not 0 <= self.outlier_fraction < 1:
            raise InvalidInputError("outlier_fraction must lie in [0,1)")
        if len(self.outlier_mean) != means.shape[1] or len(self.outlier_std) != means.shape[1]:
            raise InvalidInputError("outlier distribution must match the channel count")
        object.__setattr__(self, 'class_means', tuple(tuple(float(v) for v in row) for row in means))
        object.__setattr__(self, 'class_stds', tuple(tuple(float(v) for v in row) for row in stds))
        object.__setattr__(self, 'outlier_mean', tuple(float(v) for v in self.outlier_mean))
        object.__setattr__(self, 'outlier_std', tuple(float(v) for v in self.outlier_std))

    @property
    def channels(self) -> int:
        return len(self.class_means[0])


@dataclass
class LabeledImage:
    """Изображение датасета вместе с разметкой"""
    name: str
    image: ImageTensor
    mask: Optional[SegmentationMask] = None
    instances: Optional[InstanceMask] = None


@dataclass
class SegmentationDataset:
    """Набор размеченных изображений"""
    samples: List[LabeledImage] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def images(self) -> List[ImageTensor]:
        return [s.image for s in self.samples]

    def has_ground_truth(self) -> bool:
        return bool(self.samples) and all(s.mask is not None for s in self.samples)
