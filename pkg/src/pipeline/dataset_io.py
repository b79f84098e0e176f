from pathlib import Path
from typing import Dict, List, Optional
import logging
import warnings

import numpy as np
from skimage import io as skio

from src.pipeline.preprocessing import minmax_normalize
from src.models.segmentation_model import (
    ImageTensor, SegmentationMask, InstanceMask, LabeledImage, SegmentationDataset,
)
from src.models.errors import InvalidInputError

MASK_SUFFIX = "_mask"
INSTANCE_SUFFIX = "_inst"
IMAGE_EXTENSION = ".png"

# фиксированная палитра классов для наложений
PALETTE = np.array([
    [230, 25, 75], [60, 180, 75], [0, 130, 200], [255, 225, 25],
    [145, 30, 180], [70, 240, 240], [245, 130, 48], [240, 50, 230],
], dtype=np.uint8)
TP_COLOR = (0, 200, 0)
FP_COLOR = (255, 220, 0)
FN_COLOR = (220, 0, 0)
OVERLAY_ALPHA = 0.5


def write_png(path: Path, array: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        skio.imsave(str(path), array, check_contrast=False)
    return path


def _read_png(path: Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"file not found: {path}")
    try:
        return np.asarray(skio.imread(str(path)))
    except (OSError, ValueError) as e:
        raise InvalidInputError(f"cannot read image {path}: {e}") from e


def read_image(path: Path) -> ImageTensor:
    """Читает 8- или 16-битный PNG в [0,1]; альфа-канал отбрасывается"""
    raw = _read_png(path)
    if raw.ndim == 3 and raw.shape[2] == 4:
        raw = raw[:, :, :3]
    scale = float(np.iinfo(raw.dtype).max) if np.issubdtype(raw.dtype, np.integer) else 1.0
    return ImageTensor(raw.astype(np.float64) / scale)


def write_image(path: Path, img: ImageTensor) -> Path:
    """Пишет изображение в [0,1] как 8-битный PNG"""
    data = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    if img.channels == 1:
        data = data[:, :, 0]
    return write_png(path, data)


def read_mask(path: Path, k: Optional[int] = None) -> SegmentationMask:
    """8-битная маска классов 0..K−1; без явного K берётся max+1"""
    raw = _read_png(path)
    if raw.ndim != 2:
        raise InvalidInputError(f"mask {path} must be single-channel, got shape {raw.shape}")
    labels = raw.astype(np.int64)
    return SegmentationMask(labels=labels, k=k if k is not None else max(int(labels.max()) + 1, 2))


def write_mask(path: Path, mask: SegmentationMask) -> Path:
    if mask.k > 256:
        raise InvalidInputError(f"8-bit masks hold at most 256 classes, got {mask.k}")
    return write_png(path, mask.labels.astype(np.uint8))


def read_instances(path: Path) -> InstanceMask:
    raw = _read_png(path)
    if raw.ndim != 2:
        raise InvalidInputError(f"instance mask {path} must be single-channel, got shape {raw.shape}")
    return InstanceMask(raw.astype(np.int64))


def write_instances(path: Path, instances: InstanceMask) -> Path:
    """16-битная карта экземпляров, 0 означает фон"""
    canonical = instances.canonical()
    if canonical.ids.max() > np.iinfo(np.uint16).max:
        raise InvalidInputError("too many instances for a 16-bit instance mask")
    return write_png(path, canonical.ids.astype(np.uint16))


def palette_overlay(img: ImageTensor, mask: SegmentationMask, alpha: float = OVERLAY_ALPHA) -> np.ndarray:
    """Полупрозрачная раскраска классов поверх изображения (uint8 RGB)"""
    base = img.data if img.channels == 3 else np.repeat(img.data[:, :, :1], 3, axis=2)
    colors = PALETTE[mask.labels % len(PALETTE)].astype(np.float64) / 255.0
    return np.clip(np.rint(((1 - alpha) * base + alpha * colors) * 255.0), 0, 255).astype(np.uint8)


def error_overlay(img: ImageTensor, pred: SegmentationMask, gt: SegmentationMask,
                  foreground_class: int = 1, alpha: float = OVERLAY_ALPHA) -> np.ndarray:
    """Наложение TP/FP/FN для класса переднего плана (зелёный/жёлтый/красный)"""
    base = img.data if img.channels == 3 else np.repeat(img.data[:, :, :1], 3, axis=2)
    predicted = pred.labels == foreground_class
    actual = gt.labels == foreground_class
    overlay = base.copy()
    for region, color in ((predicted & actual, TP_COLOR), (predicted & ~actual, FP_COLOR),
                          (~predicted & actual, FN_COLOR)):
        overlay[region] = (1 - alpha) * base[region] + alpha * np.asarray(color) / 255.0
    return np.clip(np.rint(overlay * 255.0), 0, 255).astype(np.uint8)


class DatasetLoader:
    """Загрузка и сохранение папки датасета: <name>.png, <name>_mask.png, <name>_inst.png"""

    def __init__(self, dataset_dir: Path, k: Optional[int] = None):
        self.dataset_dir = Path(dataset_dir)
        self.k = k
        self.logger = logging.getLogger(__name__)

    def scan(self) -> Dict[str, Dict[str, Path]]:
        """Группирует файлы папки по имени изображения"""
        if not self.dataset_dir.is_dir():
            raise InvalidInputError(f"dataset directory does not exist: {self.dataset_dir}")
        entries: Dict[str, Dict[str, Path]] = {}
        for path in sorted(self.dataset_dir.glob(f"*{IMAGE_EXTENSION}")):
            stem = path.stem
            if stem.endswith(MASK_SUFFIX):
                entries.setdefault(stem[:-len(MASK_SUFFIX)], {})['mask'] = path
            elif stem.endswith(INSTANCE_SUFFIX):
                entries.setdefault(stem[:-len(INSTANCE_SUFFIX)], {})['instances'] = path
            else:
                entries.setdefault(stem, {})['image'] = path
        return entries

    def load(self) -> SegmentationDataset:
        """Читает изображения (с min-max нормализацией) и доступную разметку"""
        samples: List[LabeledImage] = []
        for name, files in self.scan().items():
            if 'image' not in files:
                self.logger.warning(f"Annotation without image ignored: {name}")
                continue
            image = minmax_normalize(read_image(files['image']))
            mask = read_mask(files['mask'], self.k) if 'mask' in files else None
            instances = read_instances(files['instances']) if 'instances' in files else None
            samples.append(LabeledImage(name=name, image=image, mask=mask, instances=instances))

        if not samples:
            raise InvalidInputError(f"no images found in {self.dataset_dir}")
        if self.k is None and all(s.mask is not None for s in samples):
            k = max(s.mask.k for s in samples)
            for s in samples:
                s.mask = SegmentationMask(labels=s.mask.labels, k=k)
        self.logger.info(
            f"Loaded {len(samples)} images from {self.dataset_dir} "
            f"({sum(s.mask is not None for s in samples)} with masks, "
            f"{sum(s.instances is not None for s in samples)} with instances)"
        )
        return SegmentationDataset(samples)

    def save(self, dataset: SegmentationDataset) -> List[Path]:
        """Записывает датасет в папку в том же формате"""
        written = []
        for sample in dataset.samples:
            written.append(write_image(self.dataset_dir / f"{sample.name}{IMAGE_EXTENSION}", sample.image))
            if sample.mask is not None:
                written.append(write_mask(self.dataset_dir / f"{sample.name}{MASK_SUFFIX}{IMAGE_EXTENSION}", sample.mask))
            if sample.instances is not None:
                written.append(write_instances(
                    self.dataset_dir / f"{sample.name}{INSTANCE_SUFFIX}{IMAGE_EXTENSION}", sample.instances))
        self.logger.info(f"Wrote {len(written)} files to {self.dataset_dir}")
        return written


def load_dataset(dataset_dir: Path, k: Optional[int] = None) -> SegmentationDataset:
    return DatasetLoader(dataset_dir, k).load()


def save_dataset(dataset: SegmentationDataset, dataset_dir: Path) -> List[Path]:
    return DatasetLoader(dataset_dir).save(dataset)
