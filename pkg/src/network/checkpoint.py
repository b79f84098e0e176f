from pathlib import Path
from typing import Tuple
import logging

import numpy as np

from src.network.posterior_network import NetworkParams, DenseLayer
from src.models.segmentation_model import MixtureParams
from src.models.errors import InvalidInputError

logger = logging.getLogger(__name__)

MAGIC = b"CGMM1"
_U32 = np.dtype('<u4')
_F64 = np.dtype('<f8')


def _u32(*values: int) -> bytes:
    return np.asarray(values, dtype=_U32).tobytes()


def _f64(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype=_F64).tobytes()


def encode_checkpoint(network: NetworkParams, mixture: MixtureParams) -> bytes:
    """Бинарный формат: "CGMM1", число слоёв, слои (rows, cols, веса, смещения), затем α, μ, Σ.

    Для моделей без сети (EM, k-means) число слоёв равно 0, и перед блоком
    смеси записываются K и D, так как вывести их из слоёв нельзя.
    """
    parts = [MAGIC, _u32(len(network.layers))]
    for layer in network.layers:
        parts.append(_u32(layer.fan_in, layer.fan_out))
        parts.append(_f64(layer.weights))
        parts.append(_f64(layer.bias))
    if not network.layers:
        parts.append(_u32(mixture.k, mixture.dim))
    parts.extend([_f64(mixture.weights), _f64(mixture.means), _f64(mixture.covariances)])
    return b"".join(parts)


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, dtype: np.dtype, count: int) -> np.ndarray:
        size = dtype.itemsize * count
        if self.offset + size > len(self.payload):
            raise InvalidInputError("checkpoint is truncated")
        values = np.frombuffer(self.payload, dtype=dtype, count=count, offset=self.offset)
        self.offset += size
        return values.astype(np.float64 if dtype == _F64 else np.int64)


def decode_checkpoint(payload: bytes) -> Tuple[NetworkParams, MixtureParams]:
    """Разбирает содержимое файла контрольной точки"""
    if not payload.startswith(MAGIC):
        raise InvalidInputError("not a CGMM1 checkpoint (bad magic)")
    reader = _Reader(payload)
    reader.offset = len(MAGIC)
    layer_count = int(reader.take(_U32, 1)[0])
    layers = []
    for _ in range(layer_count):
        rows, cols = (int(v) for v in reader.take(_U32, 2))
        weights = reader.take(_F64, rows * cols).reshape(rows, cols)
        bias = reader.take(_F64, cols)
        layers.append(DenseLayer(weights=weights, bias=bias))
    if layers:
        k, dim = layers[-1].fan_out, layers[0].fan_in
    else:
        k, dim = (int(v) for v in reader.take(_U32, 2))
    weights = reader.take(_F64, k)
    means = reader.take(_F64, k * dim).reshape(k, dim)
    covariances = reader.take(_F64, k * dim * dim).reshape(k, dim, dim)
    if reader.offset != len(payload):
        raise InvalidInputError("checkpoint has trailing bytes")
    return NetworkParams(layers), MixtureParams(weights=weights, means=means, covariances=covariances)


def save_checkpoint(path: Path, network: NetworkParams, mixture: MixtureParams) -> Path:
    """Сохраняет сеть и параметры смеси"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(network, mixture))
    logger.info(f"Checkpoint written: {path}")
    return path


def load_checkpoint(path: Path) -> Tuple[NetworkParams, MixtureParams]:
    """Загружает контрольную точку"""
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())
