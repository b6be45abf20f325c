"""
Binary targets and checkpoint files.

Every integer is int64 and every real float64, both little-endian; strings
are UTF-8 behind an int64 byte length.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from diffcore.exceptions import FormatError
from knn_targets.types import NeighborTargets, NormalizationStats
from training_eval.checkpoint import CHECKPOINT_VERSION, Checkpoint
from training_eval.config import TrainConfig

logger = logging.getLogger(__name__)


TARGETS_MAGIC = b'KNNT1'
CHECKPOINT_MAGIC = b'KNNSEQ1'
INT = np.dtype('<i8')
REAL = np.dtype('<f8')


class _Writer:
    def __init__(self):
        self.chunks = []

    def raw(self, data: bytes):
        self.chunks.append(data)

    def ints(self, *values):
        self.chunks.append(np.asarray(values, dtype=INT).tobytes())

    def reals(self, values):
        self.chunks.append(np.ascontiguousarray(values, dtype=REAL).tobytes())

    def string(self, text: str):
        encoded = text.encode('utf-8')
        self.ints(len(encoded))
        self.chunks.append(encoded)

    def save(self, path: Path) -> int:
        data = b''.join(self.chunks)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        return len(data)


class _Reader:
    def __init__(self, path: Path):
        self.path = path
        self.data = path.read_bytes()
        self.offset = 0

    def _take(self, size: int) -> bytes:
        if size < 0 or self.offset + size > len(self.data):
            raise FormatError(f"{self.path}: truncated at byte {self.offset}, {size} more bytes expected")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def magic(self, expected: bytes, what: str):
        if self._take(len(expected)) != expected:
            raise FormatError(f"{self.path}: not a {what} (magic {expected!r} missing)")

    def ints(self, count: int) -> np.ndarray:
        return np.frombuffer(self._take(count * INT.itemsize), dtype=INT).astype(np.int64)

    def int(self) -> int:
        return int(self.ints(1)[0])

    def reals(self, count: int) -> np.ndarray:
        return np.frombuffer(self._take(count * REAL.itemsize), dtype=REAL).astype(np.float64)

    def records(self, dtype: np.dtype, count: int) -> np.ndarray:
        return np.frombuffer(self._take(count * dtype.itemsize), dtype=dtype)

    def string(self) -> str:
        return self._take(self.int()).decode('utf-8')

    def finish(self):
        if self.offset != len(self.data):
            raise FormatError(f"{self.path}: {len(self.data) - self.offset} unexpected trailing bytes")


def _record_dtype(k: int, d: int) -> np.dtype:
    return np.dtype([('labels', INT, (k,)), ('vectors', REAL, (k * d,)), ('distances', REAL, (k,))])


@dataclass
class TargetsFile:
    """Neighbor targets with the label mapping and normalization they were built under."""

    targets: NeighborTargets
    label_values: np.ndarray
    stats: Optional[NormalizationStats] = None

    @property
    def n_classes(self) -> int:
        return len(self.label_values)


def targets_file_size(k: int, d: int, n: int, c: int, has_stats: bool) -> int:
    """Byte length of a targets file, computable from its header."""
    header = len(TARGETS_MAGIC) + 8 * 4 + 8 * c + 8 + (16 * d if has_stats else 0)
    return header + n * 8 * (k + k * d + k)


def save_targets(path: Union[str, Path], targets: NeighborTargets, label_values: np.ndarray,
                 stats: Optional[NormalizationStats] = None) -> Path:
    path = Path(path)
    n, k, d = targets.size, targets.k, targets.dim
    label_values = np.asarray(label_values, dtype=np.float64)
    writer = _Writer()
    writer.raw(TARGETS_MAGIC)
    writer.ints(k, d, n, len(label_values))
    writer.reals(label_values)
    writer.ints(0 if stats is None else 1)
    if stats is not None:
        writer.reals(stats.mean)
        writer.reals(stats.std)
    records = np.empty(n, dtype=_record_dtype(k, d))
    records['labels'] = targets.labels
    records['vectors'] = targets.vectors.reshape(n, k * d)
    records['distances'] = targets.distances
    writer.raw(records.tobytes())
    size = writer.save(path)
    logger.info(f"Wrote targets for {n} samples (K={k}, d={d}) to {path} ({size} bytes)")
    return path


def load_targets(path: Union[str, Path]) -> TargetsFile:
    """
    Raises:
        FileNotFoundError: If ``path`` does not exist
        FormatError: On a bad magic, a truncated body or trailing bytes
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"targets file not found: {path}")
    reader = _Reader(path)
    reader.magic(TARGETS_MAGIC, 'targets file')
    k, d, n, c = (int(v) for v in reader.ints(4))
    if min(k, d, n, c) < 0:
        raise FormatError(f"{path}: negative header value in K={k}, d={d}, N={n}, C={c}")
    label_values = reader.reals(c)
    stats = None
    if reader.int():
        stats = NormalizationStats(mean=reader.reals(d), std=reader.reals(d))
    records = reader.records(_record_dtype(k, d), n)
    reader.finish()
    targets = NeighborTargets(
        labels=records['labels'].astype(np.int64),
        vectors=records['vectors'].reshape(n, k, d).astype(np.float64),
        distances=records['distances'].astype(np.float64),
    )
    return TargetsFile(targets=targets, label_values=label_values, stats=stats)


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> Path:
    path = Path(path)
    block = {
        'version': checkpoint.version,
        'd': checkpoint.d,
        'n_classes': checkpoint.n_classes,
        'train': checkpoint.config.to_dict(),
    }
    writer = _Writer()
    writer.raw(CHECKPOINT_MAGIC)
    writer.string(checkpoint.kind)
    writer.string(json.dumps(block, sort_keys=True))
    writer.ints(checkpoint.n_classes)
    writer.reals(checkpoint.label_values)
    writer.ints(0 if checkpoint.stats is None else 1)
    if checkpoint.stats is not None:
        writer.reals(checkpoint.stats.mean)
        writer.reals(checkpoint.stats.std)

    for names in (checkpoint.parameter_names, checkpoint.buffer_names):
        writer.ints(len(names))
        for name in names:
            values = checkpoint.state[name]
            writer.string(name)
            writer.ints(values.ndim, *values.shape)
            writer.reals(values)
    size = writer.save(path)
    logger.info(f"Wrote {checkpoint.kind} checkpoint to {path} ({size} bytes)")
    return path


def _read_records(reader: _Reader, state: dict) -> list:
    names = []
    for _ in range(reader.int()):
        name = reader.string()
        ndim = reader.int()
        shape = tuple(int(v) for v in reader.ints(ndim))
        state[name] = reader.reals(int(np.prod(shape, dtype=np.int64))).reshape(shape)
        names.append(name)
    return names


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Raises:
        FileNotFoundError: If ``path`` does not exist
        FormatError: On a bad magic, an unknown version or a malformed body
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint file not found: {path}")
    reader = _Reader(path)
    reader.magic(CHECKPOINT_MAGIC, 'checkpoint file')
    kind = reader.string()
    try:
        block = json.loads(reader.string())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: config block is not valid JSON ({exc})")
    if block.get('version') != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: checkpoint version {block.get('version')} is not supported")
    n_classes = reader.int()
    label_values = reader.reals(n_classes)
    d = int(block['d'])
    stats = None
    if reader.int():
        stats = NormalizationStats(mean=reader.reals(d), std=reader.reals(d))
    state = {}
    parameter_names = _read_records(reader, state)
    _read_records(reader, state)
    reader.finish()
    return Checkpoint(
        kind=kind,
        config=TrainConfig.from_dict(block['train']),
        d=d,
        n_classes=n_classes,
        label_values=label_values,
        state=state,
        parameter_names=parameter_names,
        stats=stats,
        version=block['version'],
    )


def metrics_json(record: dict) -> str:
    return json.dumps(record, sort_keys=True, indent=2) + '\n'


def write_metrics(path: Union[str, Path], record: dict) -> Path:
    """Metrics as sorted, indented JSON; callers keep timings out of ``record``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(metrics_json(record), encoding='utf-8')
    logger.info(f"Wrote metrics to {path}")
    return path
