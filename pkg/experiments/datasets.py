"""
Dataset ingestion, z-score normalization and CSV output.

CSV files carry a header row, an integer ``label`` column, an optional
``origin`` column and numeric feature columns in header order. libsvm files
hold ``label index:value ...`` lines with 1-based feature indices.
"""
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from diffcore.exceptions import FormatError, ParameterError
from diffcore.random import stream
from knn_targets.types import Dataset, NormalizationStats
from oversampler.types import AugmentedDataset

logger = logging.getLogger(__name__)


DATASET_FORMATS = ('csv', 'libsvm')
LABEL_COLUMN = 'label'
ORIGIN_COLUMN = 'origin'


def _remap_labels(path, raw: np.ndarray, feature_names=None, features=None) -> Dataset:
    label_values, labels = np.unique(raw, return_inverse=True)
    if len(label_values) < 2:
        raise FormatError(f"{path}: at least 2 classes are required, found labels {label_values.tolist()}")
    return Dataset(
        features=features,
        labels=labels.reshape(-1),
        n_classes=len(label_values),
        label_values=label_values.astype(np.float64),
        feature_names=feature_names,
    )


def _load_csv(path: Path) -> Dataset:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise FormatError(f"{path}: file is empty")
    columns = [str(c).strip() for c in frame.columns]
    frame.columns = columns
    if LABEL_COLUMN not in columns:
        raise FormatError(f"{path}, line 1: header has no '{LABEL_COLUMN}' column")
    if frame.empty:
        raise FormatError(f"{path}: header found but no data rows")
    feature_names = [c for c in columns if c not in (LABEL_COLUMN, ORIGIN_COLUMN)]
    if not feature_names:
        raise FormatError(f"{path}, line 1: header has no feature columns")

    values = frame[feature_names].apply(lambda column: pd.to_numeric(column.str.strip(), errors='coerce'))
    features = values.to_numpy(dtype=np.float64)
    bad = np.argwhere(~np.isfinite(features))
    if len(bad):
        row, col = bad[0]
        raise FormatError(
            f"{path}, line {row + 2}: non-numeric value '{frame.iat[row, columns.index(feature_names[col])]}' "
            f"in feature column '{feature_names[col]}'"
        )

    raw = pd.to_numeric(frame[LABEL_COLUMN].str.strip(), errors='coerce').to_numpy(dtype=np.float64)
    wrong = np.flatnonzero(~np.isfinite(raw) | (raw != np.round(raw)))
    if len(wrong):
        row = wrong[0]
        raise FormatError(f"{path}, line {row + 2}: label '{frame[LABEL_COLUMN].iat[row]}' is not an integer")
    return _remap_labels(path, raw, feature_names, features)


def _load_libsvm(path: Path, dim: Optional[int] = None) -> Dataset:
    labels, rows, width = [], [], 0
    with open(path, encoding='utf-8') as handle:
        for number, line in enumerate(handle, start=1):
            tokens = line.split('#', 1)[0].split()
            if not tokens:
                continue
            try:
                label = float(tokens[0])
            except ValueError:
                raise FormatError(f"{path}, line {number}: label '{tokens[0]}' is not numeric")
            if label != round(label):
                raise FormatError(f"{path}, line {number}: label '{tokens[0]}' is not an integer")
            entries = {}
            for token in tokens[1:]:
                key, sep, value = token.partition(':')
                if key == 'qid':
                    continue
                try:
                    index, value = int(key), float(value)
                except ValueError:
                    raise FormatError(f"{path}, line {number}: malformed feature '{token}'")
                if not sep or index < 1 or not np.isfinite(value):
                    raise FormatError(f"{path}, line {number}: malformed feature '{token}'")
                entries[index - 1] = value
                width = max(width, index)
            labels.append(label)
            rows.append(entries)
    if not rows:
        raise FormatError(f"{path}: file is empty")
    if dim is not None:
        if width > dim:
            raise FormatError(f"{path}: feature index {width} exceeds the requested dimension {dim}")
        width = dim

    features = np.zeros((len(rows), width))
    for i, entries in enumerate(rows):
        for index, value in entries.items():
            features[i, index] = value
    return _remap_labels(path, np.asarray(labels), features=features)


def load_dataset(path: Union[str, Path], fmt: str = 'csv', dim: Optional[int] = None) -> Dataset:
    """
    Read a labelled dataset on its raw feature scale.

    Labels are remapped to 0..C-1 in sorted order of the original values;
    ``label_values`` keeps the mapping.

    Args:
        path: File to read
        fmt: 'csv' or 'libsvm'
        dim: libsvm only: dense width (default: largest feature index)

    Raises:
        FormatError: On an empty file, a missing label column or a malformed
            value; the message names the line
        OSError: If the file cannot be read
    """
    path = Path(path)
    if fmt not in DATASET_FORMATS:
        raise ParameterError(f"unknown dataset format '{fmt}', expected one of {DATASET_FORMATS}")
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    dataset = _load_csv(path) if fmt == 'csv' else _load_libsvm(path, dim)
    logger.info(
        f"Loaded {path.name}: {dataset.size} samples, {dataset.dim} features, {dataset.n_classes} classes"
    )
    return dataset


def normalize_fit(train: Dataset) -> NormalizationStats:
    """Per-feature mean and population standard deviation of the training split."""
    if train.size == 0:
        raise ParameterError("cannot fit normalization on an empty dataset")
    return NormalizationStats(mean=train.features.mean(axis=0), std=train.features.std(axis=0))


def _scale(stats: NormalizationStats, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    centered = features - stats.mean
    return np.divide(centered, stats.std, out=np.zeros_like(centered), where=stats.std > 0)


def normalize_apply(stats: NormalizationStats, data: Union[Dataset, np.ndarray]) -> Union[Dataset, np.ndarray]:
    """
    Z-score ``data`` with fitted stats; zero-variance features become 0.

    A Dataset comes back as a Dataset that records ``stats``.
    """
    if isinstance(data, Dataset):
        return Dataset(
            features=_scale(stats, data.features),
            labels=data.labels,
            n_classes=data.n_classes,
            stats=stats,
            label_values=data.label_values,
            feature_names=data.feature_names,
        )
    return _scale(stats, data)


def denormalize(stats: Optional[NormalizationStats], features: np.ndarray) -> np.ndarray:
    """Map normalized features back to the raw scale."""
    features = np.asarray(features, dtype=np.float64)
    if stats is None:
        return features
    return features * stats.std + stats.mean


def train_test_split(n: int, test_fraction: float, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Shuffle 0..n-1 and hold out ``floor(test_fraction * n)`` rows for testing."""
    if not 0.0 < test_fraction < 1.0:
        raise ParameterError(f"test fraction must lie in (0, 1), got {test_fraction}")
    held_out = int(np.floor(test_fraction * n))
    order = stream(seed, 'holdout').permutation(n)
    return np.sort(order[held_out:]), np.sort(order[:held_out])


def label_column(label_values: np.ndarray, labels: np.ndarray):
    values = np.asarray(label_values)[labels]
    if np.all(values == np.round(values)):
        return values.astype(np.int64)
    return values


def write_dataset_csv(path: Union[str, Path], data: Union[Dataset, AugmentedDataset]) -> Path:
    """
    Write a dataset, or an augmented dataset with its ``origin`` column, on
    the raw feature scale.
    """
    path = Path(path)
    origins = None
    if isinstance(data, AugmentedDataset):
        origins = data.origins()
        data = data.combined()
    names = data.feature_names or [f'x{i + 1}' for i in range(data.dim)]
    frame = pd.DataFrame(denormalize(data.stats, data.features), columns=names)
    frame[LABEL_COLUMN] = label_column(data.label_values, data.labels)
    if origins is not None:
        frame[ORIGIN_COLUMN] = origins
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator='\n')
    logger.info(f"Wrote {data.size} rows to {path}")
    return path


def align_labels(dataset: Dataset, label_values: np.ndarray) -> Dataset:
    """
    Re-express class ids against a stored label mapping, so a test file
    missing some classes still lines up with the training classes.

    Raises:
        FormatError: If the dataset has a label outside ``label_values``
    """
    label_values = np.asarray(label_values, dtype=np.float64)
    raw = np.asarray(dataset.label_values, dtype=np.float64)[dataset.labels]
    position = np.searchsorted(label_values, raw)
    position = np.minimum(position, len(label_values) - 1)
    unknown = label_values[position] != raw
    if unknown.any():
        raise FormatError(
            f"labels {sorted(set(raw[unknown].tolist()))} are not among the training labels {label_values.tolist()}"
        )
    return Dataset(
        features=dataset.features,
        labels=position,
        n_classes=len(label_values),
        stats=dataset.stats,
        label_values=label_values,
        feature_names=dataset.feature_names,
    )


def read_origins(path: Union[str, Path]) -> Optional[List[str]]:
    """The ``origin`` column of a csv dataset, or None when it has none."""
    header = [str(c).strip() for c in pd.read_csv(path, nrows=0).columns]
    if ORIGIN_COLUMN not in header:
        return None
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    frame.columns = header
    return frame[ORIGIN_COLUMN].str.strip().tolist()
