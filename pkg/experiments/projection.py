"""
Two-dimensional PCA projection of a dataset for inspecting oversampling
results, with CSV output and an optional scatter plot.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import matplotlib
matplotlib.use('Agg')  # Use non-interactive backend
from matplotlib import pyplot as plt
import numpy as np
import pandas as pd

from diffcore.exceptions import ParameterError
from diffcore.random import stream

logger = logging.getLogger(__name__)


MAX_POWER_ITERATIONS = 10000


@dataclass
class Projection:
    """Coordinates [N x 2], principal axes [2 x d] and the variance along each."""

    coordinates: np.ndarray
    components: np.ndarray
    variances: np.ndarray


def _orient(vector: np.ndarray) -> np.ndarray:
    pivot = np.argmax(np.abs(vector))
    return -vector if vector[pivot] < 0 else vector


def _leading_eigenvector(matrix: np.ndarray, start: np.ndarray, against: Optional[np.ndarray], tolerance: float):
    vector = start
    for iteration in range(MAX_POWER_ITERATIONS):
        if against is not None:
            vector = vector - against * (against @ vector)
        image = matrix @ vector
        norm = np.linalg.norm(image)
        if norm == 0.0:
            return vector / np.linalg.norm(vector), 0.0
        image = image / norm
        if np.linalg.norm(image - vector) < tolerance:
            vector = image
            break
        vector = image
    else:
        logger.debug(f"Power iteration stopped after {MAX_POWER_ITERATIONS} steps without reaching {tolerance}")
    return vector, float(vector @ matrix @ vector)


def pca_project(features: np.ndarray, tolerance: float = 1e-9) -> Projection:
    """
    Top two principal components by power iteration on the covariance.

    The second component is found on the deflated covariance and kept
    orthogonal to the first. Each axis is signed so its largest entry is
    positive.

    Raises:
        ParameterError: If there are fewer than 2 rows or 2 features
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ParameterError(f"projection needs at least 2 samples, got shape {features.shape}")
    if features.shape[1] < 2:
        raise ParameterError(f"projection needs at least 2 features, got {features.shape[1]}")

    centered = features - features.mean(axis=0)
    covariance = centered.T @ centered / features.shape[0]
    rng = stream(0, 'projection')
    start = rng.normal(size=features.shape[1])
    first, first_variance = _leading_eigenvector(covariance, start / np.linalg.norm(start), None, tolerance)

    deflated = covariance - first_variance * np.outer(first, first)
    start = rng.normal(size=features.shape[1])
    start = start - first * (first @ start)
    second, second_variance = _leading_eigenvector(deflated, start / np.linalg.norm(start), first, tolerance)

    components = np.stack([_orient(first), _orient(second)])
    return Projection(
        coordinates=centered @ components.T,
        components=components,
        variances=np.array([first_variance, max(second_variance, 0.0)]),
    )


def write_projection_csv(path: Union[str, Path], projection: Projection, labels: np.ndarray,
                         origins: Optional[List[str]] = None) -> Path:
    path = Path(path)
    frame = pd.DataFrame({
        'pc1': projection.coordinates[:, 0],
        'pc2': projection.coordinates[:, 1],
        'label': labels,
        'origin': origins if origins is not None else ['original'] * len(labels),
    })
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator='\n')
    logger.info(f"Wrote {len(frame)} projected rows to {path}")
    return path


def plot_projection(path: Union[str, Path], projection: Projection, labels: np.ndarray,
                    origins: Optional[List[str]] = None) -> Path:
    """Scatter plot: original rows as dots, synthetic rows as crosses, colored by label."""
    path = Path(path)
    labels = np.asarray(labels)
    synthetic = np.array([o != 'original' for o in origins]) if origins is not None else np.zeros(len(labels), bool)
    fig, ax = plt.subplots(figsize=(7, 6))
    for value in np.unique(labels):
        for marker, mask in (('o', ~synthetic), ('x', synthetic)):
            rows = (labels == value) & mask
            if rows.any():
                kind = 'synthetic' if marker == 'x' else 'original'
                ax.scatter(projection.coordinates[rows, 0], projection.coordinates[rows, 1],
                           s=8, marker=marker, alpha=0.7, label=f'{value} ({kind})')
    ax.set_xlabel(f'PC1 (variance {projection.variances[0]:.3g})')
    ax.set_ylabel(f'PC2 (variance {projection.variances[1]:.3g})')
    ax.legend(loc='best', fontsize='small')
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    logger.info(f"Wrote projection plot to {path}")
    return path
