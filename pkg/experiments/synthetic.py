"""
Synthetic two-class Gaussian datasets for smoke runs and acceptance checks.
"""
import numpy as np

from diffcore.exceptions import ParameterError
from diffcore.random import stream
from knn_targets.types import Dataset


def two_gaussians(n: int, d: int, ratio: float = 1.0, separation: float = 3.0, seed: int = 0,
                  split: int = 0) -> Dataset:
    """
    Two isotropic unit-variance Gaussians whose means are ``separation`` apart.

    Class 0 is the majority with ``ratio`` times as many samples as class 1
    (ratio 10 gives a 10:1 imbalance). Rows are shuffled.

    Args:
        n: Total number of samples
        d: Feature dimension
        ratio: Majority-to-minority size ratio (>= 1)
        separation: Euclidean distance between the class means
        seed: Run seed
        split: Independent draw under the same seed (0 train, 1 test)

    Raises:
        ParameterError: If either class would be empty
    """
    if ratio < 1.0:
        raise ParameterError(f"class ratio must be at least 1, got {ratio}")
    minority = int(round(n / (ratio + 1.0)))
    majority = n - minority
    if minority < 1 or majority < 1 or d < 1:
        raise ParameterError(f"cannot build two non-empty classes from n={n}, d={d}, ratio={ratio}")

    rng = stream(seed, 'synthetic', split)
    offset = np.full(d, separation / np.sqrt(d))
    features = np.concatenate([
        rng.normal(size=(majority, d)),
        rng.normal(size=(minority, d)) + offset,
    ])
    labels = np.concatenate([np.zeros(majority, dtype=np.int64), np.ones(minority, dtype=np.int64)])
    order = rng.permutation(n)
    return Dataset(features[order], labels[order], 2)
