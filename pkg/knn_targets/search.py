"""
Exact and out-of-core Euclidean nearest-neighbor search.

All results are ordered by (distance, source index) so that ties resolve
to the smaller index and every run is reproducible.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Tuple, Union

import numpy as np

from diffcore.exceptions import ParameterError
from diffcore.random import stream

from .types import CandidateList, Dataset, NeighborTargets, OocConfig

logger = logging.getLogger(__name__)


BLOCK_ENTRIES = 1 << 22
OOC_TAG = 'ooc'
OOC_QUERY_TAG = 'ooc-query'


def _distances(diff: np.ndarray) -> np.ndarray:
    return np.sqrt((diff * diff).sum(axis=-1))


def _map_blocks(fn, starts, workers: int):
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, starts))
    return [fn(start) for start in starts]


def _exact_block(reference, ref_norms, queries, exclude, k):
    """
    Top-k for a block of queries.

    Candidates are preselected with the expansion |q|^2 + |x|^2 - 2 q.x and a
    rounding margin, then re-ranked on directly computed distances.
    """
    q_norms = (queries * queries).sum(axis=1)
    approx = q_norms[:, None] + ref_norms[None, :] - 2.0 * (queries @ reference.T)
    if exclude is not None:
        rows = np.flatnonzero(exclude >= 0)
        approx[rows, exclude[rows]] = np.inf
    kth = np.partition(approx, k - 1, axis=1)[:, k - 1]
    margin = 1e-8 * (q_norms + ref_norms.max()) + 1e-12
    mask = approx <= (kth + margin)[:, None]

    indices = np.empty((len(queries), k), dtype=np.int64)
    distances = np.empty((len(queries), k))
    for row in range(len(queries)):
        candidates = np.flatnonzero(mask[row])
        exact = _distances(reference[candidates] - queries[row])
        order = np.lexsort((candidates, exact))[:k]
        indices[row] = candidates[order]
        distances[row] = exact[order]
    return indices, distances


def batch_query(
    reference: np.ndarray,
    queries: np.ndarray,
    k: int,
    exclude: Optional[np.ndarray] = None,
    workers: int = 1
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact K nearest reference rows for every query row.

    Args:
        reference: N x d matrix searched
        queries: m x d matrix of queries
        k: Neighbors per query
        exclude: Optional reference index per query to leave out (-1 for none)
        workers: Threads sharing the query blocks; results do not depend on it

    Returns:
        Tuple of (indices [m x k], distances [m x k])

    Raises:
        ParameterError: If fewer than k candidates remain
    """
    reference = np.asarray(reference, dtype=np.float64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    n = reference.shape[0]
    available = n - (1 if exclude is not None and np.any(np.asarray(exclude) >= 0) else 0)
    if k < 1:
        raise ParameterError(f"K must be at least 1, got {k}")
    if k > available:
        raise ParameterError(f"{k} neighbors required but only {available} candidates available")
    if exclude is not None:
        exclude = np.asarray(exclude, dtype=np.int64).reshape(-1)

    ref_norms = (reference * reference).sum(axis=1)
    rows_per_block = max(1, BLOCK_ENTRIES // max(n, 1))
    starts = list(range(0, queries.shape[0], rows_per_block))

    def run(start):
        stop = start + rows_per_block
        block_exclude = None if exclude is None else exclude[start:stop]
        return _exact_block(reference, ref_norms, queries[start:stop], block_exclude, k)

    parts = _map_blocks(run, starts, workers)
    if not parts:
        return np.zeros((0, k), dtype=np.int64), np.zeros((0, k))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def query_neighbors(
    reference: Union[Dataset, np.ndarray],
    query: np.ndarray,
    k: int,
    exclude: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """K nearest reference rows to one query vector, optionally leaving out one index."""
    features = reference.features if isinstance(reference, Dataset) else reference
    mask = None if exclude is None else np.array([exclude])
    indices, distances = batch_query(features, np.asarray(query)[None, :], k, exclude=mask)
    return indices[0], distances[0]


def exact_neighbors(train: Dataset, k: int, workers: int = 1) -> NeighborTargets:
    """
    Exact targets: every sample's K nearest other samples over the whole set.

    Raises:
        ParameterError: If N <= K
    """
    if train.size <= k:
        raise ParameterError(f"exact neighbors need more than K={k} samples, got {train.size}")
    indices, distances = batch_query(
        train.features, train.features, k, exclude=np.arange(train.size), workers=workers
    )
    logger.info(f"Exact neighbors prepared for {train.size} samples (K={k}, workers={workers})")
    return NeighborTargets(
        labels=train.labels[indices],
        vectors=train.features[indices],
        distances=distances,
        indices=indices,
    )


def merge_top_k(current: CandidateList, new: CandidateList, k: int) -> CandidateList:
    """
    K best entries of the union of two candidate lists.

    Entries sharing a source index collapse to one; the result is sorted by
    (distance, index).
    """
    indices = np.concatenate([current.indices, new.indices]).astype(np.int64)
    distances = np.concatenate([current.distances, new.distances])
    labels = np.concatenate([current.labels, new.labels]).astype(np.int64)
    vector_parts = [c.vectors for c in (current, new) if len(c) and c.vectors is not None]
    vectors = np.concatenate(vector_parts) if vector_parts else None

    order = np.lexsort((indices, distances))
    _, first = np.unique(indices[order], return_index=True)
    keep = order[np.sort(first)][:k]
    return CandidateList(
        indices=indices[keep],
        distances=distances[keep],
        labels=labels[keep],
        vectors=None if vectors is None or len(vectors) != len(indices) else vectors[keep],
    )


def _redraw_duplicates(row: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    row = row.copy()
    while True:
        _, first = np.unique(row, return_index=True)
        if len(first) == len(row):
            return row
        repeated = np.ones(len(row), dtype=bool)
        repeated[first] = False
        row[repeated] = rng.integers(0, n, size=int(repeated.sum()))


def _draw_rounds(cfg: OocConfig, n: int, tag: str, epoch: int, key: int) -> np.ndarray:
    """
    R x B training indices for one query, distinct within a round.

    Rows may recur across rounds. Duplicates inside round r are redrawn from
    a stream of their own, so the first r rounds do not depend on R.
    """
    rng = stream(cfg.seed, tag, epoch, key)
    if cfg.full_coverage or cfg.batch >= n:
        return np.stack([rng.permutation(n)[:cfg.batch] for _ in range(cfg.rounds)])
    draws = rng.integers(0, n, size=(cfg.rounds, cfg.batch))
    ordered = np.sort(draws, axis=1)
    for r in np.flatnonzero((ordered[:, 1:] == ordered[:, :-1]).any(axis=1)):
        draws[r] = _redraw_duplicates(draws[r], n, stream(cfg.seed, f'{tag}-redraw', epoch, key, int(r)))
    return draws


def ooc_neighbors(train: Dataset, k: int, cfg: OocConfig, index: int, epoch: int = 0) -> CandidateList:
    """
    Approximate neighbors of one training sample from R random batches of B rows.

    The sample itself may be drawn but is never kept as a candidate.

    Raises:
        ParameterError: If B <= K or fewer than K distinct candidates were seen
    """
    cfg.check(k)
    x = train.features[index]
    running = CandidateList(vectors=np.zeros((0, train.dim)))
    for batch in _draw_rounds(cfg, train.size, OOC_TAG, epoch, index):
        batch = batch[batch != index]
        vectors = train.features[batch]
        new = CandidateList(batch, _distances(vectors - x), train.labels[batch], vectors)
        running = merge_top_k(running, new, k)
    if len(running) < k:
        raise ParameterError(f"sample {index}: only {len(running)} distinct candidates seen, {k} required")
    return running


def _merge_rows(best_idx, best_dist, cand_idx, cand_dist, k):
    idx = np.concatenate([best_idx, cand_idx], axis=1)
    dist = np.concatenate([best_dist, cand_dist], axis=1)
    order = np.lexsort((idx, dist), axis=-1)
    idx = np.take_along_axis(idx, order, axis=1)
    dist = np.take_along_axis(dist, order, axis=1)
    # equal source index implies equal distance, so duplicates are adjacent
    duplicate = np.zeros(idx.shape, dtype=bool)
    duplicate[:, 1:] = idx[:, 1:] == idx[:, :-1]
    keep = np.argsort(duplicate, axis=1, kind='stable')[:, :k]
    return np.take_along_axis(idx, keep, axis=1), np.take_along_axis(dist, keep, axis=1)


def ooc_query(
    reference: np.ndarray,
    queries: np.ndarray,
    k: int,
    cfg: OocConfig,
    keys: np.ndarray,
    epoch: int = 0,
    exclude: Optional[np.ndarray] = None,
    tag: str = OOC_TAG,
    workers: int = 1
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Out-of-core search for many queries at once.

    Query j draws its batches from ``stream(seed, tag, epoch, keys[j])``, so the
    result for a query does not depend on block size or worker count.

    Returns:
        Tuple of (indices [m x k], distances [m x k])
    """
    cfg.check(k)
    reference = np.asarray(reference, dtype=np.float64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    keys = np.asarray(keys, dtype=np.int64)
    n, d = reference.shape
    rows_per_block = max(1, BLOCK_ENTRIES // max(min(cfg.batch, n) * d, 1))
    starts = list(range(0, queries.shape[0], rows_per_block))

    def run(start):
        stop = start + rows_per_block
        q = queries[start:stop]
        draws = np.stack([_draw_rounds(cfg, n, tag, epoch, int(key)) for key in keys[start:stop]])
        best_idx = np.full((len(q), k), -1, dtype=np.int64)
        best_dist = np.full((len(q), k), np.inf)
        for r in range(cfg.rounds):
            cand = draws[:, r, :]
            dist = _distances(reference[cand] - q[:, None, :])
            if exclude is not None:
                dist[cand == exclude[start:stop, None]] = np.inf
            best_idx, best_dist = _merge_rows(best_idx, best_dist, cand, dist, k)
        return best_idx, best_dist

    parts = _map_blocks(run, starts, workers)
    if not parts:
        return np.zeros((0, k), dtype=np.int64), np.zeros((0, k))
    indices = np.concatenate([p[0] for p in parts])
    distances = np.concatenate([p[1] for p in parts])
    short = np.flatnonzero(np.isinf(distances).any(axis=1))
    if short.size:
        raise ParameterError(
            f"query {int(keys[short[0]])}: fewer than {k} distinct candidates seen in {cfg.rounds} rounds of {cfg.batch}"
        )
    return indices, distances


def ooc_neighbors_all(
    train: Dataset,
    k: int,
    cfg: OocConfig,
    epoch: int = 0,
    rows: Optional[np.ndarray] = None,
    workers: int = 1
) -> NeighborTargets:
    """Out-of-core targets for ``rows`` (all samples by default), self excluded."""
    rows = np.arange(train.size) if rows is None else np.asarray(rows, dtype=np.int64)
    indices, distances = ooc_query(
        train.features, train.features[rows], k, cfg,
        keys=rows, epoch=epoch, exclude=rows, workers=workers,
    )
    logger.info(
        f"Out-of-core neighbors prepared for {len(rows)} samples "
        f"(K={k}, B={cfg.batch}, R={cfg.rounds}, epoch={epoch})"
    )
    return NeighborTargets(
        labels=train.labels[indices],
        vectors=train.features[indices],
        distances=distances,
        indices=indices,
    )


def recall_at_k(approx, exact) -> float:
    """Mean fraction of each sample's exact neighbors recovered by the approximation."""
    approx = approx.indices if isinstance(approx, NeighborTargets) else np.asarray(approx)
    exact = exact.indices if isinstance(exact, NeighborTargets) else np.asarray(exact)
    if approx is None or exact is None or approx.shape != exact.shape:
        raise ParameterError("recall needs two index matrices of the same shape")
    if approx.size == 0:
        return 0.0
    hits = (approx[:, :, None] == exact[:, None, :]).any(axis=2).sum(axis=1)
    return float(hits.mean() / exact.shape[1])
