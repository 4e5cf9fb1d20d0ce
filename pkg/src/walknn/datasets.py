"""Vector dataset ingestion: texmex-style binary files and synthetic mixtures.

fvecs / bvecs / ivecs records are a little-endian signed 32-bit dimension
followed by that many payload elements (float32, uint8, int32 respectively);
every record in a file must share the dimension.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

_KINDS = {"fvecs": (np.float32, 4), "bvecs": (np.uint8, 1), "ivecs": (np.int32, 4)}


class DatasetError(ValueError):
    """Raised on malformed vector files."""


@dataclass
class Dataset:
    """Base and query vectors plus optional precomputed ground truth.

    Ids are 0-based row indices into ``base``.
    """

    name: str
    base: np.ndarray
    queries: np.ndarray
    ground_truth: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return int(self.base.shape[1])


def read_vecs(path: str, kind: str) -> np.ndarray:
    """Parse one .fvecs / .bvecs / .ivecs file into a row-major matrix."""
    if kind not in _KINDS:
        raise ValueError(f"unknown vector file kind {kind!r}")
    dtype, item = _KINDS[kind]
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw:
        return np.empty((0, 0), dtype=dtype)
    if len(raw) < 4:
        raise DatasetError("truncated record: missing dimension prefix")
    dim = int(np.frombuffer(raw[:4], dtype="<i4")[0])
    if dim <= 0:
        raise DatasetError(f"non-positive dimension {dim}")
    record = 4 + dim * item
    if len(raw) % record != 0:
        raise DatasetError("truncated record: file size is not a whole number of records")
    rows = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
    dims = rows[:, :4].copy().view("<i4").reshape(-1)
    if not (dims == dim).all():
        bad = int(dims[dims != dim][0])
        raise DatasetError(f"inconsistent dimension: {bad} != {dim}")
    payload = rows[:, 4:].copy().view(np.dtype(dtype).newbyteorder("<"))
    return np.ascontiguousarray(payload.astype(dtype))


def synthetic_mixture(
    n: int,
    dim: int,
    n_queries: int,
    seed: int = 0,
    n_centers: int = 64,
    spread: float = 0.35,
) -> Dataset:
    """Gaussian-mixture stand-in used when no vector files are on disk."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-1.0, 1.0, size=(n_centers, dim))
    base_pick = rng.integers(n_centers, size=n)
    base = centers[base_pick] + spread * rng.standard_normal((n, dim))
    query_pick = rng.integers(n_centers, size=n_queries)
    queries = centers[query_pick] + spread * rng.standard_normal((n_queries, dim))
    return Dataset(
        name="synthetic",
        base=base.astype(np.float32),
        queries=queries.astype(np.float32),
    )


def load_dataset(
    base_path: Optional[str],
    kind: str,
    subsample: int,
    query_count: int,
    seed: int,
    query_path: Optional[str] = None,
    dim: int = 128,
) -> Dataset:
    """Load a file-backed dataset or fall back to the synthetic mixture.

    Base rows are a seeded subsample.  Queries come from ``query_path`` when
    given, otherwise from held-out rows of the base file, otherwise from
    jittered copies of base rows.
    """
    if base_path is None:
        return synthetic_mixture(subsample, dim, query_count, seed=seed)
    raw = read_vecs(base_path, kind).astype(np.float32)
    if len(raw) < subsample:
        raise DatasetError(f"dataset has {len(raw)} rows, need {subsample}")
    rng = np.random.default_rng(seed)
    picks = rng.permutation(len(raw))
    base = np.ascontiguousarray(raw[np.sort(picks[:subsample])])
    if query_path is not None:
        queries = read_vecs(query_path, kind).astype(np.float32)[:query_count]
    else:
        held_out = picks[subsample : subsample + query_count]
        if len(held_out) == query_count:
            queries = np.ascontiguousarray(raw[held_out])
        else:
            rows = rng.integers(subsample, size=query_count)
            queries = base[rows] + 0.05 * rng.standard_normal((query_count, base.shape[1]))
            queries = queries.astype(np.float32)
    return Dataset(name=os.path.basename(base_path), base=base, queries=queries)
