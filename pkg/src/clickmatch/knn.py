"""Candidate pair generation: exact k-nearest-neighbor lists by cosine
similarity, their union across representations, and recall measurement.

Neighbors are ranked by descending similarity with ties broken toward the
smaller user id; a zero vector has cosine 0 against everything. Search is
exact brute force, which is affordable at desk scale (an approximate index is
a documented extension point, not implemented).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Mapping, Sequence

import numpy as np

from .artifacts import read_artifact, write_artifact
from .embedding import EmbeddingModel
from .pairs import CandidatePair, make_pair
from .tfidf import SparseVector, to_csr

DEFAULT_K = 18


@dataclass
class NeighborList:
    query: str
    neighbors: list[tuple[str, float]]  # (user_id, similarity), descending similarity


def _normalize_rows_dense(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0  # zero rows stay zero => cosine 0 by definition
    return mat / norms


def _topk_lists(
    users: Sequence[str], sims: np.ndarray, query_rows: Sequence[int], k: int
) -> dict[str, NeighborList]:
    """Extract per-query top-k from a (queries x corpus) similarity matrix.

    ``users`` must be sorted ascending so that a stable sort on descending
    similarity realizes the tie rule (smaller user id first).
    """
    out: dict[str, NeighborList] = {}
    for qi, row_idx in enumerate(query_rows):
        row = sims[qi]
        order = np.argsort(-row, kind="stable")
        neighbors: list[tuple[str, float]] = []
        for j in order:
            if j == row_idx:
                continue
            neighbors.append((users[j], float(row[j])))
            if len(neighbors) == k:
                break
        out[users[row_idx]] = NeighborList(users[row_idx], neighbors)
    return out


def knn_sparse(
    vectors: Mapping[str, SparseVector],
    queries: Sequence[str] | None = None,
    k: int = DEFAULT_K,
    dim: int | None = None,
) -> dict[str, NeighborList]:
    """Exact top-k cosine neighbors among the users of a sparse representation."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    users = sorted(vectors)
    if dim is None:
        dim = 1 + max((int(v.indices[-1]) for v in vectors.values() if v.nnz), default=0)
    mat = to_csr(vectors, users, dim).astype(np.float64)
    norms = np.sqrt(np.asarray(mat.multiply(mat).sum(axis=1)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    mat = mat.multiply(inv[:, None]).tocsr()
    pos = {u: i for i, u in enumerate(users)}
    query_rows = [pos[q] for q in (queries if queries is not None else users)]
    sims = np.asarray((mat[query_rows] @ mat.T).todense())
    return _topk_lists(users, sims, query_rows, k)


def knn_dense(
    model: EmbeddingModel | Mapping[str, np.ndarray],
    queries: Sequence[str] | None = None,
    k: int = DEFAULT_K,
) -> dict[str, NeighborList]:
    """Exact top-k cosine neighbors among the users of a dense representation."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    vectors = model.user_vectors if isinstance(model, EmbeddingModel) else model
    users = sorted(vectors)
    mat = _normalize_rows_dense(np.stack([np.asarray(vectors[u], dtype=np.float64) for u in users]))
    pos = {u: i for i, u in enumerate(users)}
    query_rows = [pos[q] for q in (queries if queries is not None else users)]
    sims = mat[query_rows] @ mat.T
    return _topk_lists(users, sims, query_rows, k)


def union_candidates(
    neighbor_maps: Sequence[Mapping[str, NeighborList]], k: int = DEFAULT_K
) -> set[CandidatePair]:
    """Canonical pairs {a,b} where b is among a's first k neighbors in any map."""
    if neighbor_maps:
        populations = {frozenset(m) for m in neighbor_maps}
        if len(populations) > 1:
            raise ValueError("neighbor maps cover different user populations")
    pairs: set[CandidatePair] = set()
    for nmap in neighbor_maps:
        for query, nlist in nmap.items():
            for neighbor, _ in nlist.neighbors[:k]:
                pairs.add(make_pair(query, neighbor))
    return pairs


def recall_at_k(
    neighbor_maps: Sequence[Mapping[str, NeighborList]],
    ks: Sequence[int],
    truth: Collection[CandidatePair],
) -> list[tuple[int, float]]:
    """Fraction of truth pairs covered by the candidate union at each k.

    Neighbor maps must have been computed at (at least) max(ks); evaluating a
    smaller k truncates each list, which equals recomputing at that k.
    """
    if not truth:
        raise ValueError("empty truth set")
    truth_set = set(truth)
    out = []
    for k in ks:
        covered = union_candidates(neighbor_maps, k) & truth_set
        out.append((k, len(covered) / len(truth_set)))
    return out


def write_recall_report(path: str | Path, points: Sequence[tuple[int, float]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, rec in points:
            fh.write(f"{k}\t{rec!r}\n")


def save_neighbor_maps(
    path: str | Path, maps: Mapping[str, Mapping[str, NeighborList]], k: int
) -> None:
    """Persist neighbor maps keyed by '<representation>/<partition>'."""
    meta: dict = {"keys": sorted(maps), "k": k}
    arrays: dict[str, np.ndarray] = {}
    for key in sorted(maps):
        nmap = maps[key]
        queries = sorted(nmap)
        id_table = sorted({u for q in queries for u, _ in nmap[q].neighbors} | set(queries))
        idx = {u: i for i, u in enumerate(id_table)}
        meta[f"{key}.queries"] = queries
        meta[f"{key}.ids"] = id_table
        counts = np.array([len(nmap[q].neighbors) for q in queries], dtype=np.int64)
        arrays[f"{key}.counts"] = counts
        arrays[f"{key}.neighbors"] = np.array(
            [idx[u] for q in queries for u, _ in nmap[q].neighbors], dtype=np.int64
        )
        arrays[f"{key}.sims"] = np.array(
            [s for q in queries for _, s in nmap[q].neighbors], dtype=np.float64
        )
    write_artifact(path, "neighbors", meta, arrays)


def load_neighbor_maps(path: str | Path) -> tuple[dict[str, dict[str, NeighborList]], int]:
    _, meta, arrays = read_artifact(path, expected_kind="neighbors")
    out: dict[str, dict[str, NeighborList]] = {}
    for key in meta["keys"]:
        queries = meta[f"{key}.queries"]
        ids = meta[f"{key}.ids"]
        counts = arrays[f"{key}.counts"]
        flat_ids = arrays[f"{key}.neighbors"]
        sims = arrays[f"{key}.sims"]
        nmap: dict[str, NeighborList] = {}
        start = 0
        for qi, q in enumerate(queries):
            stop = start + int(counts[qi])
            nmap[q] = NeighborList(
                q, [(ids[int(i)], float(s)) for i, s in zip(flat_ids[start:stop], sims[start:stop])]
            )
            start = stop
        out[key] = nmap
    return out, int(meta["k"])
