"""Fixed-schema feature vectors for candidate pairs.

Per representation (four TF-IDF levels, four URL-level embeddings, one title
embedding): cosine / euclidean / manhattan distances plus the bidirectional
KNN ranks. Plus seven time features from hourly/weekly activity profiles and
co-activity bucket overlaps. All features are finite by construction: cosine
against a zero vector is defined as 0 and KL divergences are computed on
pseudocount-smoothed profiles.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .events import UserLog
from .knn import NeighborList
from .pairs import CandidatePair
from .tfidf import SparseVector, to_csr

SPARSE_REPS = ("tfidf_h0", "tfidf_h1", "tfidf_h2", "tfidf_h3")
DENSE_REPS = ("emb_h0", "emb_h1", "emb_h2", "emb_h3", "emb_title")
PAIR_METRICS = ("cosine", "euclidean", "manhattan", "rank_ab", "rank_ba")
TIME_FEATURE_NAMES = (
    "time.hourly_l1",
    "time.weekly_l1",
    "time.hourly_symkl",
    "time.weekly_symkl",
    "time.overlap_5m",
    "time.overlap_10m",
    "time.overlap_60m",
)
OVERLAP_WIDTHS = (300, 600, 3600)  # seconds; feature names say 5m/10m/60m

# Pseudocount added to every profile bin before normalizing for the KL
# features. Keeps the divergence finite on disjoint profiles while matching
# the plain normalized-counts divergence to ~1e-4.
KL_EPSILON = 1e-4


class SchemaMismatchError(ValueError):
    """Feature values or matrix do not conform to the expected schema."""


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


def default_schema(
    sparse_reps: Sequence[str] = SPARSE_REPS, dense_reps: Sequence[str] = DENSE_REPS
) -> FeatureSchema:
    names = [
        f"{rep}.{metric}" for rep in (*sparse_reps, *dense_reps) for metric in PAIR_METRICS
    ]
    names.extend(TIME_FEATURE_NAMES)
    return FeatureSchema(tuple(names))


# ---------------------------------------------------------------------------
# distances

def _dense_distances(u: np.ndarray, v: np.ndarray) -> tuple[float, float, float]:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    cos = float(u @ v / (nu * nv)) if nu > 0 and nv > 0 else 0.0
    diff = u - v
    return cos, float(np.linalg.norm(diff)), float(np.abs(diff).sum())


def _sparse_distances(u: SparseVector, v: SparseVector) -> tuple[float, float, float]:
    du = dict(zip(u.indices.tolist(), u.weights.tolist()))
    dv = dict(zip(v.indices.tolist(), v.weights.tolist()))
    dot = sum(w * dv[i] for i, w in du.items() if i in dv)
    nu = float(np.linalg.norm(u.weights))
    nv = float(np.linalg.norm(v.weights))
    cos = dot / (nu * nv) if nu > 0 and nv > 0 else 0.0
    keys = set(du) | set(dv)
    diffs = np.array([du.get(i, 0.0) - dv.get(i, 0.0) for i in keys])
    return float(cos), float(np.linalg.norm(diffs)), float(np.abs(diffs).sum())


def distance_features(
    pair: CandidatePair,
    representations: Mapping[str, Mapping[str, SparseVector] | Mapping[str, np.ndarray]],
) -> dict[str, float]:
    """cosine / euclidean / manhattan for each named representation."""
    out: dict[str, float] = {}
    for rep, vectors in representations.items():
        u, v = vectors[pair.a], vectors[pair.b]
        if isinstance(u, SparseVector):
            cos, euc, man = _sparse_distances(u, v)
        else:
            cos, euc, man = _dense_distances(np.asarray(u, float), np.asarray(v, float))
        out[f"{rep}.cosine"] = cos
        out[f"{rep}.euclidean"] = euc
        out[f"{rep}.manhattan"] = man
    return out


# ---------------------------------------------------------------------------
# neighbor ranks

def rank_features(
    pair: CandidatePair,
    neighbor_maps: Mapping[str, Mapping[str, NeighborList]],
    k: int,
) -> dict[str, float]:
    """1-based rank of each endpoint in the other's neighbor list, k+1 if absent."""
    out: dict[str, float] = {}
    for rep, nmap in neighbor_maps.items():
        out[f"{rep}.rank_ab"] = float(_rank_of(nmap.get(pair.a), pair.b, k))
        out[f"{rep}.rank_ba"] = float(_rank_of(nmap.get(pair.b), pair.a, k))
    return out


def _rank_of(nlist: NeighborList | None, target: str, k: int) -> int:
    if nlist is not None:
        for position, (user, _) in enumerate(nlist.neighbors[:k], start=1):
            if user == target:
                return position
    return k + 1


# ---------------------------------------------------------------------------
# time profiles

@dataclass
class TimeProfile:
    """Hourly (24) and weekly (7, Monday=0) event counts, hours in UTC."""

    hourly: np.ndarray
    weekly: np.ndarray


def time_profile(log: UserLog) -> TimeProfile:
    hourly = np.zeros(24, dtype=np.int64)
    weekly = np.zeros(7, dtype=np.int64)
    for e in log.events:
        hourly[(e.timestamp // 3600) % 24] += 1
        weekly[(e.timestamp // 86400 + 3) % 7] += 1  # epoch day 0 = Thursday = weekday 3
    return TimeProfile(hourly, weekly)


def _smoothed(counts: np.ndarray, eps: float) -> np.ndarray:
    smoothed = counts.astype(np.float64) + eps
    return smoothed / smoothed.sum()


def symmetric_kl(
    counts_a: np.ndarray, counts_b: np.ndarray, eps: float = KL_EPSILON
) -> float:
    """KL(p||q) + KL(q||p) in nats over pseudocount-smoothed normalized counts."""
    p = _smoothed(np.asarray(counts_a), eps)
    q = _smoothed(np.asarray(counts_b), eps)
    return float(np.sum(p * np.log(p / q)) + np.sum(q * np.log(q / p)))


def activity_buckets(log: UserLog, width: int) -> set[int]:
    return {e.timestamp // width for e in log.events}


def time_features(
    pair: CandidatePair,
    profiles: Mapping[str, TimeProfile],
    logs: Mapping[str, UserLog],
    eps: float = KL_EPSILON,
) -> dict[str, float]:
    pa, pb = profiles[pair.a], profiles[pair.b]
    out = {
        "time.hourly_l1": float(np.abs(pa.hourly - pb.hourly).sum()),
        "time.weekly_l1": float(np.abs(pa.weekly - pb.weekly).sum()),
        "time.hourly_symkl": symmetric_kl(pa.hourly, pb.hourly, eps),
        "time.weekly_symkl": symmetric_kl(pa.weekly, pb.weekly, eps),
    }
    for name, width in zip(("time.overlap_5m", "time.overlap_10m", "time.overlap_60m"), OVERLAP_WIDTHS):
        buckets_a = activity_buckets(logs[pair.a], width)
        buckets_b = activity_buckets(logs[pair.b], width)
        out[name] = float(len(buckets_a & buckets_b))
    return out


# ---------------------------------------------------------------------------
# assembly

def assemble_feature_vector(
    pair: CandidatePair, schema: FeatureSchema, parts: Mapping[str, float]
) -> np.ndarray:
    missing = [n for n in schema.names if n not in parts]
    if missing:
        raise SchemaMismatchError(f"pair {pair}: missing features {missing[:5]}")
    extra = set(parts) - set(schema.names)
    if extra:
        raise SchemaMismatchError(f"pair {pair}: unknown features {sorted(extra)[:5]}")
    values = np.array([parts[n] for n in schema.names], dtype=np.float64)
    if not np.all(np.isfinite(values)):
        bad = [schema.names[i] for i in np.flatnonzero(~np.isfinite(values))]
        raise SchemaMismatchError(f"pair {pair}: non-finite features {bad[:5]}")
    return values


class FeatureContext:
    """Batch feature computation for one user population.

    Holds every representation's vectors, the population's neighbor maps, and
    per-user time profiles/bucket sets; `matrix(pairs)` produces the
    schema-ordered feature matrix and is the feature source used for lazy
    cross-pair voting during inference.
    """

    def __init__(
        self,
        schema: FeatureSchema,
        sparse_vectors: Mapping[str, Mapping[str, SparseVector]],
        sparse_dims: Mapping[str, int],
        dense_vectors: Mapping[str, Mapping[str, np.ndarray]],
        neighbor_maps: Mapping[str, Mapping[str, NeighborList]],
        k: int,
        logs: Mapping[str, UserLog],
        kl_eps: float = KL_EPSILON,
    ):
        self.schema = schema
        self.k = k
        self.kl_eps = kl_eps
        self._users = sorted(logs)
        self._user_pos = {u: i for i, u in enumerate(self._users)}
        self._sparse = {
            rep: to_csr(vecs, self._users, sparse_dims[rep]).astype(np.float64)
            for rep, vecs in sparse_vectors.items()
        }
        self._sparse_sq_norms = {
            rep: np.asarray(mat.multiply(mat).sum(axis=1)).ravel()
            for rep, mat in self._sparse.items()
        }
        self._dense = {
            rep: np.stack([np.asarray(vecs[u], dtype=np.float64) for u in self._users])
            for rep, vecs in dense_vectors.items()
        }
        self._rank_tables = {
            rep: {
                q: {u: r for r, (u, _) in enumerate(nlist.neighbors[:k], start=1)}
                for q, nlist in nmap.items()
            }
            for rep, nmap in neighbor_maps.items()
        }
        profiles = {u: time_profile(logs[u]) for u in self._users}
        self._hourly = np.stack([profiles[u].hourly for u in self._users]).astype(np.float64)
        self._weekly = np.stack([profiles[u].weekly for u in self._users]).astype(np.float64)
        self._buckets = {
            width: {u: activity_buckets(logs[u], width) for u in self._users}
            for width in OVERLAP_WIDTHS
        }

    def _pair_indices(self, pairs: Sequence[CandidatePair]) -> tuple[np.ndarray, np.ndarray]:
        ai = np.array([self._user_pos[p.a] for p in pairs], dtype=np.int64)
        bi = np.array([self._user_pos[p.b] for p in pairs], dtype=np.int64)
        return ai, bi

    @staticmethod
    def _dense_block(mat: np.ndarray, ai: np.ndarray, bi: np.ndarray) -> np.ndarray:
        a, b = mat[ai], mat[bi]
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        denom = na * nb
        cos = np.divide((a * b).sum(axis=1), denom, out=np.zeros(len(ai)), where=denom > 0)
        diff = a - b
        euc = np.linalg.norm(diff, axis=1)
        man = np.abs(diff).sum(axis=1)
        return np.column_stack([cos, euc, man])

    def _sparse_block(self, rep: str, ai: np.ndarray, bi: np.ndarray) -> np.ndarray:
        mat = self._sparse[rep]
        a = mat[ai]
        b = mat[bi]
        dot = np.asarray(a.multiply(b).sum(axis=1)).ravel()
        sq = self._sparse_sq_norms[rep]
        na = np.sqrt(sq[ai])
        nb = np.sqrt(sq[bi])
        denom = na * nb
        cos = np.divide(dot, denom, out=np.zeros(len(ai)), where=denom > 0)
        diff = (a - b).tocsr()
        euc = np.sqrt(np.asarray(diff.multiply(diff).sum(axis=1)).ravel())
        man = np.asarray(np.abs(diff).sum(axis=1)).ravel()
        return np.column_stack([cos, euc, man])

    def _rank_block(self, rep: str, pairs: Sequence[CandidatePair]) -> np.ndarray:
        table = self._rank_tables[rep]
        sentinel = self.k + 1
        ab = [table.get(p.a, {}).get(p.b, sentinel) for p in pairs]
        ba = [table.get(p.b, {}).get(p.a, sentinel) for p in pairs]
        return np.column_stack([np.array(ab, float), np.array(ba, float)])

    def matrix(self, pairs: Sequence[CandidatePair]) -> np.ndarray:
        """Schema-ordered feature matrix, one row per pair."""
        if not pairs:
            return np.zeros((0, len(self.schema)))
        ai, bi = self._pair_indices(pairs)
        reps: list[str] = []
        for name in self.schema.names:
            rep = name.rsplit(".", 1)[0]
            if rep != "time" and rep not in reps:
                reps.append(rep)
        blocks = []
        for rep in reps:
            if rep in self._sparse:
                dist = self._sparse_block(rep, ai, bi)
            elif rep in self._dense:
                dist = self._dense_block(self._dense[rep], ai, bi)
            else:
                raise SchemaMismatchError(f"schema names representation {rep!r} with no vectors")
            blocks.append(np.column_stack([dist, self._rank_block(rep, pairs)]))
        ha, hb = self._hourly[ai] + self.kl_eps, self._hourly[bi] + self.kl_eps
        wa, wb = self._weekly[ai] + self.kl_eps, self._weekly[bi] + self.kl_eps
        pa, pb = ha / ha.sum(1, keepdims=True), hb / hb.sum(1, keepdims=True)
        qa, qb = wa / wa.sum(1, keepdims=True), wb / wb.sum(1, keepdims=True)
        hourly_l1 = np.abs(self._hourly[ai] - self._hourly[bi]).sum(axis=1)
        weekly_l1 = np.abs(self._weekly[ai] - self._weekly[bi]).sum(axis=1)
        hourly_kl = (pa * np.log(pa / pb)).sum(1) + (pb * np.log(pb / pa)).sum(1)
        weekly_kl = (qa * np.log(qa / qb)).sum(1) + (qb * np.log(qb / qa)).sum(1)
        overlaps = []
        for width in OVERLAP_WIDTHS:
            table = self._buckets[width]
            overlaps.append(
                np.array([len(table[p.a] & table[p.b]) for p in pairs], dtype=np.float64)
            )
        blocks.append(
            np.column_stack([hourly_l1, weekly_l1, hourly_kl, weekly_kl, *overlaps])
        )
        out = np.column_stack(blocks)
        if out.shape[1] != len(self.schema):
            raise SchemaMismatchError(
                f"assembled {out.shape[1]} features, schema expects {len(self.schema)}"
            )
        if not np.all(np.isfinite(out)):
            raise SchemaMismatchError("non-finite feature values")
        return out

    def vector(self, pair: CandidatePair) -> np.ndarray:
        return self.matrix([pair])[0]


def write_feature_matrix(
    path: str | Path,
    schema: FeatureSchema,
    pairs: Sequence[CandidatePair],
    matrix: np.ndarray,
) -> None:
    """Header of schema names, then one `a,b,v1,...,vN` row per pair (decimal text)."""
    if matrix.shape != (len(pairs), len(schema)):
        raise SchemaMismatchError(
            f"matrix shape {matrix.shape} does not match {len(pairs)} pairs x {len(schema)} features"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("a,b," + ",".join(schema.names) + "\n")
        for pair, row in zip(pairs, matrix):
            fh.write(f"{pair.a},{pair.b}," + ",".join(repr(v) for v in row.tolist()) + "\n")


def read_feature_matrix(
    path: str | Path,
) -> tuple[FeatureSchema, list[CandidatePair], np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[:2] != ["a", "b"]:
            raise SchemaMismatchError(f"{path}: malformed feature matrix header")
        schema = FeatureSchema(tuple(header[2:]))
        pairs: list[CandidatePair] = []
        rows: list[np.ndarray] = []
        for lineno, raw in enumerate(fh, 2):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2 + len(schema):
                raise SchemaMismatchError(f"{path}:{lineno}: wrong field count")
            pairs.append(CandidatePair(parts[0], parts[1]))
            rows.append(np.array([float(v) for v in parts[2:]], dtype=np.float64))
    matrix = np.stack(rows) if rows else np.zeros((0, len(schema)))
    return schema, pairs, matrix
