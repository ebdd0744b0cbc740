"""Pruned vocabularies and per-user TF-IDF sparse vectors.

Weight of token ``t`` in user ``u``'s document is ``tf(u,t) * ln(N / df(t))``
with raw term counts and no smoothing; tokens occurring in every document get
weight zero and are not stored. Vectors are L2-normalized lazily inside cosine
computations, never at rest.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .artifacts import read_artifact, write_artifact


@dataclass(frozen=True)
class VocabEntry:
    index: int
    doc_freq: int
    corpus_count: int


@dataclass
class Vocabulary:
    entries: dict[str, VocabEntry]
    n_docs: int
    min_count: int

    def __len__(self) -> int:
        return len(self.entries)

    def tokens_by_index(self) -> list[str]:
        out = [""] * len(self.entries)
        for tok, e in self.entries.items():
            out[e.index] = tok
        return out


@dataclass
class SparseVector:
    """Strictly increasing indices with positive weights; zero weights are never stored."""

    indices: np.ndarray  # int32
    weights: np.ndarray  # float64

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])


EMPTY_SPARSE = SparseVector(np.zeros(0, dtype=np.int32), np.zeros(0, dtype=np.float64))


def build_vocabulary(docs: Mapping[str, Sequence[str]], min_count: int = 5) -> Vocabulary:
    """Count tokens over all documents and keep those seen at least ``min_count`` times.

    ``doc_freq`` counts distinct users whose document contains the token.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    corpus_counts: Counter[str] = Counter()
    doc_freqs: Counter[str] = Counter()
    for tokens in docs.values():
        corpus_counts.update(tokens)
        doc_freqs.update(set(tokens))
    retained = sorted(t for t, c in corpus_counts.items() if c >= min_count)
    if not retained:
        raise ValueError(
            f"degenerate corpus: no token reaches min_count={min_count} "
            f"({len(corpus_counts)} distinct tokens seen)"
        )
    entries = {
        tok: VocabEntry(i, doc_freqs[tok], corpus_counts[tok]) for i, tok in enumerate(retained)
    }
    return Vocabulary(entries, n_docs=len(docs), min_count=min_count)


def tfidf_vectors(
    docs: Mapping[str, Sequence[str]], vocab: Vocabulary
) -> dict[str, SparseVector]:
    n = vocab.n_docs
    vectors: dict[str, SparseVector] = {}
    for user, tokens in docs.items():
        weights: dict[int, float] = {}
        for tok, tf in Counter(tokens).items():
            entry = vocab.entries.get(tok)
            if entry is None or entry.doc_freq >= n:
                continue  # pruned, or idf = ln(1) = 0
            weights[entry.index] = tf * math.log(n / entry.doc_freq)
        if weights:
            idx = np.array(sorted(weights), dtype=np.int32)
            val = np.array([weights[i] for i in idx], dtype=np.float64)
            vectors[user] = SparseVector(idx, val)
        else:
            vectors[user] = EMPTY_SPARSE
    return vectors


def to_csr(
    vectors: Mapping[str, SparseVector], users: Sequence[str], dim: int
) -> sp.csr_matrix:
    """Stack per-user sparse vectors into a CSR matrix with one row per user."""
    indptr = np.zeros(len(users) + 1, dtype=np.int64)
    for i, u in enumerate(users):
        indptr[i + 1] = indptr[i] + vectors[u].nnz
    indices = np.concatenate([vectors[u].indices for u in users]) if users else np.zeros(0, np.int32)
    data = np.concatenate([vectors[u].weights for u in users]) if users else np.zeros(0, np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=(len(users), dim))


def save_tfidf_levels(
    path: str | Path, levels: Mapping[int, tuple[Vocabulary, Mapping[str, SparseVector]]]
) -> None:
    """Persist {hierarchy level: (vocabulary, user vectors)} as one artifact file."""
    meta: dict = {"levels": sorted(levels)}
    arrays: dict[str, np.ndarray] = {}
    for h, (vocab, vectors) in levels.items():
        users = sorted(vectors)
        tokens = vocab.tokens_by_index()
        meta[f"h{h}.tokens"] = tokens
        meta[f"h{h}.users"] = users
        meta[f"h{h}.n_docs"] = vocab.n_docs
        meta[f"h{h}.min_count"] = vocab.min_count
        arrays[f"h{h}.doc_freq"] = np.array(
            [vocab.entries[t].doc_freq for t in tokens], dtype=np.int64
        )
        arrays[f"h{h}.corpus_count"] = np.array(
            [vocab.entries[t].corpus_count for t in tokens], dtype=np.int64
        )
        indptr = np.zeros(len(users) + 1, dtype=np.int64)
        for i, u in enumerate(users):
            indptr[i + 1] = indptr[i] + vectors[u].nnz
        arrays[f"h{h}.indptr"] = indptr
        arrays[f"h{h}.indices"] = (
            np.concatenate([vectors[u].indices for u in users])
            if users
            else np.zeros(0, np.int32)
        )
        arrays[f"h{h}.data"] = (
            np.concatenate([vectors[u].weights for u in users])
            if users
            else np.zeros(0, np.float64)
        )
    write_artifact(path, "tfidf", meta, arrays)


def load_tfidf_levels(
    path: str | Path,
) -> dict[int, tuple[Vocabulary, dict[str, SparseVector]]]:
    _, meta, arrays = read_artifact(path, expected_kind="tfidf")
    out: dict[int, tuple[Vocabulary, dict[str, SparseVector]]] = {}
    for h in meta["levels"]:
        tokens = meta[f"h{h}.tokens"]
        users = meta[f"h{h}.users"]
        doc_freq = arrays[f"h{h}.doc_freq"]
        corpus_count = arrays[f"h{h}.corpus_count"]
        entries = {
            tok: VocabEntry(i, int(doc_freq[i]), int(corpus_count[i]))
            for i, tok in enumerate(tokens)
        }
        vocab = Vocabulary(entries, n_docs=meta[f"h{h}.n_docs"], min_count=meta[f"h{h}.min_count"])
        indptr = arrays[f"h{h}.indptr"]
        indices = arrays[f"h{h}.indices"]
        data = arrays[f"h{h}.data"]
        vectors = {
            u: SparseVector(
                indices[indptr[i] : indptr[i + 1]].copy(),
                data[indptr[i] : indptr[i + 1]].copy(),
            )
            for i, u in enumerate(users)
        }
        out[h] = (vocab, vectors)
    return out
