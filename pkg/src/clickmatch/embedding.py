"""Hierarchy-aware document-embedding ensemble.

One distributed-bag-of-words paragraph-vector model per URL hierarchy level
(h0..h3) plus a word-level model over title tokens. Each document (user) vector
is trained with negative sampling to score its own tokens above noise tokens
drawn from the unigram distribution raised to 3/4. Training is single-worker
and bit-reproducible for a fixed seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .artifacts import read_artifact, write_artifact
from .events import UserLog, build_title_documents, build_user_documents
from .tfidf import build_vocabulary

LEVEL_TAGS = ("h0", "h1", "h2", "h3", "title")
NOISE_POWER = 0.75


@dataclass(frozen=True)
class EmbedConfig:
    dim: int = 32
    window: int = 5  # carried for model bookkeeping; the bag-of-words objective has no context window
    epochs: int = 20
    negative_samples: int = 5
    initial_lr: float = 0.025
    final_lr: float = 0.0005
    min_count: int = 5
    seed: int = 1

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.negative_samples < 1:
            raise ValueError(f"negative_samples must be >= 1, got {self.negative_samples}")
        if not (self.initial_lr >= self.final_lr > 0):
            raise ValueError(
                f"need initial_lr >= final_lr > 0, got {self.initial_lr}, {self.final_lr}"
            )
        if self.min_count < 1:
            raise ValueError(f"min_count must be >= 1, got {self.min_count}")


@dataclass
class EmbeddingModel:
    config: EmbedConfig
    level_tag: str
    users: list[str]
    matrix: np.ndarray  # (n_users, dim) float32
    tokens: list[str]
    token_matrix: np.ndarray  # (n_tokens, dim) float32
    epoch_losses: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def user_vectors(self) -> dict[str, np.ndarray]:
        return {u: self.matrix[i] for i, u in enumerate(self.users)}

    @property
    def token_vectors(self) -> dict[str, np.ndarray]:
        return {t: self.token_matrix[i] for i, t in enumerate(self.tokens)}

    def vector(self, user: str) -> np.ndarray:
        return self.matrix[self.users.index(user)]


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


@njit(cache=True)
def _train_dbow(doc_vecs, tok_vecs, tokens, offsets, noise_cum, epochs, negative, lr0, lr1, rng_state):
    """Online SGD over (document, token) positions; returns per-epoch mean loss.

    Updates follow the standard negative-sampling step: for the true token and
    each noise token, g = (label - sigmoid(doc . tok)) * lr is applied to both
    sides, the document accumulating its correction after all samples of the
    position (gradients taken at the pre-update vectors).
    """
    n_docs = offsets.shape[0] - 1
    dim = doc_vecs.shape[1]
    n_tok = tok_vecs.shape[0]
    total = noise_cum[n_tok - 1]
    losses = np.zeros(epochs)
    work = np.empty(dim, dtype=np.float32)
    state = np.uint64(rng_state)
    mask = np.uint64(0xFFFFFFFFFFFFFFFF)
    inv64 = 1.0 / 18446744073709551616.0
    for epoch in range(epochs):
        if epochs > 1:
            alpha = lr0 + (lr1 - lr0) * (epoch / (epochs - 1))
        else:
            alpha = lr0
        loss_sum = 0.0
        n_positions = 0
        for d in range(n_docs):
            dv = doc_vecs[d]
            for p in range(offsets[d], offsets[d + 1]):
                target = tokens[p]
                for j in range(dim):
                    work[j] = 0.0
                for s in range(negative + 1):
                    if s == 0:
                        w = target
                        label = 1.0
                    else:
                        w = target
                        while w == target and n_tok > 1:
                            state = (state ^ (state << np.uint64(13))) & mask
                            state = state ^ (state >> np.uint64(7))
                            state = (state ^ (state << np.uint64(17))) & mask
                            r = np.float64(state) * inv64 * total
                            w = np.searchsorted(noise_cum, r, side="right")
                            if w >= n_tok:
                                w = n_tok - 1
                        if w == target:
                            continue  # single-token vocabulary: no usable noise token
                        label = 0.0
                    tv = tok_vecs[w]
                    score = 0.0
                    for j in range(dim):
                        score += dv[j] * tv[j]
                    pred = 1.0 / (1.0 + np.exp(-score))
                    if label > 0.5:
                        loss_sum -= np.log(max(pred, 1e-12))
                    else:
                        loss_sum -= np.log(max(1.0 - pred, 1e-12))
                    g = np.float32((label - pred) * alpha)
                    for j in range(dim):
                        work[j] += g * tv[j]
                    for j in range(dim):
                        tv[j] += g * dv[j]
                for j in range(dim):
                    dv[j] += work[j]
                n_positions += 1
        losses[epoch] = loss_sum / max(n_positions, 1)
    return losses


def train_doc_embeddings(
    docs: Mapping[str, Sequence[str]], cfg: EmbedConfig, level_tag: str = "h0"
) -> EmbeddingModel:
    """Train one PV-DBOW model over the given user documents.

    Tokens seen fewer than ``cfg.min_count`` times are pruned before training
    and never receive token vectors. Users whose documents are empty after
    pruning keep all-zero vectors. Raises if no token survives pruning.
    """
    if not docs:
        raise ValueError("empty corpus: no documents to train on")
    users = sorted(docs)
    vocab = build_vocabulary(docs, min_count=cfg.min_count)  # raises on degenerate corpus
    token_list = vocab.tokens_by_index()
    token_index = {t: i for i, t in enumerate(token_list)}

    encoded: list[list[int]] = []
    for u in users:
        encoded.append([token_index[t] for t in docs[u] if t in token_index])
    offsets = np.zeros(len(users) + 1, dtype=np.int64)
    for i, doc in enumerate(encoded):
        offsets[i + 1] = offsets[i] + len(doc)
    flat = np.fromiter(
        (t for doc in encoded for t in doc), dtype=np.int32, count=int(offsets[-1])
    )
    if flat.size == 0:
        raise ValueError("empty corpus: all documents pruned away")

    counts = np.bincount(flat, minlength=len(token_list)).astype(np.float64)
    noise_cum = np.cumsum(counts**NOISE_POWER)

    rng = np.random.default_rng(cfg.seed)
    doc_vecs = ((rng.random((len(users), cfg.dim)) - 0.5) / cfg.dim).astype(np.float32)
    tok_vecs = ((rng.random((len(token_list), cfg.dim)) - 0.5) / cfg.dim).astype(np.float32)

    state = np.uint64(_splitmix64(cfg.seed) or 1)  # xorshift state must be nonzero
    losses = _train_dbow(
        doc_vecs,
        tok_vecs,
        flat,
        offsets,
        noise_cum,
        cfg.epochs,
        cfg.negative_samples,
        cfg.initial_lr,
        cfg.final_lr,
        state,
    )
    empty = offsets[1:] == offsets[:-1]
    doc_vecs[empty] = 0.0
    return EmbeddingModel(cfg, level_tag, users, doc_vecs, token_list, tok_vecs, losses)


def _zero_model(users: Sequence[str], cfg: EmbedConfig, level_tag: str) -> EmbeddingModel:
    return EmbeddingModel(
        cfg,
        level_tag,
        sorted(users),
        np.zeros((len(users), cfg.dim), dtype=np.float32),
        [],
        np.zeros((0, cfg.dim), dtype=np.float32),
        np.zeros(0),
    )


def embedding_ensemble(logs: Sequence[UserLog], base_cfg: EmbedConfig) -> list[EmbeddingModel]:
    """Five models: one per URL hierarchy level over dedup'd level tokens, plus a
    word-level model over title tokens. Users without titled events (or whose
    documents prune to nothing) hold zero vectors; a level whose whole corpus
    prunes away yields an all-zero model rather than an error."""
    all_users = sorted(log.user_id for log in logs)
    models: list[EmbeddingModel] = []
    for idx, tag in enumerate(LEVEL_TAGS):
        cfg = replace(base_cfg, seed=base_cfg.seed + idx)
        if tag == "title":
            docs: Mapping[str, Sequence[str]] = build_title_documents(logs)
        else:
            docs = build_user_documents(logs, int(tag[1]))
        try:
            models.append(train_doc_embeddings(docs, cfg, level_tag=tag))
        except ValueError:
            models.append(_zero_model(all_users, cfg, tag))
    return models


def save_embeddings(path: str | Path, models: Sequence[EmbeddingModel]) -> None:
    meta: dict = {"tags": [m.level_tag for m in models]}
    arrays: dict[str, np.ndarray] = {}
    for m in models:
        tag = m.level_tag
        meta[f"{tag}.config"] = {
            "dim": m.config.dim,
            "window": m.config.window,
            "epochs": m.config.epochs,
            "negative_samples": m.config.negative_samples,
            "initial_lr": m.config.initial_lr,
            "final_lr": m.config.final_lr,
            "min_count": m.config.min_count,
            "seed": m.config.seed,
        }
        meta[f"{tag}.users"] = m.users
        meta[f"{tag}.tokens"] = m.tokens
        arrays[f"{tag}.user_vectors"] = m.matrix
        arrays[f"{tag}.token_vectors"] = m.token_matrix
        arrays[f"{tag}.epoch_losses"] = m.epoch_losses
    write_artifact(path, "embeddings", meta, arrays)


def load_embeddings(path: str | Path) -> list[EmbeddingModel]:
    _, meta, arrays = read_artifact(path, expected_kind="embeddings")
    models = []
    for tag in meta["tags"]:
        cfg = EmbedConfig(**meta[f"{tag}.config"])
        models.append(
            EmbeddingModel(
                cfg,
                tag,
                meta[f"{tag}.users"],
                arrays[f"{tag}.user_vectors"],
                meta[f"{tag}.tokens"],
                arrays[f"{tag}.token_vectors"],
                arrays[f"{tag}.epoch_losses"],
            )
        )
    return models
