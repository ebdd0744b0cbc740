"""Cluster-merging inference over scored pairs.

Pairs are processed in descending score order; when the endpoints live in
different clusters and the merge condition holds, the clusters merge and every
cross pair between the two former clusters is emitted. Conditions: blind
(always merge; generates the voter's training data), size-capped "unsupervised"
merging, and voter-gated "supervised" merging where a second classifier's mean
score over all cross pairs must clear a threshold.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .gbdt import GbdtParams, LabeledPair, PairClassifier, ScoredPair, train_gbdt
from .pairs import CandidatePair, make_pair


class ClusterState:
    """Disjoint-set forest with union by size, path compression and per-root
    member lists in insertion order."""

    def __init__(self, users: Iterable[str]):
        self._parent: dict[str, str] = {}
        self._members: dict[str, list[str]] = {}
        for u in users:
            if u not in self._parent:
                self._parent[u] = u
                self._members[u] = [u]

    def __contains__(self, user: str) -> bool:
        return user in self._parent

    def find(self, user: str) -> str:
        root = user
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[user] != root:  # path compression
            self._parent[user], user = root, self._parent[user]
        return root

    def members(self, user: str) -> list[str]:
        return self._members[self.find(user)]

    def size(self, user: str) -> int:
        return len(self.members(user))

    def union(self, u: str, v: str) -> str:
        ru, rv = self.find(u), self.find(v)
        if ru == rv:
            return ru
        if len(self._members[ru]) < len(self._members[rv]):
            ru, rv = rv, ru
        self._parent[rv] = ru
        self._members[ru].extend(self._members.pop(rv))
        return ru

    def clusters(self) -> list[list[str]]:
        return list(self._members.values())


@dataclass(frozen=True)
class Blind:
    """Merge unconditionally."""


@dataclass(frozen=True)
class SizeCapped:
    """Merge only while the combined cluster stays within ``max_merged_size``."""

    max_merged_size: int = 5

    def __post_init__(self) -> None:
        if self.max_merged_size < 2:
            raise ValueError(f"max_merged_size must be >= 2, got {self.max_merged_size}")


@dataclass(frozen=True)
class VoterGated:
    """Merge when the voter's mean score over all cross pairs exceeds ``vote_threshold``."""

    voter: PairClassifier
    vote_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not (0 < self.vote_threshold < 1):
            raise ValueError(f"vote_threshold must be in (0, 1), got {self.vote_threshold}")


MergeCondition = Blind | SizeCapped | VoterGated


def merge_inference(
    sorted_pairs: Sequence[ScoredPair],
    cond: MergeCondition,
    feature_source=None,
) -> list[CandidatePair]:
    """Run the score-ordered cluster merge and return extended pairs in emission order.

    ``feature_source`` (an object with a ``matrix(pairs)`` method) is required
    for voter-gated merging; cross-pair features are computed on demand.
    """
    for i in range(len(sorted_pairs) - 1):
        if sorted_pairs[i].score < sorted_pairs[i + 1].score:
            raise ValueError(
                f"input pairs must be sorted descending by score "
                f"(position {i}: {sorted_pairs[i].score} < {sorted_pairs[i + 1].score})"
            )
    if isinstance(cond, VoterGated) and feature_source is None:
        raise ValueError("voter-gated inference needs a feature source for cross pairs")

    state = ClusterState(u for sp in sorted_pairs for u in sp.pair)
    emitted: list[CandidatePair] = []
    for sp in sorted_pairs:
        u, v = sp.pair
        if state.find(u) == state.find(v):
            continue
        side_u = state.members(u)
        side_v = state.members(v)
        if isinstance(cond, SizeCapped) and len(side_u) + len(side_v) > cond.max_merged_size:
            continue
        cross = [make_pair(i, j) for i in side_u for j in side_v]
        if isinstance(cond, VoterGated):
            scores = cond.voter.predict_proba(feature_source.matrix(cross))
            if float(scores.mean()) <= cond.vote_threshold:
                continue
        state.union(u, v)
        emitted.extend(cross)
    return emitted


def train_voter(
    scored_pairs: Sequence[ScoredPair],
    truth: Iterable[CandidatePair],
    feature_source,
    params: GbdtParams,
) -> PairClassifier:
    """Train the merge-vote classifier on blind-inference extended pairs.

    The caller runs the candidate -> feature -> score pipeline on the voter
    split and passes the sorted scored pairs; blind merging extends them with
    cluster cross products (pairs the KNN stage never surfaced), which are
    labeled against the truth and fitted with a fresh boosted ensemble.
    """
    extended = merge_inference(scored_pairs, Blind())
    if not extended:
        raise ValueError("blind inference emitted no pairs to train the voter on")
    truth_set = set(truth)
    matrix = feature_source.matrix(extended)
    data = [
        LabeledPair(p, matrix[i], 1 if p in truth_set else 0)
        for i, p in enumerate(extended)
    ]
    return train_gbdt(data, params, feature_source.schema)


def final_selection(
    scored: Sequence[ScoredPair],
    voter: PairClassifier,
    feature_source,
    n_sup: int,
    n_unsup: int,
    n_final: int,
    vote_threshold: float = 0.5,
    max_merged_size: int = 5,
) -> list[CandidatePair]:
    """Combine voter-gated extension of the top pairs, size-capped extension of a
    larger slice, and the raw ranking; deduplicate keeping first occurrence and
    truncate to the submission budget."""
    if not (0 <= n_sup <= n_unsup <= len(scored)):
        raise ValueError(
            f"need 0 <= n_sup <= n_unsup <= len(scored), got {n_sup}, {n_unsup}, {len(scored)}"
        )
    if n_final < 1:
        raise ValueError(f"n_final must be >= 1, got {n_final}")
    gated = merge_inference(scored[:n_sup], VoterGated(voter, vote_threshold), feature_source)
    capped = merge_inference(scored[:n_unsup], SizeCapped(max_merged_size))
    ranked = [sp.pair for sp in scored]
    seen: set[CandidatePair] = set()
    final: list[CandidatePair] = []
    for pair in (*gated, *capped, *ranked):
        if pair not in seen:
            seen.add(pair)
            final.append(pair)
            if len(final) == n_final:
                break
    return final
