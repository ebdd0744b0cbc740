"""End-to-end orchestration of the matching pipeline.

Stage order mirrors the batch flow: parse events, build TF-IDF vectors and the
embedding ensemble over the full population, then per user split generate KNN
candidates, compute pair features, train the scorer on the scorer split, train
the merge voter on blind-extended pairs of the voter split, and finally rank,
extend and select the heldout submission, scoring it against the heldout truth.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import plots
from .config import Settings
from .embedding import EmbeddingModel, embedding_ensemble, save_embeddings
from .evaluate import EvalReport, f1_curve, write_eval_json, write_eval_report
from .events import UserLog, read_events_file, read_splits_file, write_events_file
from .features import FeatureContext, default_schema, write_feature_matrix
from .gbdt import (
    PairClassifier,
    ScoredPair,
    load_classifier,
    sample_training_pairs,
    save_classifier,
    score_pairs,
    train_gbdt,
    write_importance_report,
)
from .inference import final_selection, train_voter
from .knn import (
    NeighborList,
    knn_dense,
    knn_sparse,
    load_neighbor_maps,
    recall_at_k,
    save_neighbor_maps,
    union_candidates,
    write_recall_report,
)
from .pairs import CandidatePair, read_pairs_file, restrict_pairs, write_pairs_file
from .synth import generate_dataset
from .tfidf import build_vocabulary, save_tfidf_levels, tfidf_vectors

SPLITS = ("scorer", "voter", "heldout")

FILES = {
    "events": "events.tsv",
    "truth": "truth_pairs.csv",
    "splits": "splits.tsv",
    "normalized_events": "normalized_events.tsv",
    "ingest_summary": "ingest_summary.json",
    "tfidf": "tfidf.bin",
    "embeddings": "embeddings.bin",
    "neighbors": "neighbors.bin",
    "scorer_model": "scorer.bin",
    "voter_model": "voter.bin",
    "importance": "importance.tsv",
    "importance_fig": "importance.png",
    "recall": "recall_heldout.tsv",
    "recall_fig": "recall_heldout.png",
    "submission": "submission.csv",
    "eval_report": "eval_report.txt",
    "eval_json": "eval_report.json",
    "f1_fig": "f1_curve.png",
    "ablation": "ablation.tsv",
    "ablation_fig": "ablation.png",
    "manifest": "pipeline_manifest.json",
}


def artifact_path(out_dir: str | Path, name: str) -> Path:
    return Path(out_dir) / FILES[name]


# ---------------------------------------------------------------------------
# stage pieces

def ingest_stage(events_path: str | Path, out_dir: str | Path) -> list[UserLog]:
    logs = read_events_file(events_path)
    write_events_file(artifact_path(out_dir, "normalized_events"), logs)
    summary = {
        "n_users": len(logs),
        "n_events": sum(len(l.events) for l in logs),
        "min_timestamp": min((l.events[0].timestamp for l in logs if l.events), default=0),
        "max_timestamp": max((l.events[-1].timestamp for l in logs if l.events), default=0),
    }
    artifact_path(out_dir, "ingest_summary").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", "utf-8"
    )
    return logs


def tfidf_stage(logs: Sequence[UserLog], settings: Settings, out_dir: str | Path):
    from .events import build_user_documents

    levels = {}
    for h in range(4):
        docs = build_user_documents(logs, h)
        vocab = build_vocabulary(docs, min_count=settings.embed.min_count)
        levels[h] = (vocab, tfidf_vectors(docs, vocab))
    save_tfidf_levels(artifact_path(out_dir, "tfidf"), levels)
    return levels


def embed_stage(
    logs: Sequence[UserLog], settings: Settings, out_dir: str | Path
) -> list[EmbeddingModel]:
    models = embedding_ensemble(logs, settings.embed)
    save_embeddings(artifact_path(out_dir, "embeddings"), models)
    return models


def _sparse_subset(vectors, users):
    return {u: vectors[u] for u in users}


def _dense_subset(model: EmbeddingModel, users):
    pos = {u: i for i, u in enumerate(model.users)}
    return {u: model.matrix[pos[u]] for u in users}


def knn_stage(
    levels,
    models: Sequence[EmbeddingModel],
    splits: Mapping[str, Sequence[str]],
    settings: Settings,
    out_dir: str | Path,
    truth: set[CandidatePair] | None = None,
) -> dict[str, dict[str, dict[str, NeighborList]]]:
    """Per split, per representation: exact neighbor lists at max(k, recall ks)."""
    kmax = max(settings.knn.k, max(settings.knn.recall_ks, default=settings.knn.k))
    by_model = {m.level_tag: m for m in models}
    maps: dict[str, dict[str, dict[str, NeighborList]]] = {}
    for split in SPLITS:
        users = list(splits.get(split, ()))
        if not users:
            continue
        split_maps: dict[str, dict[str, NeighborList]] = {}
        for h, (vocab, vectors) in levels.items():
            split_maps[f"tfidf_h{h}"] = knn_sparse(
                _sparse_subset(vectors, users), k=kmax, dim=len(vocab)
            )
        for tag, model in by_model.items():
            split_maps[f"emb_{tag}"] = knn_dense(_dense_subset(model, users), k=kmax)
        maps[split] = split_maps

    flat = {f"{rep}/{split}": m for split, per in maps.items() for rep, m in per.items()}
    save_neighbor_maps(artifact_path(out_dir, "neighbors"), flat, kmax)

    for split, per in maps.items():
        pairs = candidates_for(per, settings)
        write_pairs_file(Path(out_dir) / f"candidates_{split}.csv", pairs)

    if truth and "heldout" in maps:
        heldout_truth = restrict_pairs(truth, splits["heldout"])
        if heldout_truth:
            source_maps = [maps["heldout"][rep] for rep in settings.knn.sources]
            points = recall_at_k(source_maps, sorted(settings.knn.recall_ks), heldout_truth)
            write_recall_report(artifact_path(out_dir, "recall"), points)
            plots.save_recall_curve(points, artifact_path(out_dir, "recall_fig"))
    return maps


def load_split_neighbor_maps(path: str | Path):
    flat, kmax = load_neighbor_maps(path)
    maps: dict[str, dict[str, dict[str, NeighborList]]] = {}
    for key, nmap in flat.items():
        rep, split = key.rsplit("/", 1)
        maps.setdefault(split, {})[rep] = nmap
    return maps, kmax


def candidates_for(
    split_maps: Mapping[str, Mapping[str, NeighborList]], settings: Settings
) -> list[CandidatePair]:
    source_maps = [split_maps[rep] for rep in settings.knn.sources]
    return sorted(union_candidates(source_maps, settings.knn.k))


def build_context(
    levels,
    models: Sequence[EmbeddingModel],
    split_maps: Mapping[str, Mapping[str, NeighborList]],
    logs: Sequence[UserLog],
    users: Sequence[str],
    settings: Settings,
) -> FeatureContext:
    schema = default_schema()
    users = sorted(users)
    user_set = set(users)
    sparse_vectors = {
        f"tfidf_h{h}": _sparse_subset(vectors, users) for h, (_, vectors) in levels.items()
    }
    sparse_dims = {f"tfidf_h{h}": len(vocab) for h, (vocab, _) in levels.items()}
    dense_vectors = {f"emb_{m.level_tag}": _dense_subset(m, users) for m in models}
    sub_logs = {l.user_id: l for l in logs if l.user_id in user_set}
    missing = user_set - set(sub_logs)
    if missing:
        raise ValueError(f"users in split but absent from the event log: {sorted(missing)[:5]}")
    return FeatureContext(
        schema,
        sparse_vectors,
        sparse_dims,
        dense_vectors,
        split_maps,
        settings.knn.k,
        sub_logs,
        kl_eps=settings.features.kl_epsilon,
    )


def train_scorer_stage(
    context: FeatureContext,
    candidates: Sequence[CandidatePair],
    train_users: Sequence[str],
    truth: set[CandidatePair],
    settings: Settings,
    out_dir: str | Path,
) -> PairClassifier:
    data = sample_training_pairs(
        train_users,
        candidates,
        truth,
        context,
        neg_ratio=settings.scorer.neg_ratio,
        seed=settings.scorer.params.seed,
    )
    clf = train_gbdt(data, settings.scorer.params, context.schema)
    save_classifier(artifact_path(out_dir, "scorer_model"), clf)
    importance = clf.feature_importance()
    write_importance_report(artifact_path(out_dir, "importance"), importance)
    plots.save_importance_chart(importance, artifact_path(out_dir, "importance_fig"))
    return clf


def score_stage(
    clf: PairClassifier,
    context: FeatureContext,
    candidates: Sequence[CandidatePair],
    out_path: str | Path | None = None,
) -> list[ScoredPair]:
    scored = score_pairs(clf, list(candidates), context.matrix(list(candidates)))
    if out_path is not None:
        write_scored_file(out_path, scored)
    return scored


def train_voter_stage(
    scored_voter: Sequence[ScoredPair],
    voter_truth: set[CandidatePair],
    context: FeatureContext,
    settings: Settings,
    out_dir: str | Path,
) -> PairClassifier:
    if not voter_truth:
        raise ValueError("voter split has no truth pairs; cannot train the voter")
    n_top = int(round(settings.voter.top_multiplier * len(voter_truth)))
    n_top = min(len(scored_voter), max(2, n_top))
    voter = train_voter(list(scored_voter[:n_top]), voter_truth, context, settings.voter.params)
    save_classifier(artifact_path(out_dir, "voter_model"), voter)
    return voter


def select_stage(
    scored: Sequence[ScoredPair],
    voter: PairClassifier,
    context: FeatureContext,
    budget: int,
    settings: Settings,
    out_dir: str | Path | None = None,
) -> list[CandidatePair]:
    n_sup = min(len(scored), int(round(settings.infer.sup_frac * budget)))
    n_unsup = min(len(scored), int(round(settings.infer.unsup_frac * budget)))
    n_sup = min(n_sup, n_unsup)
    submission = final_selection(
        list(scored),
        voter,
        context,
        n_sup=n_sup,
        n_unsup=n_unsup,
        n_final=budget,
        vote_threshold=settings.infer.vote_threshold,
        max_merged_size=settings.infer.size_cap,
    )
    if out_dir is not None:
        write_pairs_file(artifact_path(out_dir, "submission"), submission)
    return submission


def evaluate_stage(
    submission: Sequence[CandidatePair],
    truth: set[CandidatePair],
    budget: int,
    settings: Settings,
    out_dir: str | Path,
) -> list[EvalReport]:
    ks = sorted({max(1, int(round(f * budget))) for f in settings.evaluate.curve_fracs} | {budget})
    reports = f1_curve(submission, truth, ks)
    write_eval_report(artifact_path(out_dir, "eval_report"), reports)
    write_eval_json(artifact_path(out_dir, "eval_json"), reports)
    plots.save_f1_curve(reports, artifact_path(out_dir, "f1_fig"))
    return reports


def tfidf_knn_baseline(
    split_maps: Mapping[str, Mapping[str, NeighborList]], k: int, rep: str = "tfidf_h3"
) -> list[CandidatePair]:
    """Unsupervised baseline: KNN candidate pairs ranked by TF-IDF cosine.

    Uses the deepest hierarchy level (full URL tokens) by default: the
    strongest single unsupervised ranking, and so the fairest yardstick for
    the learned pipeline. Shallow levels are dominated by near-1 cosines over
    ubiquitous domain tokens.
    """
    best: dict[CandidatePair, float] = {}
    from .pairs import make_pair

    for query, nlist in split_maps[rep].items():
        for neighbor, sim in nlist.neighbors[:k]:
            pair = make_pair(query, neighbor)
            if sim > best.get(pair, -np.inf):
                best[pair] = sim
    return [p for p, _ in sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))]


def write_scored_file(path: str | Path, scored: Sequence[ScoredPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sp in scored:
            fh.write(f"{sp.pair.a},{sp.pair.b},{sp.score!r}\n")


def read_scored_file(path: str | Path) -> list[ScoredPair]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'a,b,score'")
            out.append(ScoredPair(CandidatePair(parts[0], parts[1]), float(parts[2])))
    return out


# ---------------------------------------------------------------------------
# full pipeline

@dataclass
class PipelineResult:
    out_dir: Path
    submission: list[CandidatePair]
    reports: list[EvalReport]
    ablation: dict[str, float] = field(default_factory=dict)
    budget: int = 0

    @property
    def f1_at_budget(self) -> float:
        for r in self.reports:
            if r.k == self.budget:
                return r.f1
        return self.reports[-1].f1 if self.reports else 0.0


def _dedup_truncate(*streams: Sequence[CandidatePair], limit: int) -> list[CandidatePair]:
    seen: set[CandidatePair] = set()
    out: list[CandidatePair] = []
    for stream in streams:
        for pair in stream:
            if pair not in seen:
                seen.add(pair)
                out.append(pair)
                if len(out) == limit:
                    return out
    return out


def run_pipeline(
    settings: Settings,
    out_dir: str | Path,
    events_path: str | Path | None = None,
    truth_path: str | Path | None = None,
    splits_path: str | Path | None = None,
    write_features: bool = False,
) -> PipelineResult:
    """Run every stage; when no event file is given, generate a synthetic one."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if events_path is None:
        dataset = generate_dataset(settings.synth, out)
        events_path = dataset.events_path
        truth_path = dataset.truth_path
        splits_path = dataset.splits_path
    if truth_path is None or splits_path is None:
        raise ValueError("external events need explicit truth and splits files")

    logs = ingest_stage(events_path, out)
    truth = set(read_pairs_file(truth_path))
    splits = read_splits_file(splits_path)

    levels = tfidf_stage(logs, settings, out)
    models = embed_stage(logs, settings, out)
    maps = knn_stage(levels, models, splits, settings, out, truth=truth)

    contexts: dict[str, FeatureContext] = {}
    candidates: dict[str, list[CandidatePair]] = {}
    for split in SPLITS:
        if split not in maps:
            continue
        candidates[split] = candidates_for(maps[split], settings)
        contexts[split] = build_context(levels, models, maps[split], logs, splits[split], settings)
        if write_features:
            matrix = contexts[split].matrix(candidates[split])
            write_feature_matrix(
                out / f"features_{split}.csv", contexts[split].schema, candidates[split], matrix
            )

    scorer = train_scorer_stage(
        contexts["scorer"],
        candidates["scorer"],
        splits["scorer"],
        restrict_pairs(truth, splits["scorer"]),
        settings,
        out,
    )

    scored_voter = score_stage(
        scorer, contexts["voter"], candidates["voter"], out / "scored_voter.csv"
    )
    voter = train_voter_stage(
        scored_voter, restrict_pairs(truth, splits["voter"]), contexts["voter"], settings, out
    )

    heldout_truth = restrict_pairs(truth, splits["heldout"])
    if not heldout_truth:
        raise ValueError("heldout split has no truth pairs; nothing to evaluate")
    scored = score_stage(
        scorer, contexts["heldout"], candidates["heldout"], out / "scored_heldout.csv"
    )
    budget = settings.infer.budget or len(heldout_truth)

    submission = select_stage(scored, voter, contexts["heldout"], budget, settings, out)
    reports = evaluate_stage(submission, heldout_truth, budget, settings, out)

    ablation = _ablation(
        scored, voter, contexts["heldout"], maps["heldout"], heldout_truth, budget, settings
    )
    _write_ablation(out, ablation)

    manifest = {
        "budget": budget,
        "splits": {s: len(splits.get(s, ())) for s in SPLITS},
        "truth_pairs": {
            "total": len(truth),
            **{s: len(restrict_pairs(truth, splits.get(s, ()))) for s in SPLITS},
        },
        "candidates": {s: len(candidates.get(s, ())) for s in SPLITS},
        "ablation": ablation,
        "deterministic": settings.deterministic,
        "artifacts": sorted(p.name for p in out.iterdir() if p.is_file()),
    }
    artifact_path(out, "manifest").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8"
    )
    return PipelineResult(out, submission, reports, ablation, budget)


def _ablation(
    scored: Sequence[ScoredPair],
    voter: PairClassifier,
    context: FeatureContext,
    split_maps: Mapping[str, Mapping[str, NeighborList]],
    truth: set[CandidatePair],
    budget: int,
    settings: Settings,
) -> dict[str, float]:
    """F1 at the budget for the unsupervised baseline, the raw ranking, each
    inference stage alone, and the full selection."""
    from .evaluate import score_submission
    from .inference import SizeCapped, VoterGated, merge_inference

    def f1_of(pairs: Sequence[CandidatePair]) -> float:
        if not pairs:
            return 0.0
        return score_submission(pairs, truth, min(budget, len(pairs))).f1

    ranked = [sp.pair for sp in scored]
    n_sup = min(len(scored), int(round(settings.infer.sup_frac * budget)))
    n_unsup = min(len(scored), int(round(settings.infer.unsup_frac * budget)))
    n_sup = min(n_sup, n_unsup)
    gated = merge_inference(
        list(scored[:n_sup]), VoterGated(voter, settings.infer.vote_threshold), context
    )
    capped = merge_inference(list(scored[:n_unsup]), SizeCapped(settings.infer.size_cap))
    return {
        "tfidf_knn_baseline": f1_of(tfidf_knn_baseline(split_maps, settings.knn.k)[:budget]),
        "scorer_topk": f1_of(ranked[:budget]),
        "supervised_only": f1_of(_dedup_truncate(gated, ranked, limit=budget)),
        "unsupervised_only": f1_of(_dedup_truncate(capped, ranked, limit=budget)),
        "full_selection": f1_of(_dedup_truncate(gated, capped, ranked, limit=budget)),
    }


def _write_ablation(out_dir: Path, ablation: Mapping[str, float]) -> None:
    with open(artifact_path(out_dir, "ablation"), "w", encoding="utf-8") as fh:
        for name, value in ablation.items():
            fh.write(f"{name}\t{value!r}\n")
    plots.save_ablation_chart(dict(ablation), artifact_path(out_dir, "ablation_fig"))
