"""Command-line interface: one subcommand per pipeline stage plus `pipeline`.

Every subcommand takes `--config PATH` (INI, one section per stage), `--seed N`
(reseeds all stages from one base), `--deterministic` and `--out DIR` (artifact
directory). Stage subcommands communicate through artifact files in the out
directory; `pipeline` chains everything.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import Settings, load_settings
from .embedding import load_embeddings
from .evaluate import f1_curve, write_eval_json, write_eval_report
from .events import read_events_file, read_splits_file
from .features import write_feature_matrix
from .gbdt import load_classifier
from .inference import Blind, SizeCapped, VoterGated, merge_inference
from .pairs import read_pairs_file, restrict_pairs, write_pairs_file
from .pipeline import (
    artifact_path,
    build_context,
    candidates_for,
    embed_stage,
    evaluate_stage,
    ingest_stage,
    knn_stage,
    load_split_neighbor_maps,
    read_scored_file,
    run_pipeline,
    score_stage,
    select_stage,
    tfidf_stage,
    train_scorer_stage,
    train_voter_stage,
)
from .synth import generate_dataset
from .tfidf import load_tfidf_levels

SUBCOMMANDS = (
    "gen-synth",
    "ingest",
    "tfidf",
    "embed",
    "knn",
    "features",
    "train-scorer",
    "score",
    "train-voter",
    "infer",
    "select",
    "evaluate",
    "pipeline",
)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="INI config file")
    common.add_argument("--seed", type=int, default=None, help="base seed overriding config seeds")
    common.add_argument(
        "--deterministic",
        action="store_true",
        help="force single-worker mode (all stages already run single-worker; recorded in outputs)",
    )
    common.add_argument("--out", type=Path, default=Path("out"), help="artifact directory")
    common.add_argument("--events", type=Path, default=None, help="events file override")
    common.add_argument("--truth", type=Path, default=None, help="truth pairs file override")
    common.add_argument("--splits", type=Path, default=None, help="splits file override")

    parser = argparse.ArgumentParser(
        prog="clickmatch", description="Cross-device user matching pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {name: sub.add_parser(name, parents=[common]) for name in SUBCOMMANDS}
    cmds["features"].add_argument(
        "--split", choices=("scorer", "voter", "heldout", "all"), default="all"
    )
    cmds["score"].add_argument(
        "--split", choices=("scorer", "voter", "heldout"), default="heldout"
    )
    cmds["infer"].add_argument(
        "--condition", choices=("blind", "supervised", "unsupervised"), default="unsupervised"
    )
    cmds["infer"].add_argument("--top", type=int, default=None, help="scored pairs to feed in")
    cmds["evaluate"].add_argument("--k", type=int, default=None, help="extra report cut-off")
    cmds["pipeline"].add_argument(
        "--write-features", action="store_true", help="also write feature matrix files"
    )
    return parser


def _settings(args: argparse.Namespace) -> Settings:
    settings = load_settings(args.config)
    if args.seed is not None:
        settings = settings.reseed(args.seed)
    if args.deterministic:
        settings = replace(settings, deterministic=True)
    return settings


def _events_path(args) -> Path:
    return args.events or artifact_path(args.out, "events")


def _truth_path(args) -> Path:
    return args.truth or artifact_path(args.out, "truth")


def _splits_path(args) -> Path:
    return args.splits or artifact_path(args.out, "splits")


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing artifact {path} (run `clickmatch {hint}` first?)")
    return path


def _load_context(args, settings: Settings, split: str):
    logs = read_events_file(_require(_events_path(args), "gen-synth"))
    splits = read_splits_file(_require(_splits_path(args), "gen-synth"))
    levels = load_tfidf_levels(_require(artifact_path(args.out, "tfidf"), "tfidf"))
    models = load_embeddings(_require(artifact_path(args.out, "embeddings"), "embed"))
    maps, _ = load_split_neighbor_maps(_require(artifact_path(args.out, "neighbors"), "knn"))
    if split not in maps:
        raise ValueError(f"split {split!r} has no neighbor maps in {artifact_path(args.out, 'neighbors')}")
    context = build_context(levels, models, maps[split], logs, splits[split], settings)
    return context, maps, splits, logs


def _cmd_gen_synth(args, settings: Settings) -> int:
    dataset = generate_dataset(settings.synth, args.out)
    print(
        f"wrote {dataset.n_events} events for {dataset.n_users} users "
        f"({dataset.n_truth_pairs} truth pairs) to {args.out}"
    )
    return 0


def _cmd_ingest(args, settings: Settings) -> int:
    logs = ingest_stage(_require(_events_path(args), "gen-synth"), args.out)
    print(f"parsed {sum(len(l.events) for l in logs)} events from {len(logs)} users")
    return 0


def _cmd_tfidf(args, settings: Settings) -> int:
    logs = read_events_file(_require(_events_path(args), "gen-synth"))
    levels = tfidf_stage(logs, settings, args.out)
    sizes = {h: len(vocab) for h, (vocab, _) in levels.items()}
    print(f"tfidf vocabularies per level: {sizes}")
    return 0


def _cmd_embed(args, settings: Settings) -> int:
    logs = read_events_file(_require(_events_path(args), "gen-synth"))
    models = embed_stage(logs, settings, args.out)
    print(f"trained {len(models)} embedding models (dim={settings.embed.dim})")
    return 0


def _cmd_knn(args, settings: Settings) -> int:
    levels = load_tfidf_levels(_require(artifact_path(args.out, "tfidf"), "tfidf"))
    models = load_embeddings(_require(artifact_path(args.out, "embeddings"), "embed"))
    splits = read_splits_file(_require(_splits_path(args), "gen-synth"))
    truth_path = _truth_path(args)
    truth = set(read_pairs_file(truth_path)) if truth_path.exists() else None
    knn_stage(levels, models, splits, settings, args.out, truth=truth)
    print(f"neighbor maps and candidate files written to {args.out}")
    return 0


def _cmd_features(args, settings: Settings) -> int:
    splits = ("scorer", "voter", "heldout") if args.split == "all" else (args.split,)
    for split in splits:
        context, _, _, _ = _load_context(args, settings, split)
        pairs = read_pairs_file(_require(Path(args.out) / f"candidates_{split}.csv", "knn"))
        matrix = context.matrix(pairs)
        out_path = Path(args.out) / f"features_{split}.csv"
        write_feature_matrix(out_path, context.schema, pairs, matrix)
        print(f"wrote {matrix.shape[0]} x {matrix.shape[1]} feature matrix to {out_path}")
    return 0


def _cmd_train_scorer(args, settings: Settings) -> int:
    context, _, splits, _ = _load_context(args, settings, "scorer")
    candidates = read_pairs_file(_require(Path(args.out) / "candidates_scorer.csv", "knn"))
    truth = set(read_pairs_file(_require(_truth_path(args), "gen-synth")))
    clf = train_scorer_stage(
        context, candidates, splits["scorer"], restrict_pairs(truth, splits["scorer"]),
        settings, args.out,
    )
    print(
        f"scorer trained: {len(clf.trees)} trees, "
        f"final train logloss {clf.train_logloss[-1]:.4f}"
    )
    return 0


def _cmd_score(args, settings: Settings) -> int:
    context, _, _, _ = _load_context(args, settings, args.split)
    clf = load_classifier(_require(artifact_path(args.out, "scorer_model"), "train-scorer"))
    pairs = read_pairs_file(_require(Path(args.out) / f"candidates_{args.split}.csv", "knn"))
    out_path = Path(args.out) / f"scored_{args.split}.csv"
    scored = score_stage(clf, context, pairs, out_path)
    print(f"scored {len(scored)} pairs -> {out_path}")
    return 0


def _cmd_train_voter(args, settings: Settings) -> int:
    context, _, splits, _ = _load_context(args, settings, "voter")
    scored_path = Path(args.out) / "scored_voter.csv"
    if scored_path.exists():
        scored = read_scored_file(scored_path)
    else:
        clf = load_classifier(_require(artifact_path(args.out, "scorer_model"), "train-scorer"))
        pairs = read_pairs_file(_require(Path(args.out) / "candidates_voter.csv", "knn"))
        scored = score_stage(clf, context, pairs, scored_path)
    truth = set(read_pairs_file(_require(_truth_path(args), "gen-synth")))
    voter = train_voter_stage(
        scored, restrict_pairs(truth, splits["voter"]), context, settings, args.out
    )
    print(f"voter trained: {len(voter.trees)} trees")
    return 0


def _cmd_infer(args, settings: Settings) -> int:
    scored = read_scored_file(_require(Path(args.out) / "scored_heldout.csv", "score"))
    if args.top is not None:
        scored = scored[: args.top]
    if args.condition == "blind":
        extended = merge_inference(scored, Blind())
    elif args.condition == "unsupervised":
        extended = merge_inference(scored, SizeCapped(settings.infer.size_cap))
    else:
        context, _, _, _ = _load_context(args, settings, "heldout")
        voter = load_classifier(_require(artifact_path(args.out, "voter_model"), "train-voter"))
        extended = merge_inference(
            scored, VoterGated(voter, settings.infer.vote_threshold), context
        )
    out_path = Path(args.out) / f"extended_{args.condition}.csv"
    write_pairs_file(out_path, extended)
    print(f"{args.condition} inference extended {len(scored)} pairs to {len(extended)} -> {out_path}")
    return 0


def _cmd_select(args, settings: Settings) -> int:
    context, _, splits, _ = _load_context(args, settings, "heldout")
    scored = read_scored_file(_require(Path(args.out) / "scored_heldout.csv", "score"))
    voter = load_classifier(_require(artifact_path(args.out, "voter_model"), "train-voter"))
    truth = set(read_pairs_file(_require(_truth_path(args), "gen-synth")))
    heldout_truth = restrict_pairs(truth, splits["heldout"])
    budget = settings.infer.budget or len(heldout_truth)
    if budget < 1:
        raise ValueError("submission budget is zero: no heldout truth and no configured budget")
    submission = select_stage(scored, voter, context, budget, settings, args.out)
    print(f"selected {len(submission)} pairs -> {artifact_path(args.out, 'submission')}")
    return 0


def _cmd_evaluate(args, settings: Settings) -> int:
    submission = read_pairs_file(_require(artifact_path(args.out, "submission"), "select"))
    truth = set(read_pairs_file(_require(_truth_path(args), "gen-synth")))
    splits_path = _splits_path(args)
    if splits_path.exists():
        splits = read_splits_file(splits_path)
        truth = restrict_pairs(truth, splits["heldout"])
    if not truth:
        raise ValueError("no truth pairs to evaluate against")
    budget = settings.infer.budget or len(truth)
    if args.k is not None:
        if args.k > len(submission):
            print(
                f"warning: k={args.k} exceeds the {len(submission)}-pair submission; clamping",
                file=sys.stderr,
            )
        reports = evaluate_stage(submission, truth, budget, settings, args.out)
        extra = f1_curve(submission, truth, [args.k])
        reports = sorted(set(reports) | set(extra), key=lambda r: r.k)
        write_eval_report(artifact_path(args.out, "eval_report"), reports)
        write_eval_json(artifact_path(args.out, "eval_json"), reports)
    else:
        reports = evaluate_stage(submission, truth, budget, settings, args.out)
    for r in reports:
        print(f"k={r.k} P={r.precision:.4f} R={r.recall:.4f} F1={r.f1:.4f}")
    return 0


def _cmd_pipeline(args, settings: Settings) -> int:
    result = run_pipeline(
        settings,
        args.out,
        events_path=args.events,
        truth_path=args.truth,
        splits_path=args.splits,
        write_features=args.write_features,
    )
    print(f"pipeline finished: budget={result.budget}, F1@budget={result.f1_at_budget:.4f}")
    for name, value in result.ablation.items():
        print(f"  ablation {name}: {value:.4f}")
    return 0


_HANDLERS = {
    "gen-synth": _cmd_gen_synth,
    "ingest": _cmd_ingest,
    "tfidf": _cmd_tfidf,
    "embed": _cmd_embed,
    "knn": _cmd_knn,
    "features": _cmd_features,
    "train-scorer": _cmd_train_scorer,
    "score": _cmd_score,
    "train-voter": _cmd_train_voter,
    "infer": _cmd_infer,
    "select": _cmd_select,
    "evaluate": _cmd_evaluate,
    "pipeline": _cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = _settings(args)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return _HANDLERS[args.command](args, settings)
    except Exception as exc:  # uniform nonzero exit with a diagnostic
        print(f"clickmatch {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
