"""Precision / recall / F1 scoring of ranked pair submissions."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Sequence

from .pairs import CandidatePair, is_canonical


@dataclass(frozen=True)
class EvalReport:
    k: int  # requested cut-off (clamped value in `predicted`)
    precision: float
    recall: float
    f1: float
    true_positives: int
    predicted: int
    truth_size: int
    clamped: bool = False


def f1_from_pr(precision: float, recall: float) -> float:
    """Harmonic mean, defined as 0 when both rates are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def score_submission(
    predicted: Sequence[CandidatePair], truth: Collection[CandidatePair], k: int
) -> EvalReport:
    """Score the first k predictions; k larger than the list clamps (flagged)."""
    if not truth:
        raise ValueError("empty truth set")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not predicted:
        raise ValueError("empty submission")
    seen: set[CandidatePair] = set()
    for p in predicted:
        if not is_canonical(p):
            raise ValueError(f"non-canonical pair in submission: {p}")
        if p in seen:
            raise ValueError(f"duplicate pair in submission: {p}")
        seen.add(p)
    clamped = k > len(predicted)
    k_eff = min(k, len(predicted))
    truth_set = set(truth)
    tp = sum(1 for p in predicted[:k_eff] if p in truth_set)
    precision = tp / k_eff
    recall = tp / len(truth_set)
    return EvalReport(
        k=k,
        precision=precision,
        recall=recall,
        f1=f1_from_pr(precision, recall),
        true_positives=tp,
        predicted=k_eff,
        truth_size=len(truth_set),
        clamped=clamped,
    )


def f1_curve(
    predicted: Sequence[CandidatePair], truth: Collection[CandidatePair], ks: Sequence[int]
) -> list[EvalReport]:
    if not ks:
        raise ValueError("no cut-offs given")
    if any(k <= 0 for k in ks):
        raise ValueError(f"cut-offs must be positive, got {list(ks)}")
    if list(ks) != sorted(ks):
        raise ValueError("cut-offs must be ascending")
    return [score_submission(predicted, truth, k) for k in ks]


def format_eval_report(reports: Sequence[EvalReport]) -> str:
    """Table of `k precision recall f1 tp` lines plus a key-value block."""
    lines = ["k precision recall f1 tp"]
    for r in reports:
        lines.append(f"{r.k} {r.precision:.6f} {r.recall:.6f} {r.f1:.6f} {r.true_positives}")
    lines.append("")
    lines.append("[metrics]")
    for r in reports:
        suffix = " (clamped)" if r.clamped else ""
        lines.append(f"f1@{r.k} = {r.f1!r}{suffix}")
        lines.append(f"precision@{r.k} = {r.precision!r}")
        lines.append(f"recall@{r.k} = {r.recall!r}")
    return "\n".join(lines) + "\n"


def write_eval_report(path: str | Path, reports: Sequence[EvalReport]) -> None:
    Path(path).write_text(format_eval_report(reports), encoding="utf-8")


def write_eval_json(path: str | Path, reports: Sequence[EvalReport]) -> None:
    payload = [
        {
            "k": r.k,
            "precision": r.precision,
            "recall": r.recall,
            "f1": r.f1,
            "true_positives": r.true_positives,
            "predicted": r.predicted,
            "truth_size": r.truth_size,
            "clamped": r.clamped,
        }
        for r in reports
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
