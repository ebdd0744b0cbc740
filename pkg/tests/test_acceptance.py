"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines while the suite runs. Criteria 9 and 10 share one full run on the
standard synthetic instance (500 personas, 2-5 devices, 300 events/device,
seed 7).
"""
import io
import time
from dataclasses import replace

import numpy as np
import pytest

from clickmatch.config import Settings
from clickmatch.embedding import EmbedConfig, embedding_ensemble
from clickmatch.evaluate import f1_from_pr, score_submission
from clickmatch.events import parse_events, read_events_file, read_splits_file, token_at_level
from clickmatch.features import symmetric_kl
from clickmatch.gbdt import GbdtParams, LabeledPair, train_gbdt
from clickmatch.inference import Blind, SizeCapped, merge_inference
from clickmatch.knn import knn_dense, knn_sparse, recall_at_k
from clickmatch.pairs import make_pair, read_pairs_file, restrict_pairs
from clickmatch.pipeline import (
    load_split_neighbor_maps,
    read_scored_file,
    run_pipeline,
    tfidf_knn_baseline,
)
from clickmatch.synth import SynthConfig, generate_dataset

from conftest import auc_score, small_settings

from test_inference import closure_pairs, components_of, random_instance
from test_knn import brute_force_neighbors, sparsify


def criterion(number: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {number}: {detail}"


# ---------------------------------------------------------------------------
# standard synthetic instance shared by criteria 9 and 10

def standard_instance_settings() -> Settings:
    s = Settings().reseed(7)
    return replace(
        s,
        synth=replace(
            s.synth,
            n_personas=500,
            devices_min=2,
            devices_max=5,
            events_min=300,
            events_max=300,
            n_domains=40,
            paths_per_domain=6,
            topic_concentration=3.0,
            cross_device_noise=0.6,
            time_habit_strength=0.7,
            title_fraction=0.3,
            split_fractions=(0.35, 0.35),
            seed=7,
        ),
    )


@pytest.fixture(scope="session")
def standard_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("standard")
    started = time.time()
    result = run_pipeline(standard_instance_settings(), out)
    return result, time.time() - started


def test_criterion_1_f1_arithmetic():
    started = time.time()
    f1 = f1_from_pr(0.3986, 0.4445)
    # identity between the table row arithmetic and score_submission's report
    truth = {make_pair(f"t{i:02d}", f"u{i:02d}") for i in range(16)}
    predicted = sorted(truth)[:9] + [make_pair(f"x{i:02d}", f"y{i:02d}") for i in range(11)]
    report = score_submission(predicted, truth, k=20)
    identity = report.f1 == f1_from_pr(report.precision, report.recall)
    elapsed = time.time() - started
    criterion(
        1,
        abs(f1 - 0.4204) <= 1e-4 and identity and elapsed < 1.0,
        f"F1(P=0.3986, R=0.4445) = {f1:.6f} (target 0.4204 +-1e-4), "
        f"score_submission identity holds, {elapsed:.3f}s",
    )


TOKEN_FIXTURE = [
    # (events-file url, [level-0..level-3 tokens]); the a/b/c -> [a, a/b, a/b/c] scheme
    ("news.com", ["news.com", "news.com", "news.com", "news.com"]),
    ("news.com/politics", ["news.com", "news.com/politics", "news.com/politics", "news.com/politics"]),
    ("news.com/politics/eu", ["news.com", "news.com/politics", "news.com/politics/eu", "news.com/politics/eu"]),
    ("a/b/c", ["a", "a/b", "a/b/c", "a/b/c"]),
    ("a/b/c/d", ["a", "a/b", "a/b/c", "a/b/c/d"]),
    ("shop.example/cart", ["shop.example", "shop.example/cart", "shop.example/cart", "shop.example/cart"]),
    ("shop.example/cart/items?id=9", ["shop.example", "shop.example/cart", "shop.example/cart/items", "shop.example/cart/items"]),
    ("site.org/x/y#frag", ["site.org", "site.org/x", "site.org/x/y", "site.org/x/y"]),
    ("wiki.org/w/idx/page/sub", ["wiki.org", "wiki.org/w", "wiki.org/w/idx", "wiki.org/w/idx/page"]),
    ("m.video.net/watch", ["m.video.net", "m.video.net/watch", "m.video.net/watch", "m.video.net/watch"]),
    ("blog.io/2016/10/post", ["blog.io", "blog.io/2016", "blog.io/2016/10", "blog.io/2016/10/post"]),
    ("mail.com/inbox", ["mail.com", "mail.com/inbox", "mail.com/inbox", "mail.com/inbox"]),
    ("mail.com/inbox/42?page=2#top", ["mail.com", "mail.com/inbox", "mail.com/inbox/42", "mail.com/inbox/42"]),
    ("maps.app/route/a/b", ["maps.app", "maps.app/route", "maps.app/route/a", "maps.app/route/a/b"]),
    ("d001.example/s01/t02", ["d001.example", "d001.example/s01", "d001.example/s01/t02", "d001.example/s01/t02"]),
    ("forum.net/t/123/reply", ["forum.net", "forum.net/t", "forum.net/t/123", "forum.net/t/123/reply"]),
    ("cdn.host/img", ["cdn.host", "cdn.host/img", "cdn.host/img", "cdn.host/img"]),
    ("x.y.z/p1/p2/p3/p4", ["x.y.z", "x.y.z/p1", "x.y.z/p1/p2", "x.y.z/p1/p2/p3"]),
    ("bank.com/login?next=/home", ["bank.com", "bank.com/login", "bank.com/login", "bank.com/login"]),
    ("news.com/politics/eu/brexit", ["news.com", "news.com/politics", "news.com/politics/eu", "news.com/politics/eu/brexit"]),
]


def test_criterion_2_tokenization_scheme():
    assert len(TOKEN_FIXTURE) == 20
    lines = "".join(f"u\t{i}\t{url}\n" for i, (url, _) in enumerate(TOKEN_FIXTURE))
    (log,) = parse_events(io.StringIO(lines))
    ok = True
    for event, (url, expected) in zip(log.events, TOKEN_FIXTURE):
        got = [token_at_level(event, h) for h in range(4)]
        if got != expected:
            ok = False
            break
    criterion(2, ok, f"token_at_level reproduces the prefix scheme on all {len(TOKEN_FIXTURE)} fixture URLs")


def test_criterion_3_blind_inference_equals_transitive_closure():
    rng = np.random.default_rng(303)
    started = time.time()
    ok = True
    for _ in range(100):
        scored = random_instance(rng, max_users=50)
        emitted = merge_inference(scored, Blind())
        if set(emitted) != closure_pairs([sp.pair for sp in scored]):
            ok = False
            break
        if len(emitted) != len(set(emitted)):
            ok = False
            break
    elapsed = time.time() - started
    criterion(3, ok and elapsed < 5.0, f"100 random instances, exact set equality, {elapsed:.2f}s")


def test_criterion_4_size_cap():
    rng = np.random.default_rng(404)
    started = time.time()
    ok = True
    for _ in range(100):
        scored = random_instance(rng, max_users=50)
        emitted = merge_inference(scored, SizeCapped(5))
        if any(len(c) > 5 for c in components_of(emitted)):
            ok = False
            break
    elapsed = time.time() - started
    criterion(4, ok and elapsed < 5.0, f"beta=5 cap never exceeded over 100 runs, {elapsed:.2f}s")


def test_criterion_5_knn_oracle_equivalence():
    started = time.time()
    ok = True
    for seed in (50, 51, 52):
        rng = np.random.default_rng(seed)
        dense = {f"u{i:02d}": rng.normal(size=8) for i in range(50)}
        got = knn_dense(dense, k=10)
        want = brute_force_neighbors(dense, 10)
        ok &= all([u for u, _ in got[q].neighbors] == want[q] for q in dense)

        sparse_dense = {}
        for i in range(50):
            v = np.abs(rng.normal(size=14))
            v[rng.random(14) < 0.6] = 0.0
            sparse_dense[f"u{i:02d}"] = v
        got_s = knn_sparse({u: sparsify(v) for u, v in sparse_dense.items()}, k=10, dim=14)
        want_s = brute_force_neighbors(sparse_dense, 10)
        ok &= all([u for u, _ in got_s[q].neighbors] == want_s[q] for q in sparse_dense)

    # planted exact ties exercise the ascending-user-id rule
    tie = np.array([0.6, 0.8])
    vectors = {"q": np.array([1.0, 0.0]), "u3": tie.copy(), "u1": tie.copy(), "u2": tie.copy()}
    names = [u for u, _ in knn_dense(vectors, queries=["q"], k=3)["q"].neighbors]
    ok &= names == ["u1", "u2", "u3"]
    elapsed = time.time() - started
    criterion(5, ok and elapsed < 5.0, f"dense+sparse match brute force incl. tie rule, {elapsed:.2f}s")


def _mini_pipeline_auc(seed: int, tmp_path) -> float:
    """Scorer AUC on heldout candidate pairs of a small planted dataset."""
    from clickmatch.gbdt import sample_training_pairs, score_pairs
    from clickmatch.pipeline import (
        build_context,
        candidates_for,
        knn_stage,
        tfidf_stage,
        embed_stage,
        ingest_stage,
    )

    s = small_settings(seed)
    s = replace(
        s,
        synth=replace(s.synth, n_personas=30, events_min=50, events_max=80, seed=seed),
        embed=replace(s.embed, dim=12, epochs=6, seed=seed + 100),
    )
    out = tmp_path / f"auc{seed}"
    out.mkdir()
    dataset = generate_dataset(s.synth, out)
    logs = ingest_stage(dataset.events_path, out)
    truth = set(read_pairs_file(dataset.truth_path))
    splits = read_splits_file(dataset.splits_path)
    levels = tfidf_stage(logs, s, out)
    models = embed_stage(logs, s, out)
    maps = knn_stage(levels, models, splits, s, out)
    ctx_train = build_context(levels, models, maps["scorer"], logs, splits["scorer"], s)
    data = sample_training_pairs(
        splits["scorer"],
        candidates_for(maps["scorer"], s),
        restrict_pairs(truth, splits["scorer"]),
        ctx_train,
        neg_ratio=s.scorer.neg_ratio,
        seed=s.scorer.params.seed,
    )
    clf = train_gbdt(data, s.scorer.params, ctx_train.schema)
    ctx_held = build_context(levels, models, maps["heldout"], logs, splits["heldout"], s)
    held_pairs = candidates_for(maps["heldout"], s)
    scored = score_pairs(clf, held_pairs, ctx_held.matrix(held_pairs))
    held_truth = restrict_pairs(truth, splits["heldout"])
    labels = np.array([1 if sp.pair in held_truth else 0 for sp in scored])
    scores = np.array([sp.score for sp in scored])
    return auc_score(labels, scores)


def test_criterion_6_boosting_sanity(tmp_path):
    started = time.time()
    monotone = True
    for seed in (60, 61, 62):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(250, 8))
        y = (X[:, 1] - 0.7 * X[:, 4] + 0.5 * rng.normal(size=250) > 0).astype(float)
        data = [
            LabeledPair(make_pair(f"a{i:04d}", f"b{i:04d}"), X[i], int(y[i]))
            for i in range(len(y))
        ]
        from clickmatch.features import FeatureSchema

        clf = train_gbdt(
            data, GbdtParams(n_trees=50, subsample=1.0, seed=seed), FeatureSchema(tuple(f"f{i}" for i in range(8)))
        )
        losses = clf.train_logloss
        monotone &= all(losses[t + 1] <= losses[t] + 1e-12 for t in range(len(losses) - 1))

    aucs = [_mini_pipeline_auc(seed, tmp_path) for seed in range(10)]
    median_auc = float(np.median(aucs))
    elapsed = time.time() - started
    criterion(
        6,
        monotone and median_auc > 0.7 and elapsed < 60.0,
        f"train logloss non-increasing on 3 datasets; heldout AUC median {median_auc:.3f} > 0.7 "
        f"over 10 seeds, {elapsed:.1f}s",
    )


def test_criterion_7_embedding_separation(tmp_path):
    started = time.time()
    cfg_base = SynthConfig(
        n_personas=4,
        devices_min=2,
        devices_max=2,
        events_min=200,
        events_max=250,
        n_domains=10,
        paths_per_domain=3,
        title_vocab=60,
        title_fraction=0.6,
        topic_concentration=12.0,
        cross_device_noise=0.1,
        time_habit_strength=0.5,
    )
    wins = {tag: 0 for tag in ("h0", "h1", "h2", "h3", "title")}
    n_seeds = 10
    for seed in range(n_seeds):
        out = tmp_path / f"sep{seed}"
        dataset = generate_dataset(replace(cfg_base, seed=seed), out)
        logs = read_events_file(dataset.events_path)
        truth = set(read_pairs_file(dataset.truth_path))
        models = embedding_ensemble(
            logs, EmbedConfig(dim=32, epochs=20, min_count=3, seed=seed + 1000)
        )
        users = sorted(l.user_id for l in logs)
        for model in models:
            vecs = model.user_vectors
            same, cross = [], []
            for i, a in enumerate(users):
                for b in users[i + 1 :]:
                    va, vb = vecs[a], vecs[b]
                    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
                    cos = float(va @ vb / (na * nb)) if na > 0 and nb > 0 else 0.0
                    (same if make_pair(a, b) in truth else cross).append(cos)
            if np.mean(same) - np.mean(cross) >= 0.1:
                wins[model.level_tag] += 1
    elapsed = time.time() - started
    detail = ", ".join(f"{tag}:{w}/{n_seeds}" for tag, w in wins.items())
    criterion(
        7,
        all(w >= 9 for w in wins.values()) and elapsed < 300.0,
        f"same-persona vs cross-persona cosine margin >= 0.1 ({detail}), {elapsed:.1f}s",
    )


def test_criterion_8_recall_curve_shape(tmp_path):
    started = time.time()
    cfg = SynthConfig(
        n_personas=40,
        devices_min=2,
        devices_max=3,
        events_min=60,
        events_max=90,
        n_domains=12,
        paths_per_domain=4,
        topic_concentration=4.0,
        cross_device_noise=0.4,
        seed=88,
    )
    dataset = generate_dataset(cfg, tmp_path)
    logs = read_events_file(dataset.events_path)
    truth = set(read_pairs_file(dataset.truth_path))
    from clickmatch.events import build_user_documents
    from clickmatch.tfidf import build_vocabulary, tfidf_vectors

    docs = build_user_documents(logs, 3)
    vocab = build_vocabulary(docs, min_count=2)
    vectors = tfidf_vectors(docs, vocab)
    maps = [knn_sparse(vectors, k=18, dim=len(vocab))]
    points = recall_at_k(maps, list(range(1, 19)), truth)
    recalls = [r for _, r in points]
    monotone = all(r2 >= r1 for r1, r2 in zip(recalls, recalls[1:]))
    strict_ok = recalls[0] == 1.0 or recalls[-1] > recalls[0]
    elapsed = time.time() - started
    criterion(
        8,
        monotone and strict_ok and recalls[0] < 1.0 and elapsed < 60.0,
        f"recall@1={recalls[0]:.3f} .. recall@18={recalls[-1]:.3f}, monotone, strict lift, {elapsed:.1f}s",
    )


def test_criterion_9_pipeline_beats_tfidf_knn_baseline(standard_run):
    result, elapsed = standard_run
    out = result.out_dir
    maps, _ = load_split_neighbor_maps(out / "neighbors.bin")
    truth = restrict_pairs(
        set(read_pairs_file(out / "truth_pairs.csv")),
        read_splits_file(out / "splits.tsv")["heldout"],
    )
    K = len(truth)
    baseline_pairs = tfidf_knn_baseline(maps["heldout"], k=18)[:K]
    baseline_f1 = score_submission(baseline_pairs, truth, min(K, len(baseline_pairs))).f1
    pipeline_f1 = result.f1_at_budget
    margin = pipeline_f1 - baseline_f1
    criterion(
        9,
        result.budget == K and margin >= 0.05 and elapsed < 900.0,
        f"standard instance (500 personas, seed 7): pipeline F1@{K}={pipeline_f1:.4f} vs "
        f"TF-IDF+KNN baseline {baseline_f1:.4f}, margin {margin:+.4f} >= 0.05, {elapsed:.0f}s",
    )


def test_criterion_10_inference_non_degradation(standard_run):
    started = time.time()
    result, _ = standard_run
    ablation = result.ablation
    full = ablation["full_selection"]
    topk = ablation["scorer_topk"]
    report_path = result.out_dir / "ablation.tsv"
    recorded = dict(
        line.split("\t") for line in report_path.read_text().splitlines()
    )
    records_both = {"full_selection", "scorer_topk"} <= set(recorded)
    elapsed = time.time() - started
    criterion(
        10,
        full >= topk - 0.005 and records_both and elapsed < 300.0,
        f"final_selection F1 {full:.4f} >= top-K F1 {topk:.4f} - 0.005; "
        f"ablation report records both, {elapsed:.1f}s",
    )


def test_criterion_11_pipeline_determinism(tmp_path):
    from clickmatch.cli import main
    from clickmatch.config import settings_to_text

    cfg = tmp_path / "det.ini"
    cfg.write_text(settings_to_text(small_settings(seed=21)))
    base = ["pipeline", "--deterministic", "--config", str(cfg)]
    assert main([*base, "--out", str(tmp_path / "one")]) == 0
    assert main([*base, "--out", str(tmp_path / "two")]) == 0
    sub1 = (tmp_path / "one" / "submission.csv").read_bytes()
    sub2 = (tmp_path / "two" / "submission.csv").read_bytes()
    criterion(
        11,
        sub2 == sub1 and len(sub1) > 0,
        f"two --deterministic runs produce byte-identical submissions ({len(sub1)} bytes)",
    )


def test_criterion_12_symmetric_kl_value():
    started = time.time()
    value = symmetric_kl(np.array([2, 2]), np.array([1, 3]))
    elapsed = time.time() - started
    criterion(
        12,
        abs(value - 0.2746) <= 5e-4 and elapsed < 1.0,
        f"symkl([2,2],[1,3]) = {value:.6f} nats (target 0.2746 +-5e-4), {elapsed:.3f}s",
    )
