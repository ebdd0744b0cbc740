import numpy as np
import pytest

from clickmatch.embedding import (
    EmbedConfig,
    embedding_ensemble,
    load_embeddings,
    save_embeddings,
    train_doc_embeddings,
)
from clickmatch.events import read_events_file
from clickmatch.synth import SynthConfig, generate_dataset


def fast_cfg(**overrides) -> EmbedConfig:
    defaults = dict(dim=16, epochs=10, min_count=2, seed=7)
    defaults.update(overrides)
    return EmbedConfig(**defaults)


def planted_docs(rng: np.random.Generator, tokens_per_doc: int = 200):
    """u1,u2 share one topic, u3 draws from a disjoint one."""
    topic_a = [f"a{i}" for i in range(20)]
    topic_b = [f"b{i}" for i in range(20)]
    return {
        "u1": list(rng.choice(topic_a, size=tokens_per_doc)),
        "u2": list(rng.choice(topic_a, size=tokens_per_doc)),
        "u3": list(rng.choice(topic_b, size=tokens_per_doc)),
    }


def cosine(u, v):
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


class TestTrainDocEmbeddings:
    def test_vector_shapes(self):
        docs = planted_docs(np.random.default_rng(0), 50)
        model = train_doc_embeddings(docs, fast_cfg())
        assert set(model.users) == set(docs)
        for vec in model.user_vectors.values():
            assert vec.shape == (16,)

    def test_separation_statistical_oracle(self):
        # same-topic users end closer than cross-topic ones in >= 9 of 10 seeds
        wins = 0
        for seed in range(10):
            docs = planted_docs(np.random.default_rng(seed))
            model = train_doc_embeddings(docs, fast_cfg(seed=seed))
            uv = model.user_vectors
            if cosine(uv["u1"], uv["u2"]) > cosine(uv["u1"], uv["u3"]):
                wins += 1
        assert wins >= 9

    def test_loss_decreases_from_first_to_last_epoch(self):
        docs = planted_docs(np.random.default_rng(3))
        model = train_doc_embeddings(docs, fast_cfg(epochs=12, seed=3))
        assert model.epoch_losses[0] > model.epoch_losses[-1]

    def test_bit_reproducible(self):
        docs = planted_docs(np.random.default_rng(5), 80)
        m1 = train_doc_embeddings(docs, fast_cfg(seed=11))
        m2 = train_doc_embeddings(docs, fast_cfg(seed=11))
        np.testing.assert_array_equal(m1.matrix, m2.matrix)
        np.testing.assert_array_equal(m1.token_matrix, m2.token_matrix)
        np.testing.assert_array_equal(m1.epoch_losses, m2.epoch_losses)

    def test_seed_changes_vectors(self):
        docs = planted_docs(np.random.default_rng(5), 80)
        m1 = train_doc_embeddings(docs, fast_cfg(seed=1))
        m2 = train_doc_embeddings(docs, fast_cfg(seed=2))
        assert not np.array_equal(m1.matrix, m2.matrix)

    def test_pruned_tokens_receive_no_vectors(self):
        docs = {"u1": ["common"] * 10 + ["rare"], "u2": ["common"] * 10}
        model = train_doc_embeddings(docs, fast_cfg(min_count=2))
        assert "rare" not in model.token_vectors
        assert "common" in model.token_vectors

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError, match="corpus"):
            train_doc_embeddings({}, fast_cfg())
        with pytest.raises(ValueError, match="degenerate|corpus"):
            train_doc_embeddings({"u1": ["once"]}, fast_cfg(min_count=5))

    def test_user_with_fully_pruned_doc_gets_zero_vector(self):
        docs = {"u1": ["common"] * 10, "u2": ["common"] * 10, "u3": ["solo"]}
        model = train_doc_embeddings(docs, fast_cfg(min_count=2))
        assert np.all(model.user_vectors["u3"] == 0.0)
        assert np.any(model.user_vectors["u1"] != 0.0)

    def test_dim_validation(self):
        with pytest.raises(ValueError):
            EmbedConfig(dim=1)
        with pytest.raises(ValueError):
            EmbedConfig(initial_lr=0.001, final_lr=0.01)


@pytest.fixture(scope="module")
def synth_logs(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    cfg = SynthConfig(
        n_personas=6,
        devices_min=2,
        devices_max=2,
        events_min=40,
        events_max=60,
        n_domains=6,
        paths_per_domain=3,
        title_fraction=0.5,
        seed=9,
    )
    dataset = generate_dataset(cfg, out)
    return read_events_file(dataset.events_path)


class TestEmbeddingEnsemble:
    def test_five_models_with_expected_tags(self, synth_logs):
        models = embedding_ensemble(synth_logs, fast_cfg(epochs=3))
        assert [m.level_tag for m in models] == ["h0", "h1", "h2", "h3", "title"]

    def test_every_user_has_a_vector_in_every_model(self, synth_logs):
        models = embedding_ensemble(synth_logs, fast_cfg(epochs=3))
        users = {l.user_id for l in synth_logs}
        for m in models:
            assert set(m.users) == users

    def test_user_without_titles_gets_zero_title_vector(self, synth_logs):
        from clickmatch.events import build_title_documents

        models = embedding_ensemble(synth_logs, fast_cfg(epochs=3))
        title_model = models[-1]
        title_docs = build_title_documents(synth_logs)
        for user, words in title_docs.items():
            if not words:
                assert np.all(title_model.user_vectors[user] == 0.0)

    def test_all_title_less_corpus_yields_zero_model(self, synth_logs):
        stripped = []
        from clickmatch.events import Event, UserLog

        for log in synth_logs:
            events = [
                Event(e.user_id, e.timestamp, e.domain, e.path_segments, None)
                for e in log.events
            ]
            stripped.append(UserLog(log.user_id, events))
        models = embedding_ensemble(stripped, fast_cfg(epochs=2))
        title_model = models[-1]
        assert np.all(title_model.matrix == 0.0)

    def test_roundtrip_serialization_exact(self, synth_logs, tmp_path):
        models = embedding_ensemble(synth_logs, fast_cfg(epochs=2))
        path = tmp_path / "emb.bin"
        save_embeddings(path, models)
        loaded = load_embeddings(path)
        for m, l in zip(models, loaded):
            assert l.level_tag == m.level_tag
            assert l.users == m.users
            assert l.tokens == m.tokens
            assert l.config == m.config
            np.testing.assert_array_equal(l.matrix, m.matrix)
            np.testing.assert_array_equal(l.token_matrix, m.token_matrix)
