import pytest

from clickmatch.config import Settings, full_scale_profile, load_settings, settings_to_text


class TestDefaults:
    def test_desk_defaults(self):
        s = Settings()
        assert s.knn.k == 18
        assert s.embed.dim == 32
        assert s.scorer.params.n_trees == 200
        assert s.infer.vote_threshold == 0.5
        assert s.infer.size_cap == 5

    def test_full_scale_profile(self):
        s = full_scale_profile()
        assert s.embed.dim == 300
        assert s.scorer.params.n_trees == 3500
        assert s.knn.k == 18
        assert s.infer.budget == 120000
        # the 45k / 80k inference slices derive from the fractions
        assert round(s.infer.sup_frac * s.infer.budget) == 45000
        assert round(s.infer.unsup_frac * s.infer.budget) == 80000


class TestLoadSettings:
    def test_none_gives_defaults(self):
        assert load_settings(None) == Settings()

    def test_partial_override(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text(
            "[knn]\nk = 7\n\n[scorer]\nn_trees = 33\nneg_ratio = 2\n\n"
            "[embed]\ndim = 8\n\n[synth]\nn_personas = 5\nsplit_fractions = 0.5,0.25\n"
        )
        s = load_settings(cfg)
        assert s.knn.k == 7
        assert s.scorer.params.n_trees == 33
        assert s.scorer.neg_ratio == 2
        assert s.embed.dim == 8
        assert s.synth.n_personas == 5
        assert s.synth.split_fractions == (0.5, 0.25)
        assert s.voter.params.n_trees == Settings().voter.params.n_trees  # untouched

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[knn]\nneighbours = 7\n")
        with pytest.raises(ValueError, match="unknown config key"):
            load_settings(cfg)

    def test_unknown_section_rejected(self, tmp_path):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[mystery]\nx = 1\n")
        with pytest.raises(ValueError, match="unknown config section"):
            load_settings(cfg)

    def test_bad_value_rejected(self, tmp_path):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[knn]\nk = many\n")
        with pytest.raises(ValueError, match="cannot parse"):
            load_settings(cfg)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="not found"):
            load_settings(tmp_path / "nope.ini")

    def test_comments_allowed(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[knn]\nk = 9  # tighter\n")
        assert load_settings(cfg).knn.k == 9


def test_settings_text_roundtrip(tmp_path):
    s = full_scale_profile()
    path = tmp_path / "dump.ini"
    path.write_text(settings_to_text(s))
    assert load_settings(path) == s


def test_reseed_derives_component_seeds():
    s = Settings().reseed(42)
    assert s.synth.seed == 42
    assert s.embed.seed == 142
    assert s.scorer.params.seed == 242
    assert s.voter.params.seed == 342
    assert Settings().reseed(42) == s
