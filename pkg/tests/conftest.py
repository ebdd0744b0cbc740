import numpy as np
import pytest
from scipy.stats import rankdata

from clickmatch.config import Settings


def auc_score(labels: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney AUC with average ranks for ties (test-side oracle)."""
    labels = np.asarray(labels)
    scores = np.asarray(scores)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(scores)
    return (ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def small_settings(seed: int = 0) -> Settings:
    """Desk-top-of-desk settings: a pipeline run in a few seconds."""
    from dataclasses import replace

    s = Settings().reseed(seed)
    return replace(
        s,
        synth=replace(
            s.synth,
            n_personas=60,
            devices_min=2,
            devices_max=4,
            events_min=40,
            events_max=70,
            n_domains=12,
            paths_per_domain=4,
            topic_concentration=10.0,
            cross_device_noise=0.15,
            title_fraction=0.5,
            split_fractions=(0.34, 0.33),
            seed=seed,
        ),
        embed=replace(s.embed, dim=16, epochs=8, min_count=3, seed=seed + 100),
        scorer=replace(
            s.scorer,
            params=replace(s.scorer.params, n_trees=80, min_leaf=5, seed=seed + 200),
        ),
        voter=replace(
            s.voter,
            params=replace(s.voter.params, n_trees=50, min_leaf=5, seed=seed + 300),
        ),
    )


@pytest.fixture(scope="session")
def small_pipeline(tmp_path_factory):
    """One shared small end-to-end pipeline run."""
    from clickmatch.pipeline import run_pipeline

    out = tmp_path_factory.mktemp("pipe")
    result = run_pipeline(small_settings(seed=3), out)
    return result
