"""Synthetic clickstreams with planted multi-device personas.

Each persona owns a sharp topic distribution over a two-level URL universe
(domain/seg1/seg2, so hierarchy tokens saturate at level 2) and an
hourly/weekly activity habit; all of the persona's devices sample URLs from a
noise-blended copy of that topic and timestamps from the shared habit. Ground
truth is every within-persona device pair. Output files use the exact ingest
formats, and a manifest records the full configuration.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from itertools import combinations
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .events import split_users, write_splits_file
from .pairs import make_pair, write_pairs_file

# Monday 1970-01-05 00:00 UTC; keeps weekly habit index 0 = Monday.
_BASE_EPOCH = 4 * 86400


@dataclass(frozen=True)
class SynthConfig:
    n_personas: int = 120
    devices_min: int = 2
    devices_max: int = 4
    events_min: int = 80
    events_max: int = 160
    n_domains: int = 20
    paths_per_domain: int = 5
    title_vocab: int = 150
    title_fraction: float = 0.3
    topic_concentration: float = 3.0
    cross_device_noise: float = 0.5
    time_habit_strength: float = 0.6
    n_weeks: int = 4
    split_fractions: tuple[float, float] = (0.35, 0.35)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_personas < 1:
            raise ValueError("n_personas must be >= 1")
        if not (1 <= self.devices_min <= self.devices_max <= 5):
            raise ValueError(
                f"devices per persona must satisfy 1 <= min <= max <= 5, "
                f"got [{self.devices_min}, {self.devices_max}]"
            )
        if not (1 <= self.events_min <= self.events_max):
            raise ValueError("events per device range is empty")
        if min(self.n_domains, self.paths_per_domain, self.title_vocab, self.n_weeks) < 1:
            raise ValueError("counts must be >= 1")
        if not (0.0 <= self.cross_device_noise <= 1.0):
            raise ValueError("cross_device_noise must be in [0, 1]")
        if not (0.0 <= self.time_habit_strength <= 1.0):
            raise ValueError("time_habit_strength must be in [0, 1]")
        if not (0.0 <= self.title_fraction <= 1.0):
            raise ValueError("title_fraction must be in [0, 1]")
        if self.topic_concentration <= 0:
            raise ValueError("topic_concentration must be positive")


class SynthDataset(NamedTuple):
    events_path: Path
    truth_path: Path
    splits_path: Path
    manifest_path: Path
    n_users: int
    n_events: int
    n_truth_pairs: int


def _habit(rng: np.random.Generator, bins: int, sigma: float, strength: float) -> np.ndarray:
    center = rng.integers(0, bins)
    offsets = np.arange(bins)
    dist = np.minimum(np.abs(offsets - center), bins - np.abs(offsets - center))
    peak = np.exp(-0.5 * (dist / sigma) ** 2)
    peak /= peak.sum()
    return strength * peak + (1.0 - strength) / bins


def generate_dataset(cfg: SynthConfig, out_dir: str | Path) -> SynthDataset:
    """Write events/truth/splits files plus a manifest into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)

    urls = [
        f"d{d:03d}.example/s{i:02d}/t{j:02d}"
        for d in range(cfg.n_domains)
        for i in range(cfg.paths_per_domain)
        for j in range(cfg.paths_per_domain)
    ]
    universe = len(urls)
    titled = rng.random(universe) < cfg.title_fraction
    title_words = [
        " ".join(f"w{t:04d}" for t in sorted(rng.choice(cfg.title_vocab, size=3, replace=False)))
        for _ in range(universe)
    ]
    background = rng.dirichlet(np.ones(universe))
    # smaller Dirichlet concentration => sparser, sharper persona topics
    alpha = np.full(universe, 1.0 / cfg.topic_concentration)

    events_path = out / "events.tsv"
    truth_pairs = []
    n_users = 0
    n_events = 0
    with open(events_path, "w", encoding="utf-8") as fh:
        for persona in range(cfg.n_personas):
            topic = rng.dirichlet(alpha)
            mix = (1.0 - cfg.cross_device_noise) * topic + cfg.cross_device_noise * background
            hourly = _habit(rng, 24, sigma=2.5, strength=cfg.time_habit_strength)
            weekly = _habit(rng, 7, sigma=1.0, strength=cfg.time_habit_strength)
            n_devices = int(rng.integers(cfg.devices_min, cfg.devices_max + 1))
            device_ids = [f"p{persona:05d}d{d}" for d in range(n_devices)]
            truth_pairs.extend(make_pair(a, b) for a, b in combinations(device_ids, 2))
            n_users += n_devices
            for device in device_ids:
                count = int(rng.integers(cfg.events_min, cfg.events_max + 1))
                url_idx = rng.choice(universe, size=count, p=mix)
                weeks = rng.integers(0, cfg.n_weeks, size=count)
                dows = rng.choice(7, size=count, p=weekly)
                hours = rng.choice(24, size=count, p=hourly)
                seconds = rng.integers(0, 3600, size=count)
                stamps = _BASE_EPOCH + ((weeks * 7 + dows) * 24 + hours) * 3600 + seconds
                order = np.argsort(stamps, kind="stable")
                for i in order:
                    u = int(url_idx[i])
                    line = f"{device}\t{int(stamps[i])}\t{urls[u]}"
                    if titled[u]:
                        line += f"\t{title_words[u]}"
                    fh.write(line + "\n")
                n_events += count

    truth_pairs.sort()
    truth_path = out / "truth_pairs.csv"
    write_pairs_file(truth_path, truth_pairs)

    truth_users = sorted({u for p in truth_pairs for u in p})
    splits_path = out / "splits.tsv"
    if truth_users:
        scorer, voter, heldout = split_users(truth_users, cfg.split_fractions, cfg.seed)
    else:
        scorer, voter, heldout = [], [], []
    write_splits_file(splits_path, {"scorer": scorer, "voter": voter, "heldout": heldout})

    manifest_path = out / "synth_manifest.json"
    manifest = {
        "config": asdict(cfg),
        "n_users": n_users,
        "n_events": n_events,
        "n_truth_pairs": len(truth_pairs),
        "url_universe": universe,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")
    return SynthDataset(
        events_path, truth_path, splits_path, manifest_path, n_users, n_events, len(truth_pairs)
    )
