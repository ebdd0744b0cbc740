"""Flat `key = value` configuration with one section per pipeline stage.

Every numeric default of the package is overridable here. The desk-scale
defaults keep a full pipeline run in the minutes range;
:func:`full_scale_profile` switches to production-scale settings
(300-dimensional embeddings, 3500 trees, a 120k submission budget with
45k/80k inference slices).
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .embedding import EmbedConfig
from .features import DENSE_REPS, KL_EPSILON, SPARSE_REPS
from .gbdt import GbdtParams
from .synth import SynthConfig

ALL_SOURCES = (*SPARSE_REPS, *DENSE_REPS)


@dataclass(frozen=True)
class KnnSettings:
    k: int = 18
    recall_ks: tuple[int, ...] = (1, 2, 3, 5, 8, 12, 18)
    sources: tuple[str, ...] = ALL_SOURCES

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        unknown = set(self.sources) - set(ALL_SOURCES)
        if unknown:
            raise ValueError(f"unknown candidate sources: {sorted(unknown)}")


@dataclass(frozen=True)
class FeatureSettings:
    kl_epsilon: float = KL_EPSILON


@dataclass(frozen=True)
class ScorerSettings:
    params: GbdtParams = field(default_factory=GbdtParams)
    neg_ratio: int = 5


@dataclass(frozen=True)
class VoterSettings:
    params: GbdtParams = field(default_factory=lambda: GbdtParams(seed=1))
    # blind extension runs on the top (multiplier x |voter-split truth|) scored pairs
    top_multiplier: float = 1.0


@dataclass(frozen=True)
class InferSettings:
    vote_threshold: float = 0.5
    size_cap: int = 5
    sup_frac: float = 0.375
    unsup_frac: float = 2.0 / 3.0
    budget: int = 0  # 0: use the evaluated split's truth-pair count


@dataclass(frozen=True)
class EvalSettings:
    curve_fracs: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class Settings:
    synth: SynthConfig = field(default_factory=SynthConfig)
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    knn: KnnSettings = field(default_factory=KnnSettings)
    features: FeatureSettings = field(default_factory=FeatureSettings)
    scorer: ScorerSettings = field(default_factory=ScorerSettings)
    voter: VoterSettings = field(default_factory=VoterSettings)
    infer: InferSettings = field(default_factory=InferSettings)
    evaluate: EvalSettings = field(default_factory=EvalSettings)
    deterministic: bool = False

    def reseed(self, base_seed: int) -> "Settings":
        """Derive all component seeds from one base seed."""
        return replace(
            self,
            synth=replace(self.synth, seed=base_seed),
            embed=replace(self.embed, seed=base_seed + 100),
            scorer=replace(self.scorer, params=replace(self.scorer.params, seed=base_seed + 200)),
            voter=replace(self.voter, params=replace(self.voter.params, seed=base_seed + 300)),
        )


def full_scale_profile() -> Settings:
    """Full-scale profile: 300-dim embeddings, k=18, 3500 trees, 120k budget."""
    s = Settings()
    return replace(
        s,
        embed=replace(s.embed, dim=300),
        scorer=replace(s.scorer, params=replace(s.scorer.params, n_trees=3500)),
        voter=replace(s.voter, params=replace(s.voter.params, n_trees=3500)),
        infer=replace(s.infer, budget=120000),
    )


_SECTION_FIELDS = {
    "synth": SynthConfig,
    "embed": EmbedConfig,
    "knn": KnnSettings,
    "features": FeatureSettings,
    "infer": InferSettings,
    "evaluate": EvalSettings,
}


def _parse_value(raw: str, py_type: str, key: str):
    raw = raw.strip()
    try:
        if py_type == "int":
            return int(raw)
        if py_type == "float":
            return float(raw)
        if py_type == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if py_type == "int_tuple":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if py_type == "float_tuple":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if py_type == "str_tuple":
            return tuple(v.strip() for v in raw.split(",") if v.strip())
    except ValueError:
        raise ValueError(f"cannot parse {key} = {raw!r} as {py_type}") from None
    raise ValueError(f"unsupported config type {py_type} for {key}")


_FIELD_TYPES: dict[str, str] = {
    "synth.split_fractions": "float_tuple",
    "knn.recall_ks": "int_tuple",
    "knn.sources": "str_tuple",
    "evaluate.curve_fracs": "float_tuple",
}


def _type_name(section: str, name: str, default) -> str:
    override = _FIELD_TYPES.get(f"{section}.{name}")
    if override:
        return override
    if isinstance(default, bool):
        return "bool"
    if isinstance(default, int):
        return "int"
    if isinstance(default, float):
        return "float"
    raise ValueError(f"config key [{section}] {name} has unsupported type")


def load_settings(path: str | Path | None) -> Settings:
    """Read an INI-style config; missing keys keep their defaults, unknown
    sections or keys are errors."""
    settings = Settings()
    if path is None:
        return settings
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ValueError(f"config file not found: {path}")

    updates: dict[str, object] = {}
    for section in parser.sections():
        if section in _SECTION_FIELDS:
            cls = _SECTION_FIELDS[section]
            current = getattr(settings, section)
            known = {f.name: getattr(current, f.name) for f in fields(cls)}
            kwargs = {}
            for key, raw in parser.items(section):
                if key not in known:
                    raise ValueError(f"unknown config key [{section}] {key}")
                kwargs[key] = _parse_value(raw, _type_name(section, key, known[key]), key)
            updates[section] = replace(current, **kwargs)
        elif section in ("scorer", "voter"):
            current = getattr(settings, section)
            param_names = {f.name for f in fields(GbdtParams)}
            extra = {f.name for f in fields(type(current))} - {"params"}
            param_kwargs = {}
            other_kwargs = {}
            for key, raw in parser.items(section):
                if key in param_names:
                    default = getattr(current.params, key)
                    param_kwargs[key] = _parse_value(raw, _type_name(section, key, default), key)
                elif key in extra:
                    default = getattr(current, key)
                    other_kwargs[key] = _parse_value(raw, _type_name(section, key, default), key)
                else:
                    raise ValueError(f"unknown config key [{section}] {key}")
            updates[section] = replace(
                current, params=replace(current.params, **param_kwargs), **other_kwargs
            )
        else:
            raise ValueError(f"unknown config section [{section}]")
    return replace(settings, **updates)


def settings_to_text(settings: Settings) -> str:
    """Render settings as a config file that round-trips through load_settings."""
    lines: list[str] = []

    def emit(section: str, obj, skip: tuple[str, ...] = ()) -> None:
        lines.append(f"[{section}]")
        for f in fields(obj):
            if f.name in skip:
                continue
            value = getattr(obj, f.name)
            if isinstance(value, tuple):
                lines.append(f"{f.name} = {','.join(str(v) for v in value)}")
            else:
                lines.append(f"{f.name} = {value}")
        lines.append("")

    emit("synth", settings.synth)
    emit("embed", settings.embed)
    emit("knn", settings.knn)
    emit("features", settings.features)
    lines.append("[scorer]")
    for f in fields(GbdtParams):
        lines.append(f"{f.name} = {getattr(settings.scorer.params, f.name)}")
    lines.append(f"neg_ratio = {settings.scorer.neg_ratio}")
    lines.append("")
    lines.append("[voter]")
    for f in fields(GbdtParams):
        lines.append(f"{f.name} = {getattr(settings.voter.params, f.name)}")
    lines.append(f"top_multiplier = {settings.voter.top_multiplier}")
    lines.append("")
    emit("infer", settings.infer)
    emit("evaluate", settings.evaluate)
    return "\n".join(lines)
