"""Pipeline configuration: one JSON file with a section per stage."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .corpus import DEFAULT_MAX_DOC_FRACTION, DEFAULT_MIN_DOC_COUNT
from .profiles import DEFAULT_MIN_ARTICLES_SCORE, DEFAULT_MIN_PAGEVIEWS_TRAIN, DEFAULT_WINDOW_DAYS
from .topics import DEFAULT_BETA, DEFAULT_ITERATIONS, DEFAULT_NUM_TOPICS

VARIANTS = ("general", "hot_topics", "site_specific")
VARIANT_ALIASES = {"general": "general", "hot": "hot_topics", "hot_topics": "hot_topics",
                   "site": "site_specific", "site_specific": "site_specific"}


class ConfigError(ValueError):
    pass


@dataclass
class PathsConfig:
    articles: str | None = None
    events: str | None = None
    stopwords: str | None = None
    lemmas: str | None = None
    artifacts: str = "artifacts"


@dataclass
class TopicsConfig:
    num_topics: int = DEFAULT_NUM_TOPICS
    alpha: float | None = None
    beta: float = DEFAULT_BETA
    iterations: int = DEFAULT_ITERATIONS
    seed: int = 0
    min_doc_count: int = DEFAULT_MIN_DOC_COUNT
    max_doc_fraction: float = DEFAULT_MAX_DOC_FRACTION


@dataclass
class ProfilesConfig:
    window_days: int = DEFAULT_WINDOW_DAYS
    min_articles_score: int = DEFAULT_MIN_ARTICLES_SCORE
    min_pageviews_train: int = DEFAULT_MIN_PAGEVIEWS_TRAIN
    as_of: str | None = None  # last day (UTC, YYYY-MM-DD) inside the window


@dataclass
class SegmentsConfig:
    k: int = 10
    variant: str = "general"
    section: str | None = None
    seed: int = 0
    inner_iters: int = 20
    n_init: int = 3


@dataclass
class BanditConfig:
    window: float = 3600.0
    epsilon: float = 0.1
    ttl: float = 30.0
    list_len: int = 5
    item_lifetime_days: float = 2.0
    seed: int = 0


@dataclass
class SimulationConfig:
    scenario: str | None = None
    windows: list[float] = field(default_factory=lambda: [10, 25, 50, 100, 200, 400])
    epsilons: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.2])
    repetitions: int = 20
    seed: int = 0
    ab_variants: list[dict] = field(default_factory=lambda: [
        {"name": "random", "policy": "random"},
        {"name": "global", "policy": "global", "window": 200, "epsilon": 0.1},
        {"name": "contextual", "policy": "contextual", "window": 200, "epsilon": 0.1},
    ])
    trials_per_day: int = 100


@dataclass
class InsightsConfig:
    history_days: int = 7
    top_n: int = 5


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    topics: TopicsConfig = field(default_factory=TopicsConfig)
    profiles: ProfilesConfig = field(default_factory=ProfilesConfig)
    segments: SegmentsConfig = field(default_factory=SegmentsConfig)
    bandit: BanditConfig = field(default_factory=BanditConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    insights: InsightsConfig = field(default_factory=InsightsConfig)

    def validate(self) -> "PipelineConfig":
        t, p, s, b = self.topics, self.profiles, self.segments, self.bandit
        checks = [
            (t.num_topics >= 2, "topics.num_topics must be >= 2"),
            (t.iterations >= 1, "topics.iterations must be >= 1"),
            (t.beta > 0 and (t.alpha is None or t.alpha > 0), "topics.alpha/beta must be positive"),
            (t.min_doc_count >= 1, "topics.min_doc_count must be >= 1"),
            (0 < t.max_doc_fraction <= 1, "topics.max_doc_fraction must be in (0, 1]"),
            (p.window_days >= 1, "profiles.window_days must be >= 1"),
            (p.min_articles_score >= 1 and p.min_pageviews_train >= 1, "profiles thresholds must be >= 1"),
            (s.k >= 1, "segments.k must be >= 1"),
            (s.variant in VARIANTS, f"segments.variant must be one of {VARIANTS}"),
            (s.variant != "site_specific" or bool(s.section), "site_specific variant needs segments.section"),
            (0 <= b.epsilon <= 1, "bandit.epsilon must be in [0, 1]"),
            (b.window > 0 and b.ttl >= 0 and b.list_len >= 1, "bandit window/ttl/list_len out of range"),
            (self.simulation.repetitions >= 1, "simulation.repetitions must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _section(cls, data: dict | None, name: str):
    data = dict(data or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict[str, Any], base_dir: Path | None = None) -> PipelineConfig:
    sections = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}
    unknown = set(data) - set(sections)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    classes = {"paths": PathsConfig, "topics": TopicsConfig, "profiles": ProfilesConfig,
               "segments": SegmentsConfig, "bandit": BanditConfig, "simulation": SimulationConfig,
               "insights": InsightsConfig}
    cfg = PipelineConfig(**{name: _section(cls, data.get(name), name) for name, cls in classes.items()})
    cfg.segments.variant = VARIANT_ALIASES.get(cfg.segments.variant, cfg.segments.variant)
    if base_dir is not None:
        # relative paths are resolved against the config file's directory
        for key in ("articles", "events", "stopwords", "lemmas", "artifacts"):
            val = getattr(cfg.paths, key)
            if val is not None and not Path(val).is_absolute():
                setattr(cfg.paths, key, str(base_dir / val))
        if cfg.simulation.scenario and not Path(cfg.simulation.scenario).is_absolute():
            cfg.simulation.scenario = str(base_dir / cfg.simulation.scenario)
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    return config_from_dict(data, base_dir=path.parent)
