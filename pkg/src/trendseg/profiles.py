"""User interest profiles: mean article topic mixture, standardized per topic."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Event
from .errors import DataError

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_DAYS = 14
DEFAULT_MIN_ARTICLES_SCORE = 2
DEFAULT_MIN_PAGEVIEWS_TRAIN = 5
DAY_SECONDS = 86400
ZERO_VARIANCE_TOL = 1e-12


@dataclass
class UserHistory:
    user_id: str
    article_ids: frozenset[str]
    window: tuple[float, float]
    pageviews: int = 0


@dataclass
class UserProfile:
    user_id: str
    theta: np.ndarray
    raw_theta: np.ndarray
    pageviews: int = 0


@dataclass
class Standardization:
    """Per-topic population mean/std; zero-variance topics are flagged."""

    mean: np.ndarray
    std: np.ndarray
    degenerate: list[int] = field(default_factory=list)

    @classmethod
    def fit(cls, raw: np.ndarray) -> "Standardization":
        raw = np.asarray(raw, dtype=np.float64)
        mean = raw.mean(axis=0)
        std = np.sqrt(((raw - mean) ** 2).mean(axis=0))
        # a constant column leaves rounding residue in the std
        std[std <= ZERO_VARIANCE_TOL * np.maximum(1.0, np.abs(mean))] = 0.0
        degenerate = [int(i) for i in np.flatnonzero(std == 0)]
        if degenerate:
            logger.warning("zero-variance topic dimensions: %s", degenerate)
        return cls(mean, std, degenerate)

    def transform(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=np.float64)
        safe = np.where(self.std == 0, 1.0, self.std)
        out = (raw - self.mean) / safe
        out[..., self.std == 0] = 0.0
        return out

    def to_json(self) -> dict:
        return {"dimensions": [{"mean": float(m), "std": float(s)} for m, s in zip(self.mean, self.std)],
                "degenerate": self.degenerate}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Standardization":
        dims = obj["dimensions"]
        return cls(np.array([d["mean"] for d in dims]), np.array([d["std"] for d in dims]),
                   list(obj.get("degenerate", [])))


def build_histories(events: Iterable[Event], window: tuple[float, float],
                    min_articles: int = DEFAULT_MIN_ARTICLES_SCORE) -> list[UserHistory]:
    """Group in-window events (``start <= ts < end``) per user.

    Users with fewer than ``min_articles`` distinct articles are left out.
    Output is sorted by user id.
    """
    start, end = window
    if not start < end:
        raise ValueError("window start must precede end")
    seen: dict[str, set[str]] = defaultdict(set)
    views: dict[str, int] = defaultdict(int)
    for ev in events:
        if start <= ev.timestamp < end:
            seen[ev.user_id].add(ev.article_id)
            views[ev.user_id] += 1
    return [UserHistory(u, frozenset(arts), (start, end), views[u])
            for u, arts in sorted(seen.items()) if len(arts) >= min_articles]


def build_raw_profile(history: UserHistory, doc_topics: Mapping[str, np.ndarray]) -> np.ndarray | None:
    """Mean topic mixture over the distinct articles that have one, else None."""
    vecs = [doc_topics[a] for a in sorted(history.article_ids) if a in doc_topics]
    if not vecs:
        return None
    return np.mean(np.asarray(vecs, dtype=np.float64), axis=0)


def standardize_profiles(user_ids: Sequence[str], raw: Sequence[np.ndarray],
                         stats: Standardization | None = None,
                         pageviews: Sequence[int] | None = None) -> tuple[list[UserProfile], Standardization]:
    """Column-wise z-score of raw profiles across the user population.

    Pass ``stats`` to reuse statistics fitted on another population.
    """
    if len(user_ids) != len(raw):
        raise ValueError("user_ids and raw profiles differ in length")
    matrix = np.asarray(raw, dtype=np.float64)
    if stats is None:
        if len(raw) < 2:
            raise DataError("standardization needs at least 2 users")
        stats = Standardization.fit(matrix)
    z = stats.transform(matrix)
    pageviews = pageviews if pageviews is not None else [0] * len(user_ids)
    profiles = [UserProfile(u, z[i], matrix[i], int(pageviews[i])) for i, u in enumerate(user_ids)]
    return profiles, stats


def build_profiles(events: Iterable[Event], doc_topics: Mapping[str, np.ndarray], window: tuple[float, float],
                   min_articles: int = DEFAULT_MIN_ARTICLES_SCORE) -> tuple[list[UserProfile], Standardization, int]:
    """Histories, raw profiles and standardization in one pass.

    Returns ``(profiles, stats, unresolved)`` where ``unresolved`` counts users
    dropped because none of their articles has a topic mixture.
    """
    users, raws, views = [], [], []
    unresolved = 0
    for hist in build_histories(events, window, min_articles):
        raw = build_raw_profile(hist, doc_topics)
        if raw is None:
            unresolved += 1
            continue
        users.append(hist.user_id)
        raws.append(raw)
        views.append(hist.pageviews)
    if unresolved:
        logger.warning("%d users without any resolvable article dropped", unresolved)
    profiles, stats = standardize_profiles(users, raws, pageviews=views)
    return profiles, stats, unresolved


def trailing_window(end: float, days: int = DEFAULT_WINDOW_DAYS) -> tuple[float, float]:
    return end - days * DAY_SECONDS, end
