"""Publishing insights for segments that under-perform on a given day."""

from __future__ import annotations

import datetime as dt
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .bandit import reference_kpi
from .corpus import Article, Event
from .topics import TopicDescription, utc_day

logger = logging.getLogger(__name__)

DEFAULT_HISTORY_DAYS = 7


@dataclass(frozen=True)
class ScoredEvent:
    user_id: str
    article_id: str
    timestamp: float
    reward: float


@dataclass(frozen=True)
class SegmentPerformance:
    segment: int
    p_bar: float
    member_count: int


@dataclass(frozen=True)
class ArticleScore:
    article_id: str
    score: float
    raw: bool = False
    title: str | None = None


@dataclass
class Insight:
    segment: int
    description: list[TopicDescription]
    cardinality: int
    top_articles: list[ArticleScore]
    day: dt.date
    p_bar: float | None = None
    threshold: float | None = None


def score_events(events: Iterable[Event], reward_fn: Callable[[Mapping], float] = reference_kpi) -> list[ScoredEvent]:
    return [ScoredEvent(e.user_id, e.article_id, e.timestamp, float(reward_fn(e.extra))) for e in events]


def segment_performance(scored: Iterable[ScoredEvent], assignments: Mapping[str, int],
                        day: dt.date) -> list[SegmentPerformance]:
    """Mean over a segment's active users of each user's summed reward that day.

    Unassigned and cold-start (segment 0) users are ignored.
    """
    per_user: dict[str, float] = defaultdict(float)
    for ev in scored:
        if utc_day(ev.timestamp) == day:
            per_user[ev.user_id] += ev.reward
    members: dict[int, list[float]] = defaultdict(list)
    for user in sorted(per_user):
        seg = assignments.get(user, 0)
        if seg > 0:
            members[seg].append(per_user[user])
    segments = set(assignments.values()) - {0}
    idle = sorted(segments - set(members))
    if idle:
        logger.warning("segments without active members on %s omitted: %s", day, idle)
    return [SegmentPerformance(k, sum(v) / len(v), len(v)) for k, v in sorted(members.items())]


def unsatisfied_threshold(perfs: Sequence[SegmentPerformance]) -> float:
    values = [p.p_bar for p in perfs]
    mean = sum(values) / len(values)
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
    return mean - std


def detect_unsatisfied(perfs: Sequence[SegmentPerformance]) -> set[int]:
    """Segments whose mean performance is below (mean - population std) of all segment means."""
    if len(perfs) < 2:
        raise ValueError("need at least 2 segments to detect unsatisfied ones")
    threshold = unsatisfied_threshold(perfs)
    return {p.segment for p in perfs if p.p_bar < threshold}


def article_performance(scored: Iterable[ScoredEvent], assignments: Mapping[str, int],
                        window: tuple[float, float]) -> dict[tuple[int, str], float]:
    """Summed reward of each article within each segment over ``[start, end)``."""
    start, end = window
    out: dict[tuple[int, str], float] = defaultdict(float)
    for ev in scored:
        seg = assignments.get(ev.user_id, 0)
        if seg > 0 and start <= ev.timestamp < end:
            out[(seg, ev.article_id)] += ev.reward
    return dict(out)


def top_articles_for_segment(perf: Mapping[tuple[int, str], float], k: int, top_n: int = 5) -> list[ArticleScore]:
    """Rank articles for segment ``k`` by their performance standardized across segments.

    Articles scored in a single segment cannot be standardized; they keep their
    raw score, are marked ``raw`` and rank after the standardized ones.
    """
    by_article: dict[str, dict[int, float]] = defaultdict(dict)
    for (seg, art), p in perf.items():
        by_article[art][seg] = p
    scored, raw = [], []
    for art, per_seg in by_article.items():
        if k not in per_seg:
            continue
        if len(per_seg) < 2:
            raw.append(ArticleScore(art, per_seg[k], raw=True))
            continue
        vals = list(per_seg.values())
        mean = sum(vals) / len(vals)
        std = math.sqrt(sum((v - mean) ** 2 for v in vals) / len(vals))
        scored.append(ArticleScore(art, (per_seg[k] - mean) / std if std > 0 else 0.0))
    if not scored and not raw:
        logger.warning("segment %d has no scored articles", k)
        return []
    key = lambda a: (-a.score, a.article_id)
    return (sorted(scored, key=key) + sorted(raw, key=key))[:top_n]


def build_insights(scored: Sequence[ScoredEvent], assignments: Mapping[str, int],
                   descriptions: Mapping[int, list[TopicDescription]], sizes: Mapping[int, int],
                   articles: Mapping[str, Article], day: dt.date, history_days: int = DEFAULT_HISTORY_DAYS,
                   top_n: int = 5) -> list[Insight]:
    """Insights for every unsatisfied segment on ``day``.

    Past favourites come from the ``history_days`` days before ``day``.
    """
    perfs = segment_performance(scored, assignments, day)
    if len(perfs) < 2:
        logger.warning("fewer than 2 active segments on %s; no insights", day)
        return []
    threshold = unsatisfied_threshold(perfs)
    unsatisfied = detect_unsatisfied(perfs)
    day_start = dt.datetime.combine(day, dt.time(), tzinfo=dt.timezone.utc).timestamp()
    perf = article_performance(scored, assignments, (day_start - history_days * 86400, day_start))
    by_segment = {p.segment: p for p in perfs}
    out = []
    for k in sorted(unsatisfied):
        tops = [ArticleScore(a.article_id, a.score, a.raw,
                             articles[a.article_id].display_title if a.article_id in articles else a.article_id)
                for a in top_articles_for_segment(perf, k, top_n)]
        out.append(Insight(k, list(descriptions.get(k, [])), int(sizes.get(k, 0)), tops, day,
                           by_segment[k].p_bar, threshold))
    return out


def insight_json(insight: Insight) -> dict:
    return {
        "segment": insight.segment,
        "day": insight.day.isoformat(),
        "cardinality": insight.cardinality,
        "topics": [list(d.top_words) for d in insight.description],
        "top_articles": [{"id": a.article_id, "title": a.title or a.article_id, "score": a.score, "raw": a.raw}
                         for a in insight.top_articles],
    }


def render_insight(insight: Insight) -> tuple[str, dict]:
    """Human-readable block plus its JSON twin."""
    lines = [f"[{insight.day.isoformat()}] Segment {insight.segment} is unsatisfied "
             f"({insight.cardinality} users)"]
    if insight.p_bar is not None and insight.threshold is not None:
        lines.append(f"Mean daily performance {insight.p_bar:.3f} is below the threshold {insight.threshold:.3f}.")
    lines.append("Topics this segment reads that the article pool may be missing:")
    if insight.description:
        lines.extend(f"  - {d}" for d in insight.description)
    else:
        lines.append("  (no distinctive topics)")
    lines.append("Articles this segment liked in the past:")
    if insight.top_articles:
        for i, a in enumerate(insight.top_articles, 1):
            label = "raw score" if a.raw else "score"
            lines.append(f"  {i}. {a.title or a.article_id} ({label} {a.score:.3f})")
    else:
        lines.append("  (no scored articles)")
    return "\n".join(lines) + "\n", insight_json(insight)


def render_report(insights: Sequence[Insight], day: dt.date) -> tuple[str, str]:
    """Text and JSON documents for one day's report."""
    if insights:
        text = "\n".join(render_insight(i)[0] for i in insights)
    else:
        text = f"[{day.isoformat()}] No unsatisfied segments.\n"
    doc = {"day": day.isoformat(), "insights": [insight_json(i) for i in insights]}
    return text, json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
