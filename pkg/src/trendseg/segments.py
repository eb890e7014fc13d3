"""Bisecting k-means user segmentation and the three variant pipelines."""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .config import PipelineConfig
from .corpus import Article, Event, build_corpus
from .errors import DataError
from .profiles import DAY_SECONDS, Standardization, UserProfile, build_profiles
from .topics import DocTopics, TopicDescription, TopicModel, describe_topic, train_lda

logger = logging.getLogger(__name__)

COLD_START_SEGMENT = 0
SPLIT_RETRIES = 3


@dataclass
class SplitStep:
    """One bisection: which cluster was split and the cluster sizes at selection time."""

    parent: int
    children: tuple[int, int]
    sizes: dict[int, int]


@dataclass
class Segmentation:
    k: int
    centroids: np.ndarray
    assignments: dict[str, int]
    seg_theta_bar: np.ndarray
    variant: str = "general"
    section: str | None = None
    descriptions: dict[int, list[TopicDescription]] = field(default_factory=dict)
    split_trace: list[SplitStep] = field(default_factory=list)
    stats: Standardization | None = None

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def members(self, k: int) -> list[str]:
        return sorted(u for u, s in self.assignments.items() if s == k)

    def sizes(self) -> dict[int, int]:
        out = {k: 0 for k in range(1, self.k + 1)}
        for s in self.assignments.values():
            out[s] += 1
        return out

    def to_json(self) -> dict:
        return {
            "K": self.k,
            "variant": self.variant,
            "section": self.section,
            "centroids": self.centroids.tolist(),
            "seg_theta_bar": self.seg_theta_bar.tolist(),
            "sizes": {str(k): v for k, v in self.sizes().items()},
            "descriptions": {str(k): [list(d.top_words) for d in descs]
                             for k, descs in sorted(self.descriptions.items())},
            "description_topics": {str(k): [d.topic_index for d in descs]
                                   for k, descs in sorted(self.descriptions.items())},
            "split_trace": [{"parent": s.parent + 1, "children": [c + 1 for c in s.children],
                             "sizes": {str(c + 1): n for c, n in sorted(s.sizes.items())}}
                            for s in self.split_trace],
            "standardization": self.stats.to_json() if self.stats is not None else None,
        }

    @classmethod
    def from_json(cls, obj: Mapping, assignments: Mapping[str, int]) -> "Segmentation":
        descs = {int(k): [TopicDescription(n, tuple(words)) for n, words in zip(obj["description_topics"][k], v)]
                 for k, v in obj.get("descriptions", {}).items()}
        trace = [SplitStep(s["parent"] - 1, tuple(c - 1 for c in s["children"]),
                           {int(c) - 1: n for c, n in s["sizes"].items()}) for s in obj.get("split_trace", [])]
        stats = obj.get("standardization")
        return cls(obj["K"], np.array(obj["centroids"], dtype=np.float64), dict(assignments),
                   np.array(obj["seg_theta_bar"], dtype=np.float64), obj.get("variant", "general"),
                   obj.get("section"), descs, trace, Standardization.from_json(stats) if stats else None)


@dataclass(frozen=True)
class SegmentAssignment:
    user_id: str
    segment: int


def _lloyd_2means(points, init, iters):
    centers = points[list(init)].copy()
    labels = None
    for _ in range(max(iters, 1)):
        d0 = ((points - centers[0]) ** 2).sum(axis=1)
        d1 = ((points - centers[1]) ** 2).sum(axis=1)
        new = (d1 < d0).astype(np.int64)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        if labels.all() or not labels.any():
            break
        centers = np.stack([points[labels == 0].mean(axis=0), points[labels == 1].mean(axis=0)])
    return labels


def _sse(points, labels):
    total = 0.0
    for c in (0, 1):
        part = points[labels == c]
        if len(part):
            total += float(((part - part.mean(axis=0)) ** 2).sum())
    return total


def _bisect(points, rng, inner_iters, n_init):
    best, best_sse = None, np.inf
    for _ in range(n_init):
        init = rng.choice(len(points), size=2, replace=False)
        labels = _lloyd_2means(points, init, inner_iters)
        if labels.all() or not labels.any():
            continue
        sse = _sse(points, labels)
        if sse < best_sse:
            best, best_sse = labels, sse
    return best


def bisect_points(points: np.ndarray, k: int, seed: int = 0, inner_iters: int = 20,
                  n_init: int = 3) -> tuple[np.ndarray, list[SplitStep]]:
    """Bisecting k-means on a point matrix; returns 0-based labels and the split trace.

    The largest cluster (lowest index on ties) is split next.  A failed split
    (one empty half) is retried with fresh initial points; after the retries the
    cluster is set aside and the next-largest one is tried.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise DataError(f"{n} points cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    clusters: dict[int, np.ndarray] = {0: np.arange(n)}
    unsplittable: set[int] = set()
    trace: list[SplitStep] = []
    while len(clusters) < k:
        candidates = sorted((-len(m), idx) for idx, m in clusters.items()
                            if idx not in unsplittable and len(m) >= 2)
        if not candidates:
            raise DataError(f"cannot split further: only {len(clusters)} of {k} clusters separable")
        idx = candidates[0][1]
        members = clusters[idx]
        labels = None
        for _ in range(1 + SPLIT_RETRIES):
            labels = _bisect(points[members], rng, inner_iters, n_init)
            if labels is not None:
                break
        if labels is None:
            logger.info("cluster %d could not be bisected; trying the next-largest", idx)
            unsplittable.add(idx)
            continue
        new_idx = len(clusters)
        trace.append(SplitStep(idx, (idx, new_idx), {c: len(m) for c, m in clusters.items()}))
        clusters[idx] = members[labels == 0]
        clusters[new_idx] = members[labels == 1]
    out = np.empty(n, dtype=np.int64)
    for idx, members in clusters.items():
        out[members] = idx
    return out, trace


def _mean_by_segment(matrix, labels, k):
    return np.stack([matrix[labels == i].mean(axis=0) for i in range(k)])


def bisecting_kmeans(profiles: Sequence[UserProfile], k: int, seed: int = 0, inner_iters: int = 20,
                     n_init: int = 3) -> Segmentation:
    if len(profiles) < k:
        raise DataError(f"{len(profiles)} profiles cannot form {k} segments")
    matrix = np.stack([p.theta for p in profiles])
    labels, trace = bisect_points(matrix, k, seed, inner_iters, n_init)
    means = _mean_by_segment(matrix, labels, k)
    assignments = {p.user_id: int(labels[i]) + 1 for i, p in enumerate(profiles)}
    return Segmentation(k, means.copy(), assignments, means, split_trace=trace)


def assign_user(profile, seg: Segmentation, user_id: str | None = None) -> SegmentAssignment:
    """Nearest centroid (Euclidean, lowest index on ties); no profile means segment 0."""
    if isinstance(profile, UserProfile):
        user_id, vec = profile.user_id, profile.theta
    else:
        vec = profile
    if vec is None:
        return SegmentAssignment(user_id, COLD_START_SEGMENT)
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (seg.dim,):
        raise ValueError(f"profile dimension {vec.shape} does not match centroids ({seg.dim},)")
    dist = ((seg.centroids - vec) ** 2).sum(axis=1)
    return SegmentAssignment(user_id, int(np.argmin(dist)) + 1)


def score_users(seg: Segmentation, profiles: Sequence[UserProfile]) -> Segmentation:
    """Assign users not seen in training to their nearest centroid.

    Members' mean profiles are recomputed over the enlarged assignment.
    """
    assignments = dict(seg.assignments)
    for p in profiles:
        if p.user_id not in assignments:
            assignments[p.user_id] = assign_user(p, seg).segment
    by_user = {p.user_id: p.theta for p in profiles}
    ids = sorted(u for u in assignments if u in by_user)
    matrix = np.stack([by_user[u] for u in ids])
    labels = np.array([assignments[u] - 1 for u in ids])
    means = _mean_by_segment(matrix, labels, seg.k)
    return Segmentation(seg.k, seg.centroids, assignments, means, seg.variant, seg.section,
                        dict(seg.descriptions), list(seg.split_trace), seg.stats)


def describe_segment(seg: Segmentation, k: int, model: TopicModel) -> list[TopicDescription]:
    """Descriptions of topics whose segment mean is above the population average."""
    if not 1 <= k <= seg.k:
        raise IndexError(f"segment {k} out of range 1..{seg.k}")
    row = seg.seg_theta_bar[k - 1]
    topics = sorted((n for n in range(len(row)) if row[n] > 0), key=lambda n: (-row[n], n))
    if not topics:
        logger.warning("segment %d has no topic above the global average", k)
    return [describe_topic(model, n) for n in topics]


# ---------------------------------------------------------------------------
# variant pipelines


@dataclass
class VariantRun:
    segmentation: Segmentation
    model: TopicModel
    doc_topics: list[DocTopics]
    profiles: list[UserProfile]
    topic_article_ids: list[str]


def profile_window(events: Sequence[Event], window_days: int, as_of: str | None = None) -> tuple[float, float]:
    """``[end - window_days, end)`` where ``end`` is midnight after the ``as_of`` day.

    Without ``as_of`` the last day with any event is used.
    """
    if as_of is not None:
        day = dt.date.fromisoformat(as_of)
    elif events:
        day = dt.datetime.fromtimestamp(max(e.timestamp for e in events), tz=dt.timezone.utc).date()
    else:
        raise DataError("no events to derive the profile window from")
    end = dt.datetime.combine(day + dt.timedelta(days=1), dt.time(), tzinfo=dt.timezone.utc).timestamp()
    return end - window_days * DAY_SECONDS, end


def select_topic_articles(variant: str, articles: Sequence[Article], events: Sequence[Event],
                          window: tuple[float, float], section: str | None = None) -> list[Article]:
    """Articles the topic model of a variant is trained on."""
    if variant == "general":
        return list(articles)
    if variant == "hot_topics":
        start, end = window
        viewed = {e.article_id for e in events if start <= e.timestamp < end}
        return [a for a in articles if a.id in viewed]
    if variant == "site_specific":
        if not section:
            raise DataError("site_specific variant requires a section")
        chosen = [a for a in articles if a.section == section]
        if not chosen:
            raise DataError(f"unknown section {section!r}")
        return chosen
    raise ValueError(f"unknown variant {variant!r}")


def profile_events(variant: str, events: Sequence[Event], topic_articles: Sequence[Article]) -> list[Event]:
    if variant == "site_specific":
        keep = {a.id for a in topic_articles}
        return [e for e in events if e.article_id in keep]
    return list(events)


def segment_profiles(profiles: Sequence[UserProfile], stats: Standardization, model: TopicModel,
                     cfg: PipelineConfig, variant: str, section: str | None) -> Segmentation:
    """Train on users with enough pageviews, then score every profiled user."""
    sc = cfg.segments
    train = [p for p in profiles if p.pageviews >= cfg.profiles.min_pageviews_train]
    if len(train) < sc.k:
        raise DataError(f"only {len(train)} users have >= {cfg.profiles.min_pageviews_train} pageviews; "
                        f"need at least K={sc.k}")
    seg = bisecting_kmeans(train, sc.k, sc.seed, sc.inner_iters, sc.n_init)
    seg = score_users(seg, profiles)
    seg.variant, seg.section, seg.stats = variant, section, stats
    seg.descriptions = {k: describe_segment(seg, k, model) for k in range(1, seg.k + 1)}
    return seg


def run_variant_pipeline(variant: str, articles: Sequence[Article], events: Sequence[Event],
                         cfg: PipelineConfig, section: str | None = None, stopwords=(),
                         lemmas=None) -> VariantRun:
    """Topics -> profiles -> standardize -> bisecting k-means for one variant."""
    tc, pc = cfg.topics, cfg.profiles
    section = section if section is not None else cfg.segments.section
    window = profile_window(events, pc.window_days, pc.as_of)
    topic_articles = select_topic_articles(variant, articles, events, window, section)
    corpus = build_corpus(topic_articles, stopwords, lemmas, tc.min_doc_count, tc.max_doc_fraction)
    model, doc_topics = train_lda(corpus, tc.num_topics, tc.alpha, tc.beta, tc.iterations, tc.seed)
    theta_map = {d.article_id: d.theta for d in doc_topics}
    evs = profile_events(variant, events, topic_articles)
    profiles, stats, _ = build_profiles(evs, theta_map, window, pc.min_articles_score)
    seg = segment_profiles(profiles, stats, model, cfg, variant, section if variant == "site_specific" else None)
    return VariantRun(seg, model, doc_topics, profiles, [d[0] for d in corpus.docs])
