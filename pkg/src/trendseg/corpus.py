"""Article/event ingestion and text preprocessing.

Tokens are lowercased, must be at least three characters long and consist of
Unicode letters only.  Stopwords are dropped and the remaining surface forms are
mapped through a lemma dictionary (identity by default).  Document-frequency
thresholds are applied afterwards, on base forms.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError

logger = logging.getLogger(__name__)

MIN_TERM_LENGTH = 3
DEFAULT_MIN_DOC_COUNT = 10
DEFAULT_MAX_DOC_FRACTION = 0.10

_WORD_RE = re.compile(r"\w+")


@dataclass(frozen=True)
class Article:
    id: str
    text: str
    section: str | None = None
    published_at: float = 0.0
    title: str | None = None

    def __post_init__(self):
        if not self.id:
            raise DataError("article id must be non-empty")
        if not math.isfinite(self.published_at) or self.published_at < 0:
            raise DataError(f"article {self.id}: invalid published_at {self.published_at!r}")

    @property
    def display_title(self) -> str:
        return self.title or self.id


@dataclass(frozen=True)
class Event:
    user_id: str
    article_id: str
    timestamp: float
    placement: str
    extra: Mapping[str, object] = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    doc_freq: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.terms)})

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term):
        return term in self._index

    def index(self, term: str) -> int:
        return self._index[term]

    def get(self, term: str) -> int | None:
        return self._index.get(term)


@dataclass
class TokenizedCorpus:
    docs: list[tuple[str, list[int]]]
    vocabulary: Vocabulary
    dropped_empty: int = 0

    def __len__(self):
        return len(self.docs)

    @property
    def num_tokens(self) -> int:
        return sum(len(d) for _, d in self.docs)

    def subset(self, article_ids: Iterable[str]) -> "TokenizedCorpus":
        keep = set(article_ids)
        return TokenizedCorpus([d for d in self.docs if d[0] in keep], self.vocabulary)


def _read_jsonl(path):
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError:
            yield lineno, None


def ingest_articles(path) -> tuple[list[Article], int]:
    """Read article JSONL; returns ``(articles, skipped)``.

    Lines that fail to parse or validate (including duplicate ids) are skipped
    and counted.  A file without any valid article is an error.
    """
    articles: list[Article] = []
    seen: set[str] = set()
    skipped = 0
    for lineno, rec in _read_jsonl(path):
        try:
            if not isinstance(rec, dict):
                raise DataError("not an object")
            art = Article(
                id=str(rec["id"]),
                text=str(rec["text"]),
                section=rec.get("section"),
                published_at=float(rec["published_at"]),
                title=rec.get("title"),
            )
            if art.id in seen:
                raise DataError(f"duplicate id {art.id}")
        except (KeyError, TypeError, ValueError) as exc:
            skipped += 1
            logger.warning("%s:%d: skipping malformed article (%s)", path, lineno, exc)
            continue
        seen.add(art.id)
        articles.append(art)
    if not articles:
        raise DataError(f"{path}: zero valid articles")
    return articles, skipped


def ingest_events(path, article_ids: Iterable[str] | None = None) -> tuple[list[Event], int]:
    """Read event JSONL; returns ``(events, dropped)``.

    Events that are malformed or reference an unknown article are dropped.
    Unrecognised keys (dwell time, bounce flags, ...) are kept in ``extra``.
    """
    known = set(article_ids) if article_ids is not None else None
    events: list[Event] = []
    dropped = 0
    for lineno, rec in _read_jsonl(path):
        try:
            if not isinstance(rec, dict):
                raise DataError("not an object")
            ev = Event(
                user_id=str(rec["user_id"]),
                article_id=str(rec["article_id"]),
                timestamp=float(rec["timestamp"]),
                placement=str(rec["placement"]),
                extra={k: v for k, v in rec.items()
                       if k not in ("user_id", "article_id", "timestamp", "placement")},
            )
            if not math.isfinite(ev.timestamp):
                raise DataError("non-finite timestamp")
        except (KeyError, TypeError, ValueError) as exc:
            dropped += 1
            logger.warning("%s:%d: skipping malformed event (%s)", path, lineno, exc)
            continue
        if known is not None and ev.article_id not in known:
            dropped += 1
            continue
        events.append(ev)
    if dropped:
        logger.warning("%s: dropped %d events", path, dropped)
    return events, dropped


def load_stopwords(path) -> frozenset[str]:
    if path is None:
        return frozenset()
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip().lower() for w in fh if w.strip())


def load_lemmas(path) -> dict[str, str]:
    """Load a ``surface<TAB>lemma`` file.

    A surface form listed with several lemmas resolves to the alphabetically
    first one.
    """
    if path is None:
        return {}
    candidates: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                continue
            candidates.setdefault(parts[0].strip().lower(), set()).add(parts[1].strip().lower())
    return {surface: min(forms) for surface, forms in candidates.items()}


def _acceptable(term: str) -> bool:
    return len(term) >= MIN_TERM_LENGTH and term.isalpha()


def tokenize(text: str, stopwords: Iterable[str] = (), lemmas: Mapping[str, str] | None = None) -> list[str]:
    stop = stopwords if isinstance(stopwords, (set, frozenset)) else set(stopwords)
    lemmas = lemmas or {}
    out = []
    for raw in _WORD_RE.findall(text.lower()):
        if not _acceptable(raw) or raw in stop:
            continue
        term = lemmas.get(raw, raw)
        if _acceptable(term) and term not in stop:
            out.append(term)
    return out


def build_vocabulary(docs: Sequence[Sequence[str]], min_doc_count: int = DEFAULT_MIN_DOC_COUNT,
                     max_doc_fraction: float = DEFAULT_MAX_DOC_FRACTION) -> Vocabulary:
    if min_doc_count < 1:
        raise ValueError("min_doc_count must be >= 1")
    if not 0 < max_doc_fraction <= 1:
        raise ValueError("max_doc_fraction must be in (0, 1]")
    df = Counter()
    for doc in docs:
        df.update(set(doc))
    cap = max_doc_fraction * len(docs)
    terms = sorted(t for t, c in df.items() if min_doc_count <= c <= cap and _acceptable(t))
    if not terms:
        raise DataError("vocabulary is empty after document-frequency filtering")
    return Vocabulary(tuple(terms), tuple(df[t] for t in terms))


def build_corpus(articles: Sequence[Article], stopwords=(), lemmas=None,
                 min_doc_count: int = DEFAULT_MIN_DOC_COUNT,
                 max_doc_fraction: float = DEFAULT_MAX_DOC_FRACTION,
                 vocabulary: Vocabulary | None = None) -> TokenizedCorpus:
    """Tokenize articles and index them against a (new or given) vocabulary."""
    tokenized = [(a.id, tokenize(a.text, stopwords, lemmas)) for a in articles]
    if vocabulary is None:
        vocabulary = build_vocabulary([t for _, t in tokenized], min_doc_count, max_doc_fraction)
    docs, empty = [], 0
    for art_id, terms in tokenized:
        ids = [i for i in map(vocabulary.get, terms) if i is not None]
        if ids:
            docs.append((art_id, ids))
        else:
            empty += 1
    if empty:
        logger.info("%d documents empty after filtering", empty)
    return TokenizedCorpus(docs, vocabulary, dropped_empty=empty)
