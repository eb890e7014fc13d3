"""LDA topic model trained by collapsed Gibbs sampling.

The sampler kernels are compiled with numba.  All randomness is drawn up front
from a seeded ``numpy.random.Generator`` (one uniform per token per sweep), so a
run is bitwise reproducible for a given seed.
"""

from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from numba import njit

from .corpus import Article, TokenizedCorpus, Vocabulary
from .errors import DataError

logger = logging.getLogger(__name__)

DEFAULT_NUM_TOPICS = 50
DEFAULT_BETA = 0.01
DEFAULT_ITERATIONS = 500
DESCRIPTION_WORDS = 4


def default_alpha(num_topics: int) -> float:
    return 50.0 / num_topics


@dataclass
class TopicModel:
    num_topics: int
    phi: np.ndarray
    alpha: float
    beta: float
    vocabulary: Vocabulary
    seed: int | None = None
    log_likelihood: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.phi.shape != (self.num_topics, len(self.vocabulary)):
            raise ValueError(f"phi shape {self.phi.shape} does not match "
                             f"({self.num_topics}, {len(self.vocabulary)})")


@dataclass
class DocTopics:
    article_id: str
    theta: np.ndarray
    flagged: bool = False


@dataclass(frozen=True)
class TopicDescription:
    topic_index: int
    top_words: tuple[str, ...]

    def __str__(self):
        return ", ".join(self.top_words)


@njit(cache=True)
def _gibbs_sweep(words, docs, z, ndk, nkw, nk, alpha, beta, uniforms, p):
    num_topics = nk.shape[0]
    vbeta = nkw.shape[1] * beta
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        k = z[i]
        ndk[d, k] -= 1
        nkw[k, w] -= 1
        nk[k] -= 1
        total = 0.0
        for j in range(num_topics):
            total += (ndk[d, j] + alpha) * (nkw[j, w] + beta) / (nk[j] + vbeta)
            p[j] = total
        u = uniforms[i] * total
        k = 0
        while k < num_topics - 1 and p[k] <= u:
            k += 1
        z[i] = k
        ndk[d, k] += 1
        nkw[k, w] += 1
        nk[k] += 1


@njit(cache=True)
def _word_log_likelihood(nkw, nk, beta):
    # log p(w | z) with phi integrated out
    num_topics, vocab = nkw.shape
    lg_beta = math.lgamma(beta)
    ll = num_topics * math.lgamma(vocab * beta)
    for k in range(num_topics):
        for w in range(vocab):
            if nkw[k, w] > 0:
                ll += math.lgamma(nkw[k, w] + beta) - lg_beta
        ll -= math.lgamma(nk[k] + vocab * beta)
    return ll


@njit(cache=True)
def _infer_doc(words, z, ndk, phi, alpha, uniforms, burn_in):
    # phi is held fixed; returns theta averaged over post-burn-in sweeps
    num_topics = phi.shape[0]
    length = words.shape[0]
    p = np.empty(num_topics)
    acc = np.zeros(num_topics)
    kept = 0
    denom = length + num_topics * alpha
    for it in range(uniforms.shape[0]):
        for i in range(length):
            w = words[i]
            ndk[z[i]] -= 1
            total = 0.0
            for j in range(num_topics):
                total += (ndk[j] + alpha) * phi[j, w]
                p[j] = total
            u = uniforms[it, i] * total
            k = 0
            while k < num_topics - 1 and p[k] <= u:
                k += 1
            z[i] = k
            ndk[k] += 1
        if it >= burn_in:
            for j in range(num_topics):
                acc[j] += (ndk[j] + alpha) / denom
            kept += 1
    return acc / kept


def _flatten(corpus: TokenizedCorpus):
    words = np.fromiter((w for _, d in corpus.docs for w in d), dtype=np.int64)
    docs = np.fromiter((i for i, (_, d) in enumerate(corpus.docs) for _ in d), dtype=np.int64)
    return words, docs


def train_lda(corpus: TokenizedCorpus, num_topics: int = DEFAULT_NUM_TOPICS, alpha: float | None = None,
              beta: float = DEFAULT_BETA, iterations: int = DEFAULT_ITERATIONS, seed: int = 0,
              track_likelihood: bool = True) -> tuple[TopicModel, list[DocTopics]]:
    """Fit LDA and return the model plus per-document topic mixtures.

    Document mixtures come from the smoothed counts of the final sweep.
    """
    if num_topics < 2:
        raise ValueError("num_topics must be >= 2")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if len(corpus) == 0:
        raise DataError("cannot train on an empty corpus")
    if len(corpus) < num_topics:
        raise DataError(f"corpus has {len(corpus)} documents, fewer than num_topics={num_topics}")
    alpha = default_alpha(num_topics) if alpha is None else float(alpha)
    vocab = len(corpus.vocabulary)
    rng = np.random.default_rng(seed)
    words, docs = _flatten(corpus)
    z = rng.integers(0, num_topics, size=words.shape[0]).astype(np.int64)
    ndk = np.zeros((len(corpus), num_topics), dtype=np.int64)
    nkw = np.zeros((num_topics, vocab), dtype=np.int64)
    np.add.at(ndk, (docs, z), 1)
    np.add.at(nkw, (z, words), 1)
    nk = nkw.sum(axis=1)
    p = np.empty(num_topics)
    ll = []
    for _ in range(iterations):
        _gibbs_sweep(words, docs, z, ndk, nkw, nk, alpha, beta, rng.random(words.shape[0]), p)
        if track_likelihood:
            ll.append(float(_word_log_likelihood(nkw, nk, beta)))
    phi = (nkw + beta) / (nk[:, None] + vocab * beta)
    lengths = ndk.sum(axis=1)
    theta = (ndk + alpha) / (lengths[:, None] + num_topics * alpha)
    model = TopicModel(num_topics, phi, alpha, beta, corpus.vocabulary, seed, ll)
    doc_topics = [DocTopics(art_id, theta[i]) for i, (art_id, _) in enumerate(corpus.docs)]
    return model, doc_topics


def single_topic_model(corpus: TokenizedCorpus, beta: float = DEFAULT_BETA) -> TopicModel:
    """Smoothed unigram model, the one-topic baseline for perplexity curves."""
    counts = np.zeros(len(corpus.vocabulary))
    for _, d in corpus.docs:
        np.add.at(counts, d, 1)
    phi = (counts + beta) / (counts.sum() + len(counts) * beta)
    return TopicModel(1, phi[None, :], 1.0, beta, corpus.vocabulary)


def infer_theta(model: TopicModel, doc: Iterable, iterations: int = 50, seed: int = 0,
                article_id: str = "") -> DocTopics:
    """Estimate the topic mixture of a document under a fixed model.

    ``doc`` may hold vocabulary indices or terms; unknown terms are skipped.
    """
    ids = []
    for tok in doc:
        idx = model.vocabulary.get(tok) if isinstance(tok, str) else int(tok)
        if idx is not None and 0 <= idx < len(model.vocabulary):
            ids.append(idx)
    uniform = np.full(model.num_topics, 1.0 / model.num_topics)
    if not ids:
        had_tokens = bool(doc) if isinstance(doc, Sequence) else False
        if had_tokens:
            logger.warning("document %r has no in-vocabulary tokens", article_id)
        return DocTopics(article_id, uniform, flagged=had_tokens)
    rng = np.random.default_rng(seed)
    return DocTopics(article_id, _infer_ids(model, np.asarray(ids, dtype=np.int64), iterations, rng))


def _infer_ids(model, words, iterations, rng):
    z = rng.integers(0, model.num_topics, size=words.shape[0]).astype(np.int64)
    ndk = np.bincount(z, minlength=model.num_topics).astype(np.int64)
    uniforms = rng.random((iterations, words.shape[0]))
    return _infer_doc(words, z, ndk, model.phi, model.alpha, uniforms, iterations // 2)


def perplexity(model: TopicModel, held_out: TokenizedCorpus, iterations: int = 50, seed: int | None = None) -> float:
    """Held-out perplexity by document completion.

    The mixture of each document is estimated on its first half and the
    likelihood is evaluated on the second half.
    """
    if len(held_out) == 0 or held_out.num_tokens == 0:
        raise DataError("held-out set is empty")
    rng = np.random.default_rng(model.seed if seed is None else seed)
    total_ll = 0.0
    count = 0
    for _, doc in held_out.docs:
        words = np.asarray(doc, dtype=np.int64)
        half = len(words) // 2
        observed, target = words[:half], words[half:]
        if half and model.num_topics > 1:
            theta = _infer_ids(model, observed, iterations, rng)
        else:
            theta = np.full(model.num_topics, 1.0 / model.num_topics)
        probs = theta @ model.phi[:, target]
        total_ll += float(np.log(probs).sum())
        count += len(target)
    return math.exp(-total_ll / count)


def describe_topic(model: TopicModel, n: int, num_words: int = DESCRIPTION_WORDS) -> TopicDescription:
    if not 0 <= n < model.num_topics:
        raise IndexError(f"topic {n} out of range [0, {model.num_topics})")
    row = model.phi[n]
    terms = model.vocabulary.terms
    order = sorted(range(len(terms)), key=lambda v: (-row[v], terms[v]))
    return TopicDescription(n, tuple(terms[v] for v in order[:num_words]))


def utc_day(ts: float) -> dt.date:
    return dt.datetime.fromtimestamp(ts, tz=dt.timezone.utc).date()


def daily_topic_trend(doc_topics: Sequence[DocTopics], articles: Iterable[Article] | Mapping[str, Article],
                      topic: int, start: dt.date, end: dt.date) -> list[tuple[dt.date, float | None]]:
    """Standardized per-day mean weight of one topic over ``[start, end]``.

    Days without articles are ``None``; a constant series is all ``None``.
    """
    if end < start:
        raise ValueError("empty date range")
    by_id = articles if isinstance(articles, Mapping) else {a.id: a for a in articles}
    sums: dict[dt.date, list[float]] = {}
    for dtp in doc_topics:
        art = by_id.get(dtp.article_id)
        if art is None:
            continue
        day = utc_day(art.published_at)
        if start <= day <= end:
            sums.setdefault(day, []).append(float(dtp.theta[topic]))
    days = [start + dt.timedelta(days=i) for i in range((end - start).days + 1)]
    means = {d: sum(v) / len(v) for d, v in sums.items()}
    values = np.array(list(means.values()))
    if values.size == 0:
        return [(d, None) for d in days]
    mu, sd = values.mean(), values.std()
    if sd == 0:
        return [(d, None) for d in days]
    return [(d, (means[d] - mu) / sd if d in means else None) for d in days]
