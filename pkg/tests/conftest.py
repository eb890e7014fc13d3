import itertools

import numpy as np
import pytest

from trendseg.corpus import TokenizedCorpus, Vocabulary

ACCEPTANCE_RESULTS = []


def record_acceptance(number, name, passed, detail=""):
    ACCEPTANCE_RESULTS.append((number, name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {name}: {detail}")


def planted_corpus(groups, docs_per_group=100, words_per_group=50, doc_len=40, seed=0, offset=0):
    """Documents drawn uniformly from disjoint per-group word sets; returns (corpus, labels)."""
    rng = np.random.default_rng(seed)
    terms = tuple(sorted(f"g{g}w{i:03d}" for g in range(groups) for i in range(words_per_group)))
    vocab = Vocabulary(terms, tuple([docs_per_group] * len(terms)))
    docs, labels = [], []
    for g in range(groups):
        ids = np.array([vocab.index(f"g{g}w{i:03d}") for i in range(words_per_group)])
        for j in range(docs_per_group):
            docs.append((f"d{offset}-{g}-{j}", ids[rng.integers(0, words_per_group, doc_len)].tolist()))
            labels.append(g)
    return TokenizedCorpus(docs, vocab), labels


def purity(labels, predicted, groups):
    """Fraction of documents matched under the best topic permutation."""
    labels, predicted = np.asarray(labels), np.asarray(predicted)
    best = 0
    for perm in itertools.permutations(range(groups)):
        mapped = np.array([perm[p] for p in predicted])
        best = max(best, int((mapped == labels).sum()))
    return best / len(labels)


@pytest.fixture(scope="session")
def two_topic_model():
    from trendseg.topics import train_lda

    corpus, labels = planted_corpus(2, docs_per_group=100, seed=11)
    model, doc_topics = train_lda(corpus, 2, seed=5)
    return corpus, labels, model, doc_topics


def wcss(points, labels):
    points, labels = np.asarray(points, dtype=float), np.asarray(labels)
    return sum(float(((points[labels == c] - points[labels == c].mean(axis=0)) ** 2).sum())
               for c in np.unique(labels))


def optimal_wcss(points, k):
    """Exhaustive minimum within-cluster sum of squares over all k-partitions."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    best = np.inf
    # fixing the first point's label to 0 removes one symmetry factor
    for rest in itertools.product(range(k), repeat=n - 1):
        labels = (0,) + rest
        if len(set(labels)) == k:
            best = min(best, wcss(points, labels))
    return best


def separation_ratio(points, labels):
    """Smallest distance between cluster means over the largest cluster radius."""
    points, labels = np.asarray(points, dtype=float), np.asarray(labels)
    groups = np.unique(labels)
    means = np.array([points[labels == g].mean(axis=0) for g in groups])
    radius = max(np.linalg.norm(points[labels == g] - means[i], axis=1).max() for i, g in enumerate(groups))
    gaps = [np.linalg.norm(means[i] - means[j]) for i in range(len(groups)) for j in range(i + 1, len(groups))]
    return min(gaps) / radius if radius > 0 else np.inf


def planted_clusters(k, n, ratio, seed):
    """Balanced 2-D blobs at random positions with separation ratio at least ``ratio``."""
    rng = np.random.default_rng(seed)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    offsets = []
    for s in sizes:
        off = rng.uniform(-1, 1, (s, 2))
        offsets.append(off - off.mean(axis=0))
    radius = max(np.linalg.norm(o, axis=1).max() for o in offsets)
    box = 3 * k * ratio * radius
    while True:
        centers = rng.uniform(0, box, (k, 2))
        if all(np.linalg.norm(centers[i] - centers[j]) >= ratio * radius
               for i in range(k) for j in range(i + 1, k)):
            break
    points = np.concatenate([c + o for c, o in zip(centers, offsets)])
    return points, np.repeat(np.arange(k), sizes)
