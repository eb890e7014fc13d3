"""Contextual epsilon-greedy bandit with sliding-window reward knowledge.

Knowledge is keyed by ``(context, item)``.  Each context keeps its own clock
(the newest reward timestamp recorded under it); an event stays in the window
while ``timestamp >= reference - window``.  Window sums are kept as a left fold
over the retained rewards in timestamp order, so an estimate is bitwise equal to
recomputing the mean from the raw log.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True, order=True)
class Context:
    segment: int
    placement: str


@dataclass(frozen=True)
class RewardEvent:
    context: Context
    item_id: Hashable
    timestamp: float
    reward: float


class _Window:
    __slots__ = ("times", "rewards", "total")

    def __init__(self):
        self.times: deque[float] = deque()
        self.rewards: deque[float] = deque()
        self.total = 0.0

    def add(self, ts, reward):
        if not self.times or ts >= self.times[-1]:
            self.times.append(ts)
            self.rewards.append(reward)
            self.total += reward
            return
        # late event: insert after equal timestamps and re-fold
        pos = bisect.bisect_right(self.times, ts)
        self.times.insert(pos, ts)
        self.rewards.insert(pos, reward)
        self.total = sum(self.rewards)

    def evict_before(self, cutoff):
        evicted = False
        while self.times and self.times[0] < cutoff:
            self.times.popleft()
            self.rewards.popleft()
            evicted = True
        if evicted:
            self.total = sum(self.rewards)


class BanditKnowledge:
    """Windowed reward statistics per (context, item).

    One writer and many readers: every public method runs under one lock, so a
    reader never observes a half-applied update.
    """

    def __init__(self, window: float, epsilon: float = 0.1):
        if window <= 0:
            raise ValueError("window must be positive")
        if not 0 <= epsilon <= 1:
            raise ValueError("epsilon must be in [0, 1]")
        self.window = float(window)
        self.epsilon = float(epsilon)
        self._data: dict[Context, dict[Hashable, _Window]] = {}
        self._clock: dict[Context, float] = {}
        self._lock = threading.RLock()

    def record(self, event: RewardEvent) -> None:
        r = float(event.reward)
        if not math.isfinite(r) or r < 0:
            raise ValueError(f"reward must be finite and non-negative, got {event.reward!r}")
        with self._lock:
            items = self._data.setdefault(event.context, {})
            win = items.get(event.item_id)
            if win is None:
                win = items[event.item_id] = _Window()
            win.add(float(event.timestamp), r)
            if event.timestamp > self._clock.get(event.context, -math.inf):
                self._clock[event.context] = float(event.timestamp)

    def record_many(self, events: Iterable[RewardEvent]) -> None:
        with self._lock:
            for ev in events:
                self.record(ev)

    def _cutoff(self, context, now):
        ref = self._clock.get(context, -math.inf)
        if now is not None and now > ref:
            ref = now
        return ref - self.window

    def stats(self, context: Context, item: Hashable, now: float | None = None) -> tuple[int, float]:
        """``(count, sum)`` of in-window rewards."""
        with self._lock:
            win = self._data.get(context, {}).get(item)
            if win is None:
                return 0, 0.0
            win.evict_before(self._cutoff(context, now))
            return len(win.rewards), win.total

    def estimate(self, context: Context, item: Hashable, now: float | None = None) -> float | None:
        """Windowed mean reward, or None when nothing is in the window."""
        count, total = self.stats(context, item, now)
        return total / count if count else None

    def snapshot(self, context: Context, items: Iterable[Hashable] | None = None,
                 now: float | None = None) -> dict[Hashable, tuple[int, float]]:
        """Consistent ``item -> (count, mean)`` view of one context."""
        with self._lock:
            known = self._data.get(context, {})
            keys = sorted(known) if items is None else list(items)
            out = {}
            for item in keys:
                count, total = self.stats(context, item, now)
                if count:
                    out[item] = (count, total / count)
            return out

    def contexts(self) -> list[Context]:
        with self._lock:
            return sorted(self._data)

    def snapshot_csv(self, context: Context, now: float | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["item_id", "count", "mean_reward"])
        for item, (count, mean) in self.snapshot(context, now=now).items():
            writer.writerow([item, count, repr(mean)])
        return buf.getvalue()


def greedy_ranking(knowledge: BanditKnowledge, context: Context, pool: Iterable[Hashable],
                   now: float | None = None) -> list[Hashable]:
    """Exploitation order of the pool.

    Higher mean first, then more windowed events, then smaller item id; items
    without data come last in id order.
    """
    snap = knowledge.snapshot(context, sorted(set(pool)), now)
    known = sorted(snap, key=lambda i: (-snap[i][1], -snap[i][0], i))
    cold = sorted(i for i in set(pool) if i not in snap)
    return known + cold


def select_from_ranking(ranking: Sequence[Hashable], list_len: int, epsilon: float,
                        rng: np.random.Generator) -> list[Hashable]:
    """Fill each slot greedily with prob. 1-eps, else with a uniform random remaining item."""
    remaining = list(ranking)
    out = []
    for _ in range(min(list_len, len(remaining))):
        if epsilon > 0 and rng.random() < epsilon:
            pick = int(rng.integers(len(remaining)))
        else:
            pick = 0
        out.append(remaining.pop(pick))
    return out


def select(knowledge: BanditKnowledge, context: Context, pool: Iterable[Hashable], list_len: int,
           rng: np.random.Generator, epsilon: float | None = None, now: float | None = None) -> list[Hashable]:
    pool = list(pool)
    if not pool:
        raise ValueError("item pool is empty")
    if list_len < 1:
        raise ValueError("list_len must be >= 1")
    eps = knowledge.epsilon if epsilon is None else epsilon
    return select_from_ranking(greedy_ranking(knowledge, context, pool, now), list_len, eps, rng)


def random_policy(pool: Iterable[Hashable], list_len: int, rng: np.random.Generator) -> list[Hashable]:
    items = sorted(set(pool))
    if not items:
        raise ValueError("item pool is empty")
    order = rng.permutation(len(items))[:list_len]
    return [items[i] for i in order]


@dataclass
class ItemPool:
    """Items with availability intervals ``[start, end)``."""

    intervals: dict[Hashable, tuple[float, float]]

    def available(self, now: float) -> list[Hashable]:
        return sorted(i for i, (s, e) in self.intervals.items() if s <= now < e)


def reference_kpi(record: Mapping) -> float:
    """Stand-in engagement reward: pageview + capped dwell bonus - bounce penalty.

    Not the production metric; swap in any non-negative function of a record.
    """
    dwell = float(record.get("dwell_seconds", 0) or 0)
    bounce = bool(record.get("bounce", False))
    return 1.0 + min(max(dwell, 0.0), 300.0) / 300.0 - (0.5 if bounce else 0.0)


RewardFunction = Callable[[Mapping], float]
