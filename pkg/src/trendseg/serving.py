"""Recommendation resolution: user -> segment -> context -> cached bandit list.

Lists are cached per context.  A fresh entry is returned as is; a stale entry is
returned immediately while one background worker regenerates it; a miss is
generated synchronously (concurrent misses for one context share one
generation).
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Mapping, TextIO

import numpy as np

from .bandit import BanditKnowledge, Context, ItemPool, RewardEvent, select
from .segments import COLD_START_SEGMENT

logger = logging.getLogger(__name__)

DEFAULT_TTL = 30.0

FRESH_HIT = "fresh-hit"
STALE_HIT = "stale-hit"
MISS = "miss"


@dataclass(frozen=True)
class CacheEntry:
    context: Context
    items: tuple
    generated_at: float
    ttl: float

    def state(self, now: float) -> str:
        return "fresh" if now - self.generated_at <= self.ttl else "stale"


@dataclass
class Resolution:
    items: list
    segment: int
    cache_state: str
    generated_at: float | None
    error: str | None = None

    def to_json(self) -> dict:
        out = {"items": list(self.items), "segment": self.segment, "cache_state": self.cache_state,
               "generated_at": self.generated_at}
        if self.error:
            out["error"] = self.error
        return out


class EmptyPoolError(RuntimeError):
    pass


Generator = Callable[[Context, float], list]


class ServingEngine:
    def __init__(self, assignments: Mapping[str, int] | Callable[[str], int | None],
                 knowledge: BanditKnowledge, pool: ItemPool | Callable[[float], Iterable[Hashable]],
                 list_len: int = 5, ttl: float = DEFAULT_TTL, seed: int = 0,
                 generator: Generator | None = None, background: bool = True):
        self._lookup = assignments.get if isinstance(assignments, Mapping) else assignments
        self.knowledge = knowledge
        self._pool = pool.available if isinstance(pool, ItemPool) else pool
        self.list_len = list_len
        self.ttl = ttl
        self._rng = np.random.default_rng(seed)
        self._generate = generator or self._bandit_generate
        self._cache: dict[Context, CacheEntry] = {}
        self._cache_lock = threading.Lock()
        self._gen_locks: dict[Context, threading.Lock] = {}
        self._rng_lock = threading.Lock()
        self._inflight: set[Context] = set()
        self._queue: queue.Queue = queue.Queue()
        self.generations = 0
        self.refresh_failures = 0
        self._worker = None
        if background:
            self._worker = threading.Thread(target=self._run_worker, name="cache-refresh", daemon=True)
            self._worker.start()

    # -- generation -------------------------------------------------------

    def _bandit_generate(self, context: Context, now: float) -> list:
        pool = list(self._pool(now))
        if not pool:
            raise EmptyPoolError("item pool is empty")
        with self._rng_lock:
            return select(self.knowledge, context, pool, self.list_len, self._rng, now=now)

    def _gen_lock(self, context):
        with self._cache_lock:
            return self._gen_locks.setdefault(context, threading.Lock())

    def _store(self, context, items, now) -> CacheEntry:
        entry = CacheEntry(context, tuple(items), now, self.ttl)
        with self._cache_lock:
            self._cache[context] = entry
            self.generations += 1
        return entry

    def refresh(self, context: Context, now: float) -> CacheEntry | None:
        """Regenerate one context's list and swap it in; on failure keep the old entry."""
        with self._gen_lock(context):
            try:
                items = self._generate(context, now)
            except Exception as exc:
                self.refresh_failures += 1
                logger.warning("refresh of %s failed: %s", context, exc)
                with self._cache_lock:
                    return self._cache.get(context)
            return self._store(context, items, now)

    # -- background worker -------------------------------------------------

    def _enqueue(self, context, now):
        with self._cache_lock:
            if context in self._inflight:
                return
            self._inflight.add(context)
        if self._worker is None:
            self._refresh_job(context, now)
        else:
            self._queue.put((context, now))

    def _refresh_job(self, context, now):
        try:
            self.refresh(context, now)
        finally:
            with self._cache_lock:
                self._inflight.discard(context)

    def _run_worker(self):
        while True:
            job = self._queue.get()
            try:
                if job is None:
                    return
                self._refresh_job(*job)
            finally:
                self._queue.task_done()

    def wait_idle(self):
        """Block until queued refreshes are done."""
        self._queue.join()

    def close(self):
        if self._worker is not None:
            self._queue.put(None)
            self._worker.join()
            self._worker = None

    # -- read path -----------------------------------------------------------

    def segment_of(self, user_id: str) -> int:
        seg = self._lookup(user_id)
        return COLD_START_SEGMENT if seg is None else int(seg)

    def cached(self, context: Context) -> CacheEntry | None:
        with self._cache_lock:
            return self._cache.get(context)

    def cache_size(self) -> int:
        with self._cache_lock:
            return len(self._cache)

    def resolve(self, user_id: str, placement: str, now: float) -> Resolution:
        segment = self.segment_of(user_id)
        context = Context(segment, placement)
        entry = self.cached(context)
        if entry is not None:
            if entry.state(now) == "fresh":
                return Resolution(list(entry.items), segment, FRESH_HIT, entry.generated_at)
            self._enqueue(context, now)
            return Resolution(list(entry.items), segment, STALE_HIT, entry.generated_at)
        with self._gen_lock(context):
            entry = self.cached(context)
            if entry is not None:
                # another thread generated it while we waited
                return Resolution(list(entry.items), segment, FRESH_HIT, entry.generated_at)
            try:
                items = self._generate(context, now)
            except EmptyPoolError as exc:
                return Resolution([], segment, MISS, None, error=str(exc))
            entry = self._store(context, items, now)
        return Resolution(list(entry.items), segment, MISS, entry.generated_at)

    def record_reward(self, user_id: str, placement: str, item_id, reward: float, now: float) -> None:
        context = Context(self.segment_of(user_id), placement)
        self.knowledge.record(RewardEvent(context, item_id, now, reward))


def handle_line(engine: ServingEngine, line: str, now: float) -> dict | None:
    """One request of the line protocol; returns the JSON response object."""
    parts = line.split()
    if not parts:
        return None
    cmd = parts[0].upper()
    try:
        if cmd == "RESOLVE" and len(parts) == 3:
            return engine.resolve(parts[1], parts[2], now).to_json()
        if cmd == "REWARD" and len(parts) == 5:
            engine.record_reward(parts[1], parts[2], parts[3], float(parts[4]), now)
            return {"ok": True}
    except ValueError as exc:
        return {"error": str(exc)}
    return {"error": f"bad request: {line.strip()!r}"}


def serve_lines(engine: ServingEngine, inp: TextIO, out: TextIO, clock: Callable[[], float]) -> int:
    """Answer requests from ``inp`` until EOF; returns the number handled."""
    handled = 0
    for line in inp:
        resp = handle_line(engine, line, clock())
        if resp is None:
            continue
        out.write(json.dumps(resp, sort_keys=True) + "\n")
        out.flush()
        handled += 1
    return handled
