"""Offline traffic simulation for picking (window, epsilon) and for A/B comparisons.

A trial is one discrete step.  Per trial the item pool is updated (expiries and
arrivals), a Poisson number of views is drawn and split across segments, the
policy picks one item per view and the realized rewards are fed back to its
knowledge at the end of the trial.

Everything exogenous to the policy (pool, reward means, traffic, per-view
uniforms) is drawn from streams that depend only on the seed, so different
policies run on the same seed see the same world.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sps
from scipy.special import ndtri

from .bandit import BanditKnowledge, Context, RewardEvent, greedy_ranking, random_policy, select_from_ranking

POLICIES = ("contextual", "global", "random")
SIM_PLACEMENT = "sim"
GLOBAL_CONTEXT = Context(0, "global")


@dataclass
class RewardLaw:
    """Per-(segment, item) reward distribution.

    ``bernoulli``/``gaussian`` draw each mean uniformly from ``[low, high]`` when
    the item enters the pool; ``table`` fixes means per segment and item index
    (``means[segment - 1][item]``, missing entries use ``default_mean``).
    ``drift_every`` re-draws the means of all live items every that many trials.
    """

    kind: str = "bernoulli"
    low: float = 0.0
    high: float = 1.0
    sd: float = 0.25
    drift_every: int | None = None
    means: list[list[float]] | None = None
    default_mean: float = 0.0

    def __post_init__(self):
        if self.kind not in ("bernoulli", "gaussian", "table"):
            raise ValueError(f"unknown reward law {self.kind!r}")
        if self.kind == "table" and not self.means:
            raise ValueError("table reward law needs means")
        if self.drift_every is not None and self.drift_every < 1:
            raise ValueError("drift_every must be >= 1")


@dataclass
class SimulationScenario:
    horizon: int
    traffic_per_trial: float
    pool_size: int
    article_lifetime: int
    num_segments: int
    segment_mix: list[float]
    reward_law: RewardLaw = field(default_factory=RewardLaw)

    def __post_init__(self):
        if isinstance(self.reward_law, dict):
            self.reward_law = RewardLaw(**self.reward_law)
        if min(self.horizon, self.pool_size, self.article_lifetime, self.num_segments) < 1:
            raise ValueError("horizon, pool_size, article_lifetime and num_segments must be >= 1")
        if self.traffic_per_trial <= 0:
            raise ValueError("traffic_per_trial must be positive")
        if len(self.segment_mix) != self.num_segments or abs(sum(self.segment_mix) - 1) > 1e-9:
            raise ValueError("segment_mix must have num_segments entries summing to 1")
        if self.reward_law.kind == "table" and len(self.reward_law.means) != self.num_segments:
            raise ValueError("table means need one row per segment")

    @classmethod
    def from_json(cls, obj: dict) -> "SimulationScenario":
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "SimulationScenario":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        return asdict(self)


def opposite_preference_scenario(horizon: int = 2000, traffic_per_trial: float = 5.0,
                                 pool_size: int = 10) -> SimulationScenario:
    """Two equally sized segments; segment 1 is rewarded only by item 0, segment 2 only by item 1.

    The remaining ``pool_size - 2`` items never pay off for anyone.
    """
    if pool_size < 2:
        raise ValueError("pool_size must be >= 2")
    means = [[1.0, 0.0], [0.0, 1.0]]
    law = RewardLaw(kind="table", means=means, default_mean=0.0)
    return SimulationScenario(horizon, traffic_per_trial, pool_size, horizon + 1, 2, [0.5, 0.5], law)


def drifting_scenario(horizon: int = 1000, drift_every: int | None = 50, traffic_per_trial: float = 20.0,
                      pool_size: int = 10, num_segments: int = 2) -> SimulationScenario:
    """Bernoulli rewards with uniform means, re-drawn every ``drift_every`` trials (None = stationary)."""
    law = RewardLaw(kind="bernoulli", drift_every=drift_every)
    return SimulationScenario(horizon, traffic_per_trial, pool_size, horizon + 1, num_segments,
                              [1.0 / num_segments] * num_segments, law)


class _World:
    def __init__(self, scenario: SimulationScenario, seed: int):
        self.sc = scenario
        streams = np.random.SeedSequence(seed).spawn(4)
        self.traffic_rng, self.world_rng, self.view_rng = (np.random.default_rng(s) for s in streams[:3])
        self.policy_seed = streams[3]
        self.births: dict[int, int] = {}
        self.means: dict[int, np.ndarray] = {}
        self.next_id = 0
        life, size = scenario.article_lifetime, scenario.pool_size
        for j in range(size):
            # stagger initial ages so expiries are spread over the lifetime;
            # a pool that outlives the horizon stays static
            self._add(-((j * life) // size) if life < scenario.horizon else 0)

    def _draw_means(self, item):
        law = self.sc.reward_law
        if law.kind == "table":
            return np.array([row[item] if item < len(row) else law.default_mean for row in law.means])
        return self.world_rng.uniform(law.low, law.high, size=self.sc.num_segments)

    def _add(self, birth):
        item = self.next_id
        self.next_id += 1
        self.births[item] = birth
        self.means[item] = self._draw_means(item)

    def advance(self, t: int) -> list[int]:
        life = self.sc.article_lifetime
        for item in [i for i, b in self.births.items() if b + life <= t]:
            del self.births[item]
            del self.means[item]
        while len(self.births) < self.sc.pool_size:
            self._add(t)
        law = self.sc.reward_law
        if law.drift_every and t > 0 and t % law.drift_every == 0 and law.kind != "table":
            for item in sorted(self.means):
                self.means[item] = self._draw_means(item)
        return sorted(self.births)

    def traffic(self) -> np.ndarray:
        n = self.traffic_rng.poisson(self.sc.traffic_per_trial)
        return self.traffic_rng.choice(self.sc.num_segments, size=n, p=self.sc.segment_mix) + 1

    def reward(self, segment: int, item: int, u: float) -> float:
        mean = self.means[item][segment - 1]
        if self.sc.reward_law.kind == "gaussian":
            return max(0.0, mean + self.sc.reward_law.sd * float(ndtri(min(max(u, 1e-12), 1 - 1e-12))))
        return 1.0 if u < mean else 0.0


class _Agent:
    def __init__(self, policy: str, window: float, epsilon: float, rng: np.random.Generator):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        self.policy = policy
        self.epsilon = epsilon
        self.rng = rng
        self.knowledge = BanditKnowledge(window, epsilon) if policy != "random" else None
        self.pending: list[RewardEvent] = []
        self._rankings: dict[Context, list] = {}

    def context(self, segment):
        return Context(int(segment), SIM_PLACEMENT) if self.policy == "contextual" else GLOBAL_CONTEXT

    def begin(self, t, pool):
        self.t, self.pool, self._rankings = t, pool, {}

    def choose(self, segment) -> int:
        if self.policy == "random":
            return random_policy(self.pool, 1, self.rng)[0]
        ctx = self.context(segment)
        ranking = self._rankings.get(ctx)
        if ranking is None:
            ranking = self._rankings[ctx] = greedy_ranking(self.knowledge, ctx, self.pool, now=self.t)
        return select_from_ranking(ranking, 1, self.epsilon, self.rng)[0]

    def observe(self, segment, item, reward):
        if self.knowledge is not None:
            self.pending.append(RewardEvent(self.context(segment), item, self.t, reward))

    def end(self):
        if self.knowledge is not None:
            self.knowledge.record_many(self.pending)
        self.pending = []


@dataclass
class EpisodeResult:
    cumulative_reward: float
    trace: np.ndarray
    views: int


def run_episode(scenario: SimulationScenario, policy: str, window: float = 100, epsilon: float = 0.1,
                seed: int = 0) -> EpisodeResult:
    world = _World(scenario, seed)
    agent = _Agent(policy, window, epsilon, np.random.default_rng(world.policy_seed))
    trace = np.zeros(scenario.horizon)
    views = 0
    for t in range(scenario.horizon):
        pool = world.advance(t)
        segments = world.traffic()
        uniforms = world.view_rng.random(len(segments))
        agent.begin(t, pool)
        total = 0.0
        for seg, u in zip(segments, uniforms):
            item = agent.choose(seg)
            r = world.reward(seg, item, u)
            agent.observe(seg, item, r)
            total += r
        agent.end()
        trace[t] = total
        views += len(segments)
    return EpisodeResult(float(trace.sum()), trace, views)


def repetition_seeds(seed: int, repetitions: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(repetitions)]


@dataclass
class SweepResult:
    grid: list[tuple[float, float]]
    rewards: np.ndarray  # candidates x repetitions
    seeds: list[int]

    @property
    def means(self) -> np.ndarray:
        return self.rewards.mean(axis=1)

    @property
    def stds(self) -> np.ndarray:
        return self.rewards.std(axis=1)

    @property
    def best_index(self) -> int:
        means = self.means
        return min(range(len(self.grid)), key=lambda i: (-means[i], self.grid[i][1], self.grid[i][0]))

    @property
    def best(self) -> tuple[float, float]:
        return self.grid[self.best_index]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["candidate_l", "candidate_eps", "mean", "std"])
        for (l, eps), m, s in zip(self.grid, self.means, self.stds):
            w.writerow([l, eps, repr(float(m)), repr(float(s))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"best": {"window": self.best[0], "epsilon": self.best[1]},
                "candidates": [{"window": l, "epsilon": e, "mean": float(m), "std": float(s)}
                               for (l, e), m, s in zip(self.grid, self.means, self.stds)],
                "seeds": self.seeds}


def sweep(scenario: SimulationScenario, grid: Sequence[tuple[float, float]], repetitions: int = 20,
          seed: int = 0, policy: str = "contextual") -> SweepResult:
    """Mean cumulative reward of every (window, epsilon) candidate.

    All candidates share the repetition seeds, which makes them pairwise comparable.
    """
    if not grid:
        raise ValueError("grid is empty")
    seeds = repetition_seeds(seed, repetitions)
    rewards = np.array([[run_episode(scenario, policy, l, eps, s).cumulative_reward for s in seeds]
                        for l, eps in grid])
    return SweepResult([(l, e) for l, e in grid], rewards, seeds)


def paired_pvalue(a: Sequence[float], b: Sequence[float], alternative: str = "greater") -> float:
    """Paired t-test p-value for ``a`` vs ``b`` (``greater``: a > b)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    diff = a - b
    if np.all(diff == diff[0]):
        # degenerate: no variance in the differences
        if alternative == "greater":
            return 0.0 if diff[0] > 0 else 1.0
        if alternative == "less":
            return 0.0 if diff[0] < 0 else 1.0
        return 0.0 if diff[0] != 0 else 1.0
    return float(sps.ttest_rel(a, b, alternative=alternative).pvalue)


@dataclass
class Variant:
    name: str
    policy: str
    window: float = 100
    epsilon: float = 0.1


@dataclass
class ABResult:
    variants: list[Variant]
    daily: dict[str, list[float]]
    views: dict[str, int]
    totals: dict[str, float]
    baseline: str

    @property
    def mean_daily(self) -> dict[str, float]:
        return {k: float(np.mean(v)) for k, v in self.daily.items()}

    @property
    def uplift(self) -> dict[str, float]:
        """Relative increase of the mean daily metric over the random baseline."""
        means = self.mean_daily
        base = means[self.baseline]
        return {k: (m - base) / base if base else float("nan") for k, m in means.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = [v.name for v in self.variants]
        w.writerow(["day"] + names)
        for d in range(len(self.daily[names[0]])):
            w.writerow([d] + [repr(self.daily[n][d]) for n in names])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"baseline": self.baseline, "variants": [asdict(v) for v in self.variants],
                "mean_daily": self.mean_daily, "uplift": self.uplift, "views": self.views, "totals": self.totals}


def ab_harness(scenario: SimulationScenario, variants: Sequence[Variant], horizon: int | None = None,
               seed: int = 0, trials_per_day: int = 100) -> ABResult:
    """Randomly split every view across variants, each learning independently.

    The daily metric of a variant is its mean reward per view that day.
    """
    baseline = next((v.name for v in variants if v.policy == "random"), None)
    if baseline is None:
        raise ValueError("variants must include a random baseline")
    if len({v.name for v in variants}) != len(variants):
        raise ValueError("variant names must be unique")
    horizon = scenario.horizon if horizon is None else horizon
    world = _World(scenario, seed)
    split_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(5)[4])
    policy_seeds = world.policy_seed.spawn(len(variants))
    agents = [_Agent(v.policy, v.window, v.epsilon, np.random.default_rng(s))
              for v, s in zip(variants, policy_seeds)]
    n_days = -(-horizon // trials_per_day)
    day_reward = np.zeros((len(variants), n_days))
    day_views = np.zeros((len(variants), n_days))
    for t in range(horizon):
        pool = world.advance(t)
        segments = world.traffic()
        uniforms = world.view_rng.random(len(segments))
        arms = split_rng.integers(len(variants), size=len(segments))
        for a in agents:
            a.begin(t, pool)
        day = t // trials_per_day
        for seg, u, arm in zip(segments, uniforms, arms):
            agent = agents[arm]
            item = agent.choose(seg)
            r = world.reward(seg, item, u)
            agent.observe(seg, item, r)
            day_reward[arm, day] += r
            day_views[arm, day] += 1
        for a in agents:
            a.end()
    metric = np.divide(day_reward, day_views, out=np.zeros_like(day_reward), where=day_views > 0)
    return ABResult(list(variants),
                    {v.name: metric[i].tolist() for i, v in enumerate(variants)},
                    {v.name: int(day_views[i].sum()) for i, v in enumerate(variants)},
                    {v.name: float(day_reward[i].sum()) for i, v in enumerate(variants)},
                    baseline)
