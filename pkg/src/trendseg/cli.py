"""Command line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data error (including a missing
upstream artifact), 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import logging
import sys
import time
from pathlib import Path

from . import artifacts as art
from .bandit import BanditKnowledge, ItemPool
from .config import VARIANT_ALIASES, ConfigError, PipelineConfig, load_config
from .corpus import build_corpus, ingest_articles, ingest_events, load_lemmas, load_stopwords
from .errors import DataError
from .insights import build_insights, render_report, score_events
from .profiles import DAY_SECONDS, build_profiles
from .segments import (describe_segment, profile_events, profile_window, segment_profiles,
                       select_topic_articles)
from .serving import ServingEngine, serve_lines
from .simulator import SimulationScenario, Variant, ab_harness, sweep
from .topics import daily_topic_trend, train_lda, utc_day

logger = logging.getLogger("trendseg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class Run:
    """Loaded config plus lazily read inputs shared by the commands."""

    def __init__(self, cfg: PipelineConfig, config_path: Path):
        self.cfg = cfg
        self.config_path = config_path
        self.root = Path(cfg.paths.artifacts)
        self._articles = None
        self._events = None

    def dir(self, name) -> Path:
        return self.root / name

    def input_path(self, key) -> Path:
        val = getattr(self.cfg.paths, key)
        if val is None:
            raise ConfigError(f"paths.{key} is not configured")
        path = Path(val)
        if not path.exists():
            raise DataError(f"input file {path} (paths.{key}) does not exist")
        return path

    @property
    def articles(self):
        if self._articles is None:
            self._articles, _ = ingest_articles(self.input_path("articles"))
        return self._articles

    @property
    def events(self):
        if self._events is None:
            self._events, _ = ingest_events(self.input_path("events"), (a.id for a in self.articles))
        return self._events

    def optional(self, key):
        val = getattr(self.cfg.paths, key)
        return Path(val) if val else None

    def window(self):
        pc = self.cfg.profiles
        return profile_window(self.events, pc.window_days, pc.as_of)

    def manifest(self, directory, command, seed, inputs, outputs, extra=None):
        art.write_manifest(directory, command, self.cfg.to_json(), self.cfg.digest(), seed,
                           inputs, outputs, extra)


def _apply_variant_flags(cfg, args):
    if getattr(args, "variant", None):
        cfg.segments.variant = VARIANT_ALIASES[args.variant]
    if getattr(args, "section", None):
        cfg.segments.section = args.section
    cfg.validate()


def _inputs(run, *keys):
    return {k: run.optional(k) for k in keys}


def cmd_train_topics(run: Run, args) -> None:
    cfg = run.cfg
    tc, sc = cfg.topics, cfg.segments
    stop = load_stopwords(run.optional("stopwords"))
    lemmas = load_lemmas(run.optional("lemmas"))
    needs_events = sc.variant == "hot_topics"
    events = run.events if needs_events else []
    window = run.window() if needs_events else (0.0, 1.0)
    chosen = select_topic_articles(sc.variant, run.articles, events, window, sc.section)
    corpus = build_corpus(chosen, stop, lemmas, tc.min_doc_count, tc.max_doc_fraction)
    model, doc_topics = train_lda(corpus, tc.num_topics, tc.alpha, tc.beta, tc.iterations, tc.seed)
    out = run.dir(art.TOPICS_DIR)
    paths = art.save_topic_model(out, model, doc_topics)
    run.manifest(out, "train-topics", tc.seed,
                 _inputs(run, "articles", "stopwords", "lemmas", *(["events"] if needs_events else [])), paths,
                 {"variant": sc.variant, "section": sc.section, "documents": len(corpus),
                  "dropped_empty": corpus.dropped_empty})
    print(f"trained {model.num_topics} topics on {len(corpus)} documents, V={len(corpus.vocabulary)} -> {out}")


def _check_variant(run, directory, producer):
    manifest = art.read_manifest(directory, producer)
    sc = run.cfg.segments
    if manifest.get("variant") != sc.variant or (sc.variant == "site_specific" and manifest.get("section") != sc.section):
        raise DataError(f"{producer} artifact was built for variant {manifest.get('variant')!r}"
                        f" (section {manifest.get('section')!r}); re-run `{producer}` with the same variant")
    return manifest


def cmd_build_profiles(run: Run, args) -> None:
    topics_dir = run.dir(art.TOPICS_DIR)
    _check_variant(run, topics_dir, "train-topics")
    doc_topics = art.load_doc_topics(topics_dir)
    sc, pc = run.cfg.segments, run.cfg.profiles
    window = run.window()
    if sc.variant == "site_specific":
        evs = profile_events(sc.variant, run.events, [a for a in run.articles if a.section == sc.section])
    else:
        evs = run.events
    profiles, stats, unresolved = build_profiles(evs, {d.article_id: d.theta for d in doc_topics}, window,
                                                 pc.min_articles_score)
    out = run.dir(art.PROFILES_DIR)
    paths = art.save_profiles(out, profiles, stats)
    run.manifest(out, "build-profiles", None, {"events": run.optional("events"),
                                               "theta": topics_dir / "theta.jsonl"}, paths,
                 {"variant": sc.variant, "section": sc.section, "window": list(window),
                  "unresolved_users": unresolved})
    print(f"built {len(profiles)} profiles -> {out}")


def cmd_segment(run: Run, args) -> None:
    topics_dir, profiles_dir = run.dir(art.TOPICS_DIR), run.dir(art.PROFILES_DIR)
    _check_variant(run, profiles_dir, "build-profiles")
    _check_variant(run, topics_dir, "train-topics")
    profiles, stats = art.load_profiles(profiles_dir)
    model = art.load_topic_model(topics_dir)
    sc = run.cfg.segments
    seg = segment_profiles(profiles, stats, model, run.cfg, sc.variant,
                           sc.section if sc.variant == "site_specific" else None)
    out = run.dir(art.SEGMENTS_DIR)
    paths = art.save_segmentation(out, seg)
    run.manifest(out, "segment", sc.seed, {"profiles": profiles_dir / "profiles.jsonl",
                                           "phi": topics_dir / "phi.bin"}, paths,
                 {"variant": sc.variant, "section": sc.section})
    print(f"segmented {len(seg.assignments)} users into {seg.k} segments -> {out}")


def cmd_describe_segments(run: Run, args) -> None:
    seg_dir, topics_dir = run.dir(art.SEGMENTS_DIR), run.dir(art.TOPICS_DIR)
    seg = art.load_segmentation(seg_dir)
    model = art.load_topic_model(topics_dir)
    sizes = seg.sizes()
    lines = [f"variant: {seg.variant}" + (f" (section {seg.section})" if seg.section else "")]
    for k in range(1, seg.k + 1):
        descs = describe_segment(seg, k, model)
        words = " | ".join(str(d) for d in descs) if descs else "(no distinctive topics)"
        lines.append(f"{k}\t{sizes[k]}\t{words}")
    text = "\n".join(lines) + "\n"
    path = art.write_text(seg_dir / "descriptions.txt", text)
    run.manifest(seg_dir, "describe-segments", None, {"segments": seg_dir / "segments.json",
                                                      "phi": topics_dir / "phi.bin"}, [path])
    sys.stdout.write(text)


def _scenario(run):
    path = run.cfg.simulation.scenario
    if not path:
        raise ConfigError("simulation.scenario is not configured")
    if not Path(path).exists():
        raise DataError(f"scenario file {path} does not exist")
    return Path(path), SimulationScenario.load(path)


def cmd_simulate_sweep(run: Run, args) -> None:
    sim = run.cfg.simulation
    path, scenario = _scenario(run)
    grid = [(l, e) for e in sim.epsilons for l in sim.windows]
    result = sweep(scenario, grid, sim.repetitions, sim.seed)
    out = run.dir(art.SIMULATION_DIR)
    paths = [art.write_text(out / "sweep.csv", result.to_csv()),
             art.write_text(out / "sweep.json", art.dump_json(result.to_json()))]
    run.manifest(out, "simulate-sweep", sim.seed, {"scenario": path}, paths)
    l, e = result.best
    print(f"best window={l} epsilon={e} -> {out}")


def cmd_simulate_ab(run: Run, args) -> None:
    sim = run.cfg.simulation
    path, scenario = _scenario(run)
    variants = [Variant(**v) for v in sim.ab_variants]
    result = ab_harness(scenario, variants, seed=sim.seed, trials_per_day=sim.trials_per_day)
    out = run.dir(art.SIMULATION_DIR)
    paths = [art.write_text(out / "ab.csv", result.to_csv()),
             art.write_text(out / "ab.json", art.dump_json(result.to_json()))]
    run.manifest(out, "simulate-ab", sim.seed, {"scenario": path}, paths)
    for name, up in result.uplift.items():
        print(f"{name}\t{up * 100:+.1f}%")


def cmd_serve(run: Run, args) -> None:
    seg = art.load_segmentation(run.dir(art.SEGMENTS_DIR))
    bc = run.cfg.bandit
    life = bc.item_lifetime_days * DAY_SECONDS
    pool = ItemPool({a.id: (a.published_at, a.published_at + life) for a in run.articles})
    engine = ServingEngine(seg.assignments, BanditKnowledge(bc.window, bc.epsilon), pool,
                           bc.list_len, bc.ttl, bc.seed)
    clock = (lambda: args.now) if args.now is not None else time.time
    try:
        serve_lines(engine, sys.stdin, sys.stdout, clock)
    finally:
        engine.close()


def cmd_insights(run: Run, args) -> None:
    try:
        day = dt.date.fromisoformat(args.day)
    except ValueError as exc:
        raise UsageError(f"--day must be YYYY-MM-DD: {exc}") from exc
    seg_dir = run.dir(art.SEGMENTS_DIR)
    seg = art.load_segmentation(seg_dir)
    ic = run.cfg.insights
    scored = score_events(run.events)
    insights = build_insights(scored, seg.assignments, seg.descriptions, seg.sizes(),
                              {a.id: a for a in run.articles}, day, ic.history_days, ic.top_n)
    text, doc = render_report(insights, day)
    out = run.dir(art.INSIGHTS_DIR)
    paths = [art.write_text(out / f"insights-{day.isoformat()}.txt", text),
             art.write_text(out / f"insights-{day.isoformat()}.json", doc)]
    run.manifest(out, "insights", None, {"events": run.optional("events"), "articles": run.optional("articles"),
                                         "assignments": seg_dir / "assignments.jsonl"}, paths,
                 {"day": day.isoformat()})
    sys.stdout.write(text)


def trend_csv(series) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["day", "value"])
    for day, val in series:
        w.writerow([day.isoformat(), "" if val is None else repr(float(val))])
    return buf.getvalue()


def cmd_trend(run: Run, args) -> None:
    topics_dir = run.dir(art.TOPICS_DIR)
    doc_topics = art.load_doc_topics(topics_dir)
    model = art.load_topic_model(topics_dir)
    if not 0 <= args.topic < model.num_topics:
        raise UsageError(f"--topic must be in [0, {model.num_topics})")
    by_id = {a.id: a for a in run.articles}
    days = [utc_day(by_id[d.article_id].published_at) for d in doc_topics if d.article_id in by_id]
    if not days:
        raise DataError("no topic mixtures match the article collection")
    start = dt.date.fromisoformat(args.start) if args.start else min(days)
    end = dt.date.fromisoformat(args.end) if args.end else max(days)
    series = daily_topic_trend(doc_topics, by_id, args.topic, start, end)
    out = run.dir(art.TREND_DIR)
    path = art.write_text(out / f"trend-topic-{args.topic}.csv", trend_csv(series))
    run.manifest(out, f"trend-{args.topic}", None, {"theta": topics_dir / "theta.jsonl",
                                                    "articles": run.optional("articles")}, [path])
    print(f"wrote {path}")


COMMANDS = {
    "train-topics": cmd_train_topics,
    "build-profiles": cmd_build_profiles,
    "segment": cmd_segment,
    "describe-segments": cmd_describe_segments,
    "simulate-sweep": cmd_simulate_sweep,
    "simulate-ab": cmd_simulate_ab,
    "serve": cmd_serve,
    "insights": cmd_insights,
    "trend": cmd_trend,
}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="trendseg", description="Topic-based user segmentation and contextual bandit pipeline")
    ap.add_argument("-c", "--config", default="config.json", help="pipeline config (JSON)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name in ("train-topics", "build-profiles", "segment"):
            p.add_argument("--variant", choices=sorted(VARIANT_ALIASES))
            p.add_argument("--section")
        if name == "insights":
            p.add_argument("--day", required=True)
        if name == "trend":
            p.add_argument("--topic", type=int, required=True)
            p.add_argument("--start")
            p.add_argument("--end")
        if name == "serve":
            p.add_argument("--now", type=float, help="fixed clock (epoch seconds) instead of wall time")
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config_path = Path(args.config)
        cfg = load_config(config_path)
        _apply_variant_flags(cfg, args)
        COMMANDS[args.command](Run(cfg, config_path), args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - last-resort guard
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
