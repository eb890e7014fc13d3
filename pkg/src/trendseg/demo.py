"""Synthetic fixture corpus: themed articles, users with theme preferences, views.

``python -m trendseg.demo OUTDIR`` writes articles.jsonl, events.jsonl,
stopwords.txt, lemmas.tsv, scenario.json and config.json into OUTDIR.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
from pathlib import Path

import numpy as np

THEMES = {
    "sports": "goal match coach player league stadium referee striker keeper season trophy derby "
              "penalty transfer midfielder tournament champion medal sprint rally",
    "politics": "minister parliament election senator ballot coalition opposition treaty cabinet "
                "president campaign reform court prosecutor mayor deputy vote summit policy",
    "business": "market shares investor profit revenue merger inflation bank interest bond "
                "startup retail price export factory dividend budget tax economy growth",
    "culture": "actress album concert festival gallery novel director premiere oscar singer "
               "theatre museum painter film orchestra poet dancer stage award",
    "travel": "island beach hotel flight mountain resort cruise hiking passport museum lake "
              "coast villa airport tourist ferry camping valley canyon desert",
}
FILLER = "news today people time year report story week said later".split()
STOPWORDS = ["the", "and", "for", "with", "that", "this", "from", "was", "are"]
LEMMAS = [("goals", "goal"), ("matches", "match"), ("elections", "election"), ("markets", "market"),
          ("albums", "album"), ("islands", "island"), ("hotels", "hotel"), ("hotels", "hostel")]
START = dt.datetime(2019, 2, 15, tzinfo=dt.timezone.utc).timestamp()
DAY = 86400


def generate(outdir, seed: int = 0, n_articles: int = 300, n_users: int = 240, days: int = 21) -> dict:
    rng = np.random.default_rng(seed)
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    names = sorted(THEMES)
    words = {t: THEMES[t].split() for t in names}
    inflect = {lemma: surface for surface, lemma in LEMMAS[:-1]}
    articles = []
    for i in range(n_articles):
        theme = names[i % len(names)]
        toks = list(rng.choice(words[theme], size=40))
        toks = [inflect.get(w, w) if rng.random() < 0.3 else w for w in toks]
        toks += list(rng.choice(FILLER, size=8)) + list(rng.choice(STOPWORDS, size=6))
        rng.shuffle(toks)
        published = START + float(rng.integers(0, days * DAY))
        articles.append({"id": f"a{i:04d}", "title": f"{theme.capitalize()} story {i}",
                         "text": " ".join(toks).capitalize() + ".", "section": theme,
                         "published_at": int(published)})
    by_theme = {t: [a for a in articles if a["section"] == t] for t in names}
    events = []
    for u in range(n_users):
        prefs = rng.choice(len(names), size=2, replace=False)
        n_views = int(rng.integers(1, 16))
        for _ in range(n_views):
            theme = names[prefs[0] if rng.random() < 0.7 else prefs[1]]
            art = by_theme[theme][int(rng.integers(len(by_theme[theme])))]
            ts = max(art["published_at"], START + float(rng.integers(0, days * DAY)))
            events.append({"user_id": f"u{u:04d}", "article_id": art["id"], "timestamp": int(ts),
                           "placement": "home", "dwell_seconds": int(rng.integers(5, 400)),
                           "bounce": bool(rng.random() < 0.2)})
    events.sort(key=lambda e: (e["timestamp"], e["user_id"]))
    _write_jsonl(out / "articles.jsonl", articles)
    _write_jsonl(out / "events.jsonl", events)
    (out / "stopwords.txt").write_text("\n".join(STOPWORDS) + "\n", encoding="utf-8")
    (out / "lemmas.tsv").write_text("".join(f"{s}\t{l}\n" for s, l in LEMMAS), encoding="utf-8")
    scenario = {"horizon": 600, "traffic_per_trial": 10, "pool_size": 10, "article_lifetime": 100,
                "num_segments": 3, "segment_mix": [0.5, 0.3, 0.2],
                "reward_law": {"kind": "bernoulli", "drift_every": 100}}
    (out / "scenario.json").write_text(json.dumps(scenario, indent=2) + "\n", encoding="utf-8")
    last_day = dt.datetime.fromtimestamp(START + (days - 1) * DAY, tz=dt.timezone.utc).date()
    config = {
        "paths": {"articles": "articles.jsonl", "events": "events.jsonl", "stopwords": "stopwords.txt",
                  "lemmas": "lemmas.tsv", "artifacts": "artifacts"},
        "topics": {"num_topics": 5, "iterations": 150, "seed": seed, "min_doc_count": 5,
                   "max_doc_fraction": 0.5},
        "profiles": {"window_days": 14, "as_of": last_day.isoformat()},
        "segments": {"k": 4, "seed": seed},
        "bandit": {"window": 3600, "epsilon": 0.1, "ttl": 30, "list_len": 5, "item_lifetime_days": 30},
        "simulation": {"scenario": "scenario.json", "windows": [10, 50, 200], "epsilons": [0.1],
                       "repetitions": 3, "seed": seed, "trials_per_day": 100},
        "insights": {"history_days": 7, "top_n": 3},
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return config


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("outdir")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    generate(args.outdir, args.seed)
    print(f"wrote demo inputs to {args.outdir}")


if __name__ == "__main__":
    main()
