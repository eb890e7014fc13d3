import csv
import datetime as dt
import io
import json
import statistics
import sys

import pytest

from trendseg import artifacts as art
from trendseg.cli import main
from trendseg.demo import generate

PIPELINE = ["train-topics", "build-profiles", "segment", "describe-segments"]


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    generate(root, seed=0)
    cfg = root / "config.json"
    for cmd in PIPELINE:
        assert main(["-c", str(cfg), cmd]) == 0, cmd
    return root, cfg


def _run(cfg, *args):
    return main(["-c", str(cfg), *args])


def test_pipeline_artifacts_and_manifests(demo):
    root, _ = demo
    arts = root / "artifacts"
    for rel in ["topics/model.json", "topics/phi.bin", "topics/theta.jsonl", "profiles/profiles.jsonl",
                "profiles/standardization.json", "segments/segments.json", "segments/assignments.jsonl",
                "segments/descriptions.txt"]:
        assert (arts / rel).exists(), rel
    manifest = json.loads((arts / "segments" / "manifest-segment.json").read_text())
    assert manifest["outputs"]["segments.json"] == art.sha256_file(arts / "segments" / "segments.json")
    assert set(manifest["inputs"]) == {"profiles", "phi"}
    assert manifest["config"]["segments"]["k"] == 4
    assignments = [json.loads(l) for l in (arts / "segments" / "assignments.jsonl").read_text().splitlines()]
    assert {a["segment"] for a in assignments} == {1, 2, 3, 4}


def test_missing_upstream_names_producer(tmp_path, capsys):
    generate(tmp_path, seed=1)
    assert _run(tmp_path / "config.json", "segment") == 2
    assert "build-profiles" in capsys.readouterr().err


def test_usage_errors(demo, capsys):
    _, cfg = demo
    assert main(["-c", str(cfg), "nonsense"]) == 1
    assert main(["-c", str(cfg), "insights"]) == 1
    assert main(["-c", str(cfg), "insights", "--day", "yesterday"]) == 1
    assert main(["-c", str(cfg), "trend", "--topic", "99"]) == 1
    assert main(["-c", "/nonexistent/config.json", "segment"]) == 1


def test_variant_mismatch_is_data_error(demo, capsys):
    _, cfg = demo
    assert _run(cfg, "segment", "--variant", "hot") == 2
    assert "re-run `build-profiles`" in capsys.readouterr().err


def test_unknown_section_is_data_error(tmp_path):
    generate(tmp_path, seed=2)
    assert _run(tmp_path / "config.json", "train-topics", "--variant", "site", "--section", "weather") == 2


def test_site_variant_pipeline(tmp_path):
    generate(tmp_path, seed=3)
    cfg = tmp_path / "config.json"
    data = json.loads(cfg.read_text())
    data["segments"]["k"] = 2
    cfg.write_text(json.dumps(data))
    for cmd in ["train-topics", "build-profiles", "segment"]:
        assert _run(cfg, cmd, "--variant", "site", "--section", "sports") == 0
    seg = json.loads((tmp_path / "artifacts" / "segments" / "segments.json").read_text())
    assert seg["variant"] == "site_specific" and seg["section"] == "sports"
    theta_ids = {json.loads(l)["article_id"] for l in
                 (tmp_path / "artifacts" / "topics" / "theta.jsonl").read_text().splitlines()}
    sections = {json.loads(l)["id"]: json.loads(l)["section"] for l in
                (tmp_path / "articles.jsonl").read_text().splitlines()}
    assert {sections[a] for a in theta_ids} == {"sports"}


def test_trend_matches_independent_recompute(demo):
    root, cfg = demo
    assert _run(cfg, "trend", "--topic", "1") == 0
    rows = list(csv.DictReader(io.StringIO((root / "artifacts" / "trend" / "trend-topic-1.csv").read_text())))
    thetas = {json.loads(l)["article_id"]: json.loads(l)["theta"][1]
              for l in (root / "artifacts" / "topics" / "theta.jsonl").read_text().splitlines()}
    by_day = {}
    for line in (root / "articles.jsonl").read_text().splitlines():
        a = json.loads(line)
        if a["id"] in thetas:
            day = dt.datetime.fromtimestamp(a["published_at"], tz=dt.timezone.utc).date().isoformat()
            by_day.setdefault(day, []).append(thetas[a["id"]])
    means = {d: statistics.fmean(v) for d, v in by_day.items()}
    mu, sd = statistics.fmean(means.values()), statistics.pstdev(means.values())
    assert {r["day"] for r in rows if r["value"]} == set(means)
    assert [r["day"] for r in rows] == sorted(r["day"] for r in rows)
    for r in rows:
        if r["day"] in means:
            assert float(r["value"]) == pytest.approx((means[r["day"]] - mu) / sd, abs=1e-9)
        else:
            assert r["value"] == ""


def test_insights_report(demo, capsys):
    root, cfg = demo
    assert _run(cfg, "insights", "--day", "2019-03-06") == 0
    out = capsys.readouterr().out
    doc = json.loads((root / "artifacts" / "insights" / "insights-2019-03-06.json").read_text())
    assert doc["day"] == "2019-03-06"
    text = (root / "artifacts" / "insights" / "insights-2019-03-06.txt").read_text()
    assert text == out
    for ins in doc["insights"]:
        assert 1 <= ins["segment"] <= 4


def test_simulation_commands(demo, capsys):
    root, cfg = demo
    assert _run(cfg, "simulate-sweep") == 0
    sweep_csv = (root / "artifacts" / "simulation" / "sweep.csv").read_text().splitlines()
    assert sweep_csv[0] == "candidate_l,candidate_eps,mean,std" and len(sweep_csv) == 4
    assert _run(cfg, "simulate-ab") == 0
    out = capsys.readouterr().out
    assert "contextual" in out and "random\t+0.0%" in out


def test_serve_protocol(demo, monkeypatch, capsys):
    root, cfg = demo
    user = json.loads((root / "artifacts" / "segments" / "assignments.jsonl").read_text().splitlines()[0])
    now = dt.datetime(2019, 3, 7, 12, tzinfo=dt.timezone.utc).timestamp()
    monkeypatch.setattr(sys, "stdin", io.StringIO(f"RESOLVE {user['user_id']} home\nRESOLVE nobody home\n"))
    assert _run(cfg, "serve", "--now", str(now)) == 0
    first, second = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert first["segment"] == user["segment"] and len(first["items"]) == 5
    assert second["segment"] == 0 and second["cache_state"] == "miss"
