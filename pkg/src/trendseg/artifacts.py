"""On-disk artifacts and run manifests.

All writers are deterministic: JSON keys are sorted, floats use ``repr`` and
``phi.bin`` is little-endian float64, so equal inputs give equal bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .corpus import Vocabulary
from .errors import DataError, MissingArtifactError
from .profiles import Standardization, UserProfile
from .segments import Segmentation
from .topics import DocTopics, TopicModel

TOPICS_DIR = "topics"
PROFILES_DIR = "profiles"
SEGMENTS_DIR = "segments"
SIMULATION_DIR = "simulation"
INSIGHTS_DIR = "insights"
TREND_DIR = "trend"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def write_jsonl(path: Path, rows: Iterable[Mapping]) -> Path:
    return write_text(path, "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows))


def read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(path, producer)
    return path


def write_manifest(directory: Path, command: str, config: Mapping, config_digest: str, seed,
                   inputs: Mapping[str, str | None], outputs: Iterable[Path], extra: Mapping | None = None) -> Path:
    manifest = {
        "command": command,
        "config_sha256": config_digest,
        "config": config,
        "seed": seed,
        "inputs": {name: sha256_file(p) for name, p in sorted(inputs.items()) if p is not None},
        "outputs": {p.name: sha256_file(p) for p in sorted(outputs)},
    }
    if extra:
        manifest.update(extra)
    return write_text(manifest_path(directory, command), dump_json(manifest))


def manifest_path(directory: Path, command: str) -> Path:
    return directory / f"manifest-{command}.json"


def read_manifest(directory: Path, producer: str) -> dict:
    return json.loads(require(manifest_path(directory, producer), producer).read_text(encoding="utf-8"))


# -- topics ---------------------------------------------------------------


def save_topic_model(directory: Path, model: TopicModel, doc_topics: Iterable[DocTopics]) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "N": model.num_topics,
        "alpha": model.alpha,
        "beta": model.beta,
        "seed": model.seed,
        "vocabulary": {"terms": list(model.vocabulary.terms), "doc_freq": list(model.vocabulary.doc_freq)},
        "log_likelihood": model.log_likelihood,
    }
    paths = [write_text(directory / "model.json", dump_json(meta))]
    phi_path = directory / "phi.bin"
    phi_path.write_bytes(np.ascontiguousarray(model.phi, dtype="<f8").tobytes())
    paths.append(phi_path)
    paths.append(write_jsonl(directory / "theta.jsonl",
                             ({"article_id": d.article_id, "theta": d.theta.tolist()} for d in doc_topics)))
    return paths


def load_topic_model(directory: Path) -> TopicModel:
    meta = json.loads(require(directory / "model.json", "train-topics").read_text(encoding="utf-8"))
    vocab = Vocabulary(tuple(meta["vocabulary"]["terms"]), tuple(meta["vocabulary"]["doc_freq"]))
    raw = require(directory / "phi.bin", "train-topics").read_bytes()
    phi = np.frombuffer(raw, dtype="<f8").reshape(meta["N"], len(vocab)).astype(np.float64)
    return TopicModel(meta["N"], phi, meta["alpha"], meta["beta"], vocab, meta.get("seed"),
                      meta.get("log_likelihood", []))


def load_doc_topics(directory: Path) -> list[DocTopics]:
    rows = read_jsonl(require(directory / "theta.jsonl", "train-topics"))
    return [DocTopics(r["article_id"], np.array(r["theta"], dtype=np.float64)) for r in rows]


# -- profiles -------------------------------------------------------------


def save_profiles(directory: Path, profiles: Iterable[UserProfile], stats: Standardization) -> list[Path]:
    rows = ({"user_id": p.user_id, "theta": p.theta.tolist(), "raw_theta": p.raw_theta.tolist(),
             "pageviews": p.pageviews} for p in profiles)
    return [write_jsonl(directory / "profiles.jsonl", rows),
            write_text(directory / "standardization.json", dump_json(stats.to_json()))]


def load_profiles(directory: Path) -> tuple[list[UserProfile], Standardization]:
    rows = read_jsonl(require(directory / "profiles.jsonl", "build-profiles"))
    stats = Standardization.from_json(json.loads(
        require(directory / "standardization.json", "build-profiles").read_text(encoding="utf-8")))
    profiles = [UserProfile(r["user_id"], np.array(r["theta"]), np.array(r["raw_theta"]), r.get("pageviews", 0))
                for r in rows]
    if not profiles:
        raise DataError(f"{directory / 'profiles.jsonl'} holds no profiles")
    return profiles, stats


# -- segments -------------------------------------------------------------


def save_segmentation(directory: Path, seg: Segmentation) -> list[Path]:
    return [write_text(directory / "segments.json", dump_json(seg.to_json())),
            write_jsonl(directory / "assignments.jsonl",
                        ({"user_id": u, "segment": s} for u, s in sorted(seg.assignments.items())))]


def load_segmentation(directory: Path) -> Segmentation:
    obj = json.loads(require(directory / "segments.json", "segment").read_text(encoding="utf-8"))
    rows = read_jsonl(require(directory / "assignments.jsonl", "segment"))
    return Segmentation.from_json(obj, {r["user_id"]: int(r["segment"]) for r in rows})
