"""Line-delimited JSON storage with content-hash manifests.

Every pipeline stage writes its artifact as a JSONL file plus a sidecar
``<artifact>.manifest.json`` recording the record count, a sha256 of the
artifact bytes, and stage parameters.  Serialization is canonical (sorted
keys, compact separators, shortest-roundtrip floats) so re-running a stage
with unchanged inputs produces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import ManifestMismatchError, SchemaError

MANIFEST_SUFFIX = ".manifest.json"


def dumps_canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file + rename so failures never leave partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if tmp.exists():
            tmp.unlink()
        raise


def write_jsonl(path: str | Path, records: Iterable[dict]) -> int:
    lines = [dumps_canonical(r) for r in records]
    text = "".join(line + "\n" for line in lines)
    atomic_write_text(path, text)
    return len(lines)


def append_jsonl(path: str | Path, record: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as f:
        f.write(dumps_canonical(record) + "\n")


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}: line {lineno} is not valid JSON: {exc}") from exc


def manifest_path(artifact: str | Path) -> Path:
    artifact = Path(artifact)
    return artifact.with_name(artifact.name + MANIFEST_SUFFIX)


def write_manifest(artifact: str | Path, count: int, **params: Any) -> dict:
    payload = {"count": count, "sha256": sha256_file(artifact)}
    payload.update(params)
    atomic_write_text(manifest_path(artifact), dumps_canonical(payload) + "\n")
    return payload


def read_manifest(artifact: str | Path) -> dict | None:
    p = manifest_path(artifact)
    if not p.exists():
        return None
    with open(p, "r", encoding="utf-8") as f:
        return json.load(f)


def verify_manifest(artifact: str | Path, count: int | None = None) -> dict | None:
    """Check the sidecar manifest against the artifact; returns the manifest
    (or None when there is none).  Raises ManifestMismatchError on any
    disagreement."""
    manifest = read_manifest(artifact)
    if manifest is None:
        return None
    actual_hash = sha256_file(artifact)
    if manifest.get("sha256") != actual_hash:
        raise ManifestMismatchError(
            f"{artifact}: content hash {actual_hash[:12]}... does not match manifest"
        )
    if count is not None and manifest.get("count") != count:
        raise ManifestMismatchError(
            f"{artifact}: {count} records but manifest says {manifest.get('count')}"
        )
    return manifest
