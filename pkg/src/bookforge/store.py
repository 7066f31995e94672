"""Crash-safe persistence: content-addressed blobs, run log, and step cache.

Everything lives under one data directory; no external database. The run log
and step caches are append-only JSONL so a crash can lose at most the line
being written, never a previously persisted record.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path
from typing import Any


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class BlobStore:
    """Content-addressed file store: identical bytes map to the identical ref."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, data: bytes, ext: str) -> str:
        digest = sha256_hex(data)
        ref = f"{digest}.{ext.lstrip('.')}"
        target = self.root / ref
        if not target.exists():
            tmp = target.with_suffix(target.suffix + ".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, target)
        return ref

    def get(self, ref: str) -> bytes:
        return (self.root / ref).read_bytes()

    def path(self, ref: str) -> Path:
        return self.root / ref

    def exists(self, ref: str) -> bool:
        return (self.root / ref).is_file()


class StepCache:
    """Idempotency cache for paid provider calls, one JSONL file per book.

    Keys that are present are never recomputed after a restart, which is what
    makes pipeline re-runs resume-safe and free of duplicate provider calls.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._entries: dict[str, Any] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                record = json.loads(line)
                self._entries[record["key"]] = record["value"]

    def __contains__(self, key: str) -> bool:
        with self._lock:
            return key in self._entries

    def get(self, key: str, default: Any = None) -> Any:
        with self._lock:
            return self._entries.get(key, default)

    def put(self, key: str, value: Any) -> None:
        line = json.dumps({"key": key, "value": value}, ensure_ascii=False)
        with self._lock:
            self._entries[key] = value
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def get_or_run(self, key: str, fn):
        """Return the cached value for key, computing and persisting it once."""
        with self._lock:
            if key in self._entries:
                return self._entries[key]
        value = fn()
        self.put(key, value)
        return value

    def keys(self) -> list[str]:
        with self._lock:
            return list(self._entries)


class RunLog:
    """Append-only JSONL of run snapshots; the latest line per book id wins."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, snapshot: dict) -> None:
        line = json.dumps(snapshot, ensure_ascii=False, sort_keys=True)
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def load_latest(self) -> dict[str, dict]:
        latest: dict[str, dict] = {}
        if not self.path.exists():
            return latest
        with self._lock:
            text = self.path.read_text(encoding="utf-8")
        for line in text.splitlines():
            if not line.strip():
                continue
            try:
                snapshot = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn tail write after a crash
            latest[snapshot["book_id"]] = snapshot
        return latest


class DataDir:
    """Layout of the on-disk state for one service or CLI invocation."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.blobs = BlobStore(self.root / "blobs")
        self.runs = RunLog(self.root / "runs.jsonl")

    def book_dir(self, book_id: str) -> Path:
        path = self.root / "books" / book_id
        path.mkdir(parents=True, exist_ok=True)
        return path

    def step_cache(self, book_id: str) -> StepCache:
        return StepCache(self.book_dir(book_id) / "steps.jsonl")

    def bundle_dir(self, book_id: str) -> Path:
        return self.book_dir(book_id) / "bundle"

    def bundle_zip(self, book_id: str) -> Path:
        return self.book_dir(book_id) / "bundle.zip"
