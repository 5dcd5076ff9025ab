"""File-based, content-addressed catalog of adapted models.

Layout (all paths relative, so the directory can be moved)::

    <root>/index.json              entries + checksum
    <root>/models/<model_id>.json  canonical model serialization
    <root>/.lock                   advisory writer lock

``model_id`` is the SHA-256 of the artifact bytes, so identical models share
one entry and every read can be integrity-checked. Writes go to a temporary
file first and are renamed into place: artifact, then index. A crash at any
point leaves an index that references only complete artifacts.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable

from filelock import FileLock, Timeout

from .exceptions import CatalogError
from .mlp import Mlp

INDEX_VERSION = 1
ENV_ROOT = "IDS_ADAPT_CATALOG"


@dataclass
class CatalogEntry:
    model_id: str = ""
    subset_id: str = ""
    active_features: list[str] = field(default_factory=list)
    parent_id: str | None = None
    tags: dict[str, Any] = field(default_factory=dict)
    metrics: dict[str, Any] = field(default_factory=dict)
    artifact_path: str = ""
    created_at: str = ""

    @property
    def is_root(self) -> bool:
        return self.parent_id is None

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CatalogEntry":
        return cls(**d)


@dataclass
class QueryConstraints:
    max_memory_bytes: int | None = None
    max_latency_ns: float | None = None
    available_features: Iterable[str] | None = None
    min_global_accuracy: float | None = None
    max_historical_loss: float | None = None

    def admits(self, e: CatalogEntry) -> bool:
        m = e.metrics

        def within(key, limit, above=False):
            if limit is None:
                return True
            v = m.get(key)
            if v is None:
                return False
            return v >= limit if above else v <= limit

        if self.available_features is not None and not set(e.active_features) <= set(self.available_features):
            return False
        return (
            within("memory_bytes", self.max_memory_bytes)
            and within("mean_ns_per_sample", self.max_latency_ns)
            and within("global_accuracy", self.min_global_accuracy, above=True)
            and within("historical_loss", self.max_historical_loss)
        )


def rank_key(e: CatalogEntry):
    """Historical loss ascending, memory ascending, accuracy descending, then id."""
    inf = float("inf")
    m = e.metrics
    loss = m.get("historical_loss")
    mem = m.get("memory_bytes")
    acc = m.get("global_accuracy")
    return (inf if loss is None else loss, inf if mem is None else mem, -(acc if acc is not None else -inf), e.model_id)


def _checksum(entries: list[dict]) -> str:
    blob = json.dumps(entries, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Catalog:
    """Repository of models with feature-set, resource and accuracy metadata.

    Any number of readers may use the catalog concurrently; writers take an
    advisory lock. With ``lock_timeout=None`` writers wait for the lock, with
    ``0`` they fail fast with :class:`CatalogError`.
    """

    def __init__(self, root=None, lock_timeout: float | None = None):
        root = root or os.environ.get(ENV_ROOT)
        if not root:
            raise CatalogError(f"no catalog root given and ${ENV_ROOT} is not set")
        self.root = Path(root)
        self.models_dir = self.root / "models"
        self.index_path = self.root / "index.json"
        self.lock_timeout = -1 if lock_timeout is None else lock_timeout

    def _lock(self) -> FileLock:
        self.models_dir.mkdir(parents=True, exist_ok=True)
        return FileLock(str(self.root / ".lock"), timeout=self.lock_timeout)

    # index

    def entries(self) -> list[CatalogEntry]:
        if not self.index_path.exists():
            return []
        try:
            doc = json.loads(self.index_path.read_text(encoding="utf-8"))
            raw = doc["entries"]
            if doc.get("format_version") != INDEX_VERSION:
                raise CatalogError(f"unsupported index format_version {doc.get('format_version')!r}")
            if doc.get("checksum") != _checksum(raw):
                raise CatalogError(f"{self.index_path}: checksum mismatch, index is corrupt")
            entries = [CatalogEntry.from_dict(e) for e in raw]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CatalogError(f"{self.index_path}: unreadable index ({exc})") from exc
        for e in entries:
            if not (self.root / e.artifact_path).is_file():
                raise CatalogError(f"index references missing artifact {e.artifact_path}")
        return entries

    def _write_index(self, entries: list[CatalogEntry]) -> None:
        raw = [asdict(e) for e in entries]
        doc = {"format_version": INDEX_VERSION, "checksum": _checksum(raw), "entries": raw}
        _atomic_write(self.index_path, json.dumps(doc, indent=2, sort_keys=True).encode())

    # operations

    def put(
        self,
        model: Mlp,
        *,
        subset_id: str = "",
        active_features: Iterable[str] = (),
        parent_id: str | None = None,
        tags: dict[str, Any] | None = None,
        metrics: dict[str, Any] | None = None,
    ) -> str:
        """Store ``model`` and return its id; an already-stored model is a no-op."""
        model.validate()
        data = model.to_json().encode("utf-8")
        model_id = hashlib.sha256(data).hexdigest()
        try:
            with self._lock():
                entries = self.entries()
                if any(e.model_id == model_id for e in entries):
                    return model_id
                if parent_id is not None and not any(e.model_id == parent_id for e in entries):
                    raise CatalogError(f"unknown parent model {parent_id}")
                rel = f"models/{model_id}.json"
                _atomic_write(self.root / rel, data)
                entries.append(
                    CatalogEntry(
                        model_id=model_id,
                        subset_id=subset_id,
                        active_features=list(active_features),
                        parent_id=parent_id,
                        tags=dict(tags or {}),
                        metrics=dict(metrics or {}),
                        artifact_path=rel,
                        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
                    )
                )
                self._write_index(entries)
        except Timeout as exc:
            raise CatalogError(f"catalog {self.root} is locked by another writer") from exc
        return model_id

    def get(self, model_id: str) -> tuple[Mlp, CatalogEntry]:
        for e in self.entries():
            if e.model_id == model_id:
                data = (self.root / e.artifact_path).read_bytes()
                if hashlib.sha256(data).hexdigest() != model_id:
                    raise CatalogError(f"artifact {e.artifact_path} does not match its id")
                return Mlp.from_json(data.decode("utf-8")), e
        raise CatalogError(f"unknown model id {model_id}")

    def query(self, constraints: QueryConstraints | None = None) -> list[CatalogEntry]:
        constraints = constraints or QueryConstraints()
        return sorted((e for e in self.entries() if constraints.admits(e)), key=rank_key)

    def lineage(self, model_id: str) -> list[CatalogEntry]:
        """Entries from ``model_id`` back to its root."""
        by_id = {e.model_id: e for e in self.entries()}
        chain: list[CatalogEntry] = []
        cur = by_id.get(model_id)
        if cur is None:
            raise CatalogError(f"unknown model id {model_id}")
        while cur is not None:
            if len(chain) > len(by_id):
                raise CatalogError("lineage cycle in index")
            chain.append(cur)
            if cur.parent_id is None:
                return chain
            cur = by_id.get(cur.parent_id)
        raise CatalogError(f"lineage of {model_id} is broken")
