"""On-disk catalog: JSON-lines records and links plus a run manifest.

Layout::

    <dir>/meta.json          version, thresholds, input digests
    <dir>/records.jsonl      one DeviceRecord per line
    <dir>/links.jsonl        one LinkResult per line
    <dir>/captures/<sha256>.pcap   copies of every ingested capture
    <dir>/.lock              held by the single writer
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Iterable

from macrand import __version__
from macrand.classify import DeviceRecord
from macrand.derandomize import LinkResult


class CatalogLocked(RuntimeError):
    pass


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    return [json.loads(l) for l in path.read_text(encoding="utf-8").splitlines() if l.strip()]


class CatalogStore:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock_fd: int | None = None

    @property
    def records_path(self) -> Path:
        return self.path / "records.jsonl"

    @property
    def links_path(self) -> Path:
        return self.path / "links.jsonl"

    @property
    def meta_path(self) -> Path:
        return self.path / "meta.json"

    @property
    def captures_dir(self) -> Path:
        return self.path / "captures"

    def exists(self) -> bool:
        return self.meta_path.exists()

    def lock(self) -> "CatalogStore":
        self.path.mkdir(parents=True, exist_ok=True)
        try:
            self._lock_fd = os.open(self.path / ".lock", os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise CatalogLocked(f"{self.path} is locked by another writer (remove .lock if stale)") from None
        os.write(self._lock_fd, str(os.getpid()).encode())
        return self

    def unlock(self) -> None:
        if self._lock_fd is not None:
            os.close(self._lock_fd)
            (self.path / ".lock").unlink(missing_ok=True)
            self._lock_fd = None

    def __enter__(self):
        return self.lock()

    def __exit__(self, *exc):
        self.unlock()

    def meta(self) -> dict:
        if not self.meta_path.exists():
            return {"version": __version__, "inputs": [], "thresholds": {}}
        return json.loads(self.meta_path.read_text(encoding="utf-8"))

    def write_meta(self, meta: dict) -> None:
        meta = dict(meta)
        meta["version"] = __version__
        tmp = self.meta_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        os.replace(tmp, self.meta_path)

    def add_capture(self, src: str | Path, digest: str) -> Path:
        self.captures_dir.mkdir(parents=True, exist_ok=True)
        dst = self.captures_dir / f"{digest}.pcap"
        if not dst.exists():
            tmp = dst.with_suffix(".tmp")
            tmp.write_bytes(Path(src).read_bytes())
            os.replace(tmp, dst)
        return dst

    def capture_paths(self) -> list[tuple[str, Path]]:
        return [(i["sha256"], self.captures_dir / f"{i['sha256']}.pcap") for i in self.meta().get("inputs", [])]

    def records(self) -> list[DeviceRecord]:
        return [DeviceRecord.from_json(d) for d in _read_jsonl(self.records_path)]

    def write_records(self, records: Iterable[DeviceRecord]) -> None:
        _write_jsonl(self.records_path, (r.to_json() for r in sorted(records, key=lambda r: r.key)))

    def links(self) -> list[LinkResult]:
        return [LinkResult.from_json(d) for d in _read_jsonl(self.links_path)]

    def write_links(self, links: Iterable[LinkResult]) -> None:
        def order(l: LinkResult):
            return (l.method.value, str(l.global_mac), l.capture or "", sorted(str(a) for a in l.randomized))
        _write_jsonl(self.links_path, (l.to_json() for l in sorted(links, key=order)))
