"""UUID-E computation and a precomputed reverse table (UUID-E -> MAC).

File layout, all integers little-endian::

    0   8  magic b"DRNDUUID"
    8   4  version
    12  4  OUI count
    16  8  record count
    24  1  suffix bits per OUI (24 for a full table)
    25  3  suffix base (the fixed high bits of a partial suffix space)
    28  4  zero
    32     OUI list, 3 bytes each, zero padded to an 8-byte boundary
    ...    records: uuid_e (16) || mac (6), sorted ascending by uuid_e
"""

from __future__ import annotations

import errno
import hashlib
import heapq
import mmap
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from macrand.address import MacAddress, format_prefix

# wpa_supplicant's uuid_gen_mac_addr() namespace
UUID_E_NAMESPACE = bytes.fromhex("526480f8c99b4be5a65558ed5f5d6084")

MAGIC = b"DRNDUUID"
VERSION = 1
HEADER = struct.Struct("<8sIIQB3s4x")
RECORD_SIZE = 22
UUID_SIZE = 16

# example value from wpa_supplicant.conf, shipped unchanged in some firmware
DEGENERATE_UUIDS = frozenset({bytes.fromhex("123456789abcdef0123456789abcdef0")})


class RainbowError(Exception):
    pass


class CorruptTable(RainbowError):
    pass


class DiskFull(RainbowError):
    pass


class InterruptedBuild(RainbowError):
    def __init__(self, parts_dir: Path, done: list[bytes]):
        super().__init__(f"build interrupted; {len(done)} OUI part files kept in {parts_dir}")
        self.parts_dir = parts_dir
        self.done = done


def uuid_e(mac: MacAddress | bytes) -> bytes:
    """Version-5 style UUID: SHA-1(namespace || mac), version and variant forced."""
    raw = mac.raw if isinstance(mac, MacAddress) else bytes(mac)
    h = bytearray(hashlib.sha1(UUID_E_NAMESPACE + raw).digest()[:16])
    h[6] = 0x50 | (h[6] & 0x0F)
    h[8] = 0x80 | (h[8] & 0x3F)
    return bytes(h)


def is_degenerate(uuid: bytes) -> bool:
    return uuid in DEGENERATE_UUIDS


def _suffix_range(suffix_bits: int, suffix_base: int) -> range:
    if not 1 <= suffix_bits <= 24:
        raise ValueError("suffix_bits must be in 1..24")
    start = (suffix_base << suffix_bits) & 0xFFFFFF
    return range(start, start + (1 << suffix_bits))


def _oui_records(oui: bytes, suffix_bits: int, suffix_base: int) -> bytes:
    rng = _suffix_range(suffix_bits, suffix_base)
    n = len(rng)
    buf = np.empty((n, RECORD_SIZE), dtype=np.uint8)
    sha = hashlib.sha1(UUID_E_NAMESPACE).copy
    for i, suffix in enumerate(rng):
        mac = oui + suffix.to_bytes(3, "big")
        h = sha()
        h.update(mac)
        d = h.digest()
        buf[i, :16] = np.frombuffer(d, dtype=np.uint8, count=16)
        buf[i, 16:] = np.frombuffer(mac, dtype=np.uint8)
    buf[:, 6] = 0x50 | (buf[:, 6] & 0x0F)
    buf[:, 8] = 0x80 | (buf[:, 8] & 0x3F)
    # big-endian halves give lexicographic byte order
    hi = buf[:, :8].copy().view(">u8").ravel()
    lo = buf[:, 8:16].copy().view(">u8").ravel()
    order = np.lexsort((lo, hi))
    return buf[order].tobytes()


def _build_part(args) -> str:
    oui, suffix_bits, suffix_base, part = args
    part = Path(part)
    tmp = part.with_suffix(".tmp")
    data = _oui_records(oui, suffix_bits, suffix_base)
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, part)
    except OSError as e:
        if e.errno == errno.ENOSPC:
            raise DiskFull(str(e)) from e
        raise
    return str(part)


def _iter_records(path: Path, chunk: int = 1 << 16) -> Iterator[bytes]:
    with open(path, "rb") as fh:
        while True:
            block = fh.read(RECORD_SIZE * chunk)
            if not block:
                return
            for i in range(0, len(block), RECORD_SIZE):
                yield block[i : i + RECORD_SIZE]


@dataclass(frozen=True)
class TableInfo:
    ouis: tuple[bytes, ...]
    record_count: int
    suffix_bits: int
    suffix_base: int
    data_offset: int


def _header_bytes(ouis: Sequence[bytes], count: int, suffix_bits: int, suffix_base: int) -> bytes:
    head = HEADER.pack(MAGIC, VERSION, len(ouis), count, suffix_bits, suffix_base.to_bytes(3, "little"))
    body = b"".join(ouis)
    body += bytes(-len(body) % 8)
    return head + body


def build_rainbow_table(
    ouis: Iterable[bytes],
    out: str | Path,
    *,
    suffix_bits: int = 24,
    suffix_base: int = 0,
    workers: int = 1,
    parts_dir: str | Path | None = None,
    keep_parts: bool = False,
) -> "RainbowTable":
    """Enumerate every suffix under each OUI, hash, sort and write the table.

    Each OUI is first written as its own sorted part file; parts already on
    disk with the right size are reused, so an interrupted build resumes."""
    ouis = sorted(set(bytes(o) for o in ouis))
    if not ouis:
        raise ValueError("at least one OUI is required")
    if any(len(o) != 3 for o in ouis):
        raise ValueError("OUIs are 3 bytes")
    out = Path(out)
    parts = Path(parts_dir) if parts_dir else out.with_name(out.name + ".parts")
    parts.mkdir(parents=True, exist_ok=True)
    per_oui = len(_suffix_range(suffix_bits, suffix_base))
    part_paths = {o: parts / f"{o.hex()}_{suffix_bits}_{suffix_base:x}.part" for o in ouis}
    todo = [o for o in ouis
            if not (part_paths[o].exists() and part_paths[o].stat().st_size == per_oui * RECORD_SIZE)]
    done = [o for o in ouis if o not in todo]
    jobs = [(o, suffix_bits, suffix_base, str(part_paths[o])) for o in todo]
    try:
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                for o, _ in zip(todo, ex.map(_build_part, jobs)):
                    done.append(o)
        else:
            for o, job in zip(todo, jobs):
                _build_part(job)
                done.append(o)
    except KeyboardInterrupt:
        raise InterruptedBuild(parts, done) from None

    total = per_oui * len(ouis)
    tmp = out.with_name(out.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(_header_bytes(ouis, total, suffix_bits, suffix_base))
            prev = None
            buf = bytearray()
            for rec in heapq.merge(*(_iter_records(part_paths[o]) for o in ouis)):
                if prev is not None and rec[:UUID_SIZE] == prev:
                    raise CorruptTable(f"duplicate UUID-E {prev.hex()}")
                prev = rec[:UUID_SIZE]
                buf += rec
                if len(buf) >= 1 << 22:
                    fh.write(buf)
                    buf.clear()
            fh.write(buf)
        os.replace(tmp, out)
    except KeyboardInterrupt:
        tmp.unlink(missing_ok=True)
        raise InterruptedBuild(parts, done) from None
    except OSError as e:
        tmp.unlink(missing_ok=True)
        if e.errno == errno.ENOSPC:
            raise DiskFull(str(e)) from e
        raise
    if not keep_parts:
        for p in part_paths.values():
            p.unlink(missing_ok=True)
        try:
            parts.rmdir()
        except OSError:
            pass
    return RainbowTable(out)


@dataclass(frozen=True)
class ReverseResult:
    mac: MacAddress | None
    degenerate: bool = False


class RainbowTable:
    """Read-only, memory-mapped view of a table file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "rb")
        size = os.fstat(self._fh.fileno()).st_size
        if size < HEADER.size:
            raise CorruptTable("file shorter than header")
        self._mm = mmap.mmap(self._fh.fileno(), 0, access=mmap.ACCESS_READ)
        magic, version, n_oui, count, sbits, sbase = HEADER.unpack_from(self._mm, 0)
        if magic != MAGIC:
            raise CorruptTable(f"bad magic {magic!r}")
        if version != VERSION:
            raise CorruptTable(f"unsupported version {version}")
        off = HEADER.size
        ouis = tuple(bytes(self._mm[off + 3 * i : off + 3 * i + 3]) for i in range(n_oui))
        data_offset = off + 3 * n_oui + (-(3 * n_oui) % 8)
        if size != data_offset + count * RECORD_SIZE:
            raise CorruptTable(f"size {size} does not match {count} records")
        self.info = TableInfo(ouis, count, sbits, int.from_bytes(sbase, "little"), data_offset)

    def close(self) -> None:
        self._mm.close()
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __len__(self) -> int:
        return self.info.record_count

    @property
    def ouis(self) -> tuple[bytes, ...]:
        return self.info.ouis

    def record(self, i: int) -> tuple[bytes, bytes]:
        off = self.info.data_offset + i * RECORD_SIZE
        r = self._mm[off : off + RECORD_SIZE]
        return r[:UUID_SIZE], r[UUID_SIZE:]

    def lookup(self, uuid: bytes) -> ReverseResult:
        if len(uuid) != UUID_SIZE:
            raise ValueError("UUID-E is 16 bytes")
        degenerate = is_degenerate(uuid)
        lo, hi = 0, len(self) - 1
        lo_key, hi_key = None, None
        while lo <= hi:
            mid = (lo + hi) // 2
            key, mac = self.record(mid)
            # keys must stay inside the bracket established so far
            if (lo_key is not None and key < lo_key) or (hi_key is not None and key > hi_key):
                raise CorruptTable(f"sort order violated at record {mid}")
            if key == uuid:
                if uuid_e(mac) != uuid:
                    raise CorruptTable(f"record {mid} does not re-hash to its UUID-E")
                return ReverseResult(MacAddress(mac), degenerate)
            if key < uuid:
                lo, lo_key = mid + 1, key
            else:
                hi, hi_key = mid - 1, key
        return ReverseResult(None, degenerate)

    def verify_order(self) -> None:
        prev = None
        for i in range(len(self)):
            key, _ = self.record(i)
            if prev is not None and key <= prev:
                raise CorruptTable(f"sort order violated at record {i}")
            prev = key

    def describe(self) -> str:
        ouis = ", ".join(format_prefix(o) for o in self.ouis)
        return f"{self.path}: {len(self)} records, OUIs [{ouis}], {self.info.suffix_bits}-bit suffix space"


def reverse_uuid(uuid: bytes, table: RainbowTable) -> MacAddress | None:
    return table.lookup(uuid).mac
