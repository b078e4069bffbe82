"""pcap ingestion and emission for LINKTYPE_IEEE802_11 (105) and
LINKTYPE_IEEE802_11_RADIOTAP (127)."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from macrand.dot11 import FrameError, ManagementFrame, parse_frame

LINKTYPE_IEEE802_11 = 105
LINKTYPE_RADIOTAP = 127
SUPPORTED_LINKTYPES = (LINKTYPE_IEEE802_11, LINKTYPE_RADIOTAP)

MAGIC_US = 0xA1B2C3D4
MAGIC_NS = 0xA1B23C4D

RADIOTAP_TSFT = 0
RADIOTAP_FLAGS = 1
RADIOTAP_EXT = 31
RADIOTAP_F_FCS = 0x10


class CaptureError(Exception):
    pass


class NotAPcap(CaptureError):
    pass


class UnsupportedLinkType(CaptureError):
    def __init__(self, link_type: int):
        super().__init__(f"unsupported pcap link type {link_type}")
        self.link_type = link_type


class TruncatedHeader(CaptureError):
    pass


class TruncatedRecord(CaptureError):
    def __init__(self, index: int, detail: str):
        super().__init__(f"record {index}: {detail}")
        self.index = index


class NonMonotonicTimestamps(CaptureError):
    def __init__(self, index: int):
        super().__init__(f"record {index} has a timestamp earlier than its predecessor")
        self.index = index


@dataclass
class RawFrame:
    timestamp: int  # microseconds since epoch
    payload: bytes
    has_fcs: bool = False


@dataclass
class RawCapture:
    link_type: int
    frames: list[RawFrame] = field(default_factory=list)
    dropped: int = 0  # records whose radiotap header was unusable


def strip_radiotap(buf: bytes) -> tuple[bytes, bool]:
    """Skip a radiotap header by its length field; report the FCS flag.

    Only the Flags field is decoded, since it says whether a trailing FCS
    is present. Returns (802.11 payload, has_fcs)."""
    if len(buf) < 8:
        raise FrameError("radiotap header shorter than 8 bytes")
    version, _pad, rt_len, present = struct.unpack_from("<BBHI", buf, 0)
    if version != 0:
        raise FrameError(f"radiotap version {version}")
    if rt_len < 8 or rt_len > len(buf):
        raise FrameError(f"radiotap length {rt_len} exceeds record of {len(buf)} bytes")
    off = 8
    word = present
    while word & (1 << RADIOTAP_EXT):
        if off + 4 > rt_len:
            raise FrameError("radiotap present bitmaps overrun header")
        word = struct.unpack_from("<I", buf, off)[0]
        off += 4
    has_fcs = False
    if present & (1 << RADIOTAP_FLAGS):
        if present & (1 << RADIOTAP_TSFT):
            off = (off + 7) & ~7
            off += 8
        if off < rt_len:
            has_fcs = bool(buf[off] & RADIOTAP_F_FCS)
    return buf[rt_len:], has_fcs


def radiotap_header(fcs: bool = False) -> bytes:
    if not fcs:
        return struct.pack("<BBHI", 0, 0, 8, 0)
    return struct.pack("<BBHIB", 0, 0, 9, 1 << RADIOTAP_FLAGS, RADIOTAP_F_FCS)


def _read_records(data: bytes) -> tuple[int, Iterator[tuple[int, int, bytes]]]:
    if len(data) < 24:
        raise TruncatedHeader(f"pcap global header needs 24 bytes, file has {len(data)}")
    (magic,) = struct.unpack_from("<I", data, 0)
    if magic in (MAGIC_US, MAGIC_NS):
        endian = "<"
    else:
        (magic,) = struct.unpack_from(">I", data, 0)
        if magic not in (MAGIC_US, MAGIC_NS):
            raise NotAPcap(f"bad pcap magic {data[:4].hex()}")
        endian = ">"
    nanos = magic == MAGIC_NS
    _vmaj, _vmin, _tz, _sig, _snap, link_type = struct.unpack_from(endian + "HHiIII", data, 4)
    if link_type not in SUPPORTED_LINKTYPES:
        raise UnsupportedLinkType(link_type)

    def records():
        pos, idx = 24, 0
        rec = struct.Struct(endian + "IIII")
        while pos < len(data):
            if pos + 16 > len(data):
                raise TruncatedRecord(idx, "record header truncated")
            sec, frac, incl, _orig = rec.unpack_from(data, pos)
            pos += 16
            if pos + incl > len(data):
                raise TruncatedRecord(idx, f"declares {incl} bytes, {len(data) - pos} remain")
            ts = sec * 1_000_000 + (frac // 1000 if nanos else frac)
            yield idx, ts, data[pos : pos + incl]
            pos += incl
            idx += 1

    return link_type, records()


def load_capture(path: str | Path) -> RawCapture:
    data = Path(path).read_bytes()
    return load_capture_bytes(data)


def load_capture_bytes(data: bytes) -> RawCapture:
    link_type, records = _read_records(data)
    cap = RawCapture(link_type)
    last_ts = None
    for idx, ts, payload in records:
        if last_ts is not None and ts < last_ts:
            raise NonMonotonicTimestamps(idx)
        last_ts = ts
        has_fcs = False
        if link_type == LINKTYPE_RADIOTAP:
            try:
                payload, has_fcs = strip_radiotap(payload)
            except FrameError:
                cap.dropped += 1
                continue
        cap.frames.append(RawFrame(ts, bytes(payload), has_fcs))
    return cap


@dataclass
class ParsedCapture:
    frames: list[ManagementFrame]
    malformed: int
    link_type: int
    dropped: int = 0


def parse_capture(cap: RawCapture) -> ParsedCapture:
    """Parse every record; malformed frames are counted and skipped."""
    frames, bad = [], 0
    for raw in cap.frames:
        try:
            frames.append(parse_frame(raw.payload, raw.timestamp, has_fcs=raw.has_fcs))
        except FrameError:
            bad += 1
    return ParsedCapture(frames, bad, cap.link_type, cap.dropped)


def write_pcap(
    path: str | Path,
    records: Iterable[tuple[int, bytes]],
    link_type: int = LINKTYPE_IEEE802_11,
    *,
    nanosecond: bool = False,
    big_endian: bool = False,
    snaplen: int = 65535,
) -> int:
    """Write (timestamp_us, payload) records; returns the record count."""
    e = ">" if big_endian else "<"
    magic = MAGIC_NS if nanosecond else MAGIC_US
    n = 0
    with open(path, "wb") as fh:
        fh.write(struct.pack(e + "IHHiIII", magic, 2, 4, 0, 0, snaplen, link_type))
        for ts, payload in records:
            sec, usec = divmod(ts, 1_000_000)
            frac = usec * 1000 if nanosecond else usec
            fh.write(struct.pack(e + "IIII", sec, frac, len(payload), len(payload)))
            fh.write(payload)
            n += 1
    return n
