"""Information-Element device signatures.

The canonical form lists tags in on-air order, renders each vendor tag as
``221(0x<oui>,<type>)`` and, when an HT Capabilities element is present,
appends ``htcap``/``htagg``/``htmcs``. Example::

    0,1,50,3,45,221(0x50f2,8),htcap:012c,htagg:03,htmcs:000000ff
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from typing import Iterable

from macrand.dot11 import TAG_HT_CAP, TAG_VENDOR, FrameKind, InformationElement, ManagementFrame

SIGNABLE_KINDS = frozenset(
    {FrameKind.ProbeRequest, FrameKind.Association, FrameKind.Authentication, FrameKind.Beacon}
)


class WrongFrameKind(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class DeviceSignature:
    ie_tags: tuple[int, ...]
    vendor_entries: tuple[tuple[bytes, int] | None, ...]  # one per 221 tag, None if too short
    htcap: int | None = None
    htagg: int | None = None
    htmcs: int | None = None

    @property
    def canonical(self) -> str:
        parts = []
        vendors = iter(self.vendor_entries)
        for tag in self.ie_tags:
            if tag == TAG_VENDOR:
                ent = next(vendors)
                if ent is None:
                    parts.append("221")
                else:
                    oui, vtype = ent
                    parts.append(f"221(0x{int.from_bytes(oui, 'big'):x},{vtype})")
            else:
                parts.append(str(tag))
        if self.htcap is not None:
            parts.append(f"htcap:{self.htcap:04x}")
        if self.htagg is not None:
            parts.append(f"htagg:{self.htagg:02x}")
        if self.htmcs is not None:
            parts.append(f"htmcs:{self.htmcs:08x}")
        return ",".join(parts)

    def __str__(self) -> str:
        return self.canonical

    @classmethod
    def parse(cls, text: str) -> "DeviceSignature":
        """Inverse of ``canonical``; accepts the CLI filter syntax."""
        text = text.strip()
        if not text:
            return cls((), ())
        tags: list[int] = []
        vendors: list[tuple[bytes, int] | None] = []
        ht: dict[str, int] = {}
        for tok in _tokenize(text):
            m = re.fullmatch(r"221\(0x([0-9a-fA-F]{1,6}),(\d{1,3})\)", tok)
            if m:
                tags.append(TAG_VENDOR)
                vendors.append((int(m.group(1), 16).to_bytes(3, "big"), int(m.group(2))))
                continue
            m = re.fullmatch(r"(htcap|htagg|htmcs):([0-9a-fA-F]+)", tok)
            if m:
                ht[m.group(1)] = int(m.group(2), 16)
                continue
            if not tok.isdigit() or int(tok) > 255:
                raise ValueError(f"bad signature token {tok!r}")
            tags.append(int(tok))
            if int(tok) == TAG_VENDOR:
                vendors.append(None)
        return cls(tuple(tags), tuple(vendors), ht.get("htcap"), ht.get("htagg"), ht.get("htmcs"))


def _tokenize(text: str) -> list[str]:
    # commas inside 221(...) are not separators
    out, depth, cur = [], 0, ""
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
        else:
            cur += ch
    out.append(cur.strip())
    return out


def signature_from_ies(ies: Iterable[InformationElement]) -> DeviceSignature:
    tags, vendors = [], []
    htcap = htagg = htmcs = None
    seen_ht = False
    for ie in ies:
        tags.append(ie.tag)
        if ie.tag == TAG_VENDOR:
            oui = ie.vendor_oui
            vendors.append(None if oui is None else (oui, ie.vendor_type))
        elif ie.tag == TAG_HT_CAP and not seen_ht:
            seen_ht = True
            v = ie.value
            # HT capability info is little-endian on air
            if len(v) >= 2:
                htcap = struct.unpack_from("<H", v, 0)[0]
            if len(v) >= 3:
                htagg = v[2]
            if len(v) >= 7:
                htmcs = struct.unpack_from("<I", v, 3)[0]
    return DeviceSignature(tuple(tags), tuple(vendors), htcap, htagg, htmcs)


def derive_signature(frame: ManagementFrame) -> DeviceSignature:
    if frame.kind not in SIGNABLE_KINDS:
        raise WrongFrameKind(f"cannot sign a {frame.kind.value} frame")
    return signature_from_ies(frame.ies)


def signature_match(a: DeviceSignature, b: DeviceSignature) -> bool:
    return a.canonical == b.canonical


def signature_pairs(catalog, support: int = 1) -> list[tuple[DeviceSignature, DeviceSignature]]:
    """Mine (global-state, randomized-state) signature pairs from catalog
    records whose addresses were joined by sequence chaining.

    Identical pairs are dropped since they add nothing to direct matching.
    ``support`` is the number of distinct linked records that must show a
    pair before it is accepted."""
    counts: dict[tuple[str, str], int] = {}
    sigs: dict[str, DeviceSignature] = {}
    for rec in catalog:
        if not getattr(rec, "seqchain_linked", False):
            continue
        for g in rec.signatures_global:
            for r in rec.signatures_random:
                if g.canonical == r.canonical:
                    continue
                key = (g.canonical, r.canonical)
                counts[key] = counts.get(key, 0) + 1
                sigs[g.canonical], sigs[r.canonical] = g, r
    return [(sigs[g], sigs[r]) for (g, r), c in sorted(counts.items()) if c >= support]


HT_FILL = bytes(19)


def ies_from_signature(sig: DeviceSignature, ssid: bytes = b"", vendor_payloads: dict | None = None
                       ) -> list[InformationElement]:
    """Build an IE list whose signature is exactly ``sig``.

    Used by the trace synthesizer. Contents of non-modeled tags are
    deterministic filler; ``vendor_payloads`` maps (oui, type) to the bytes
    following the vendor type."""
    vendor_payloads = vendor_payloads or {}
    out = []
    vendors = iter(sig.vendor_entries)
    ht_done = False
    for tag in sig.ie_tags:
        if tag == 0:
            out.append(InformationElement(0, ssid))
        elif tag == 1:
            out.append(InformationElement(1, bytes([0x82, 0x84, 0x8B, 0x96, 0x0C, 0x12, 0x18, 0x24])))
        elif tag == 50:
            out.append(InformationElement(50, bytes([0x30, 0x48, 0x60, 0x6C])))
        elif tag == 3:
            out.append(InformationElement(3, b"\x06"))
        elif tag == TAG_HT_CAP and not ht_done:
            ht_done = True
            v = bytearray(26)
            struct.pack_into("<H", v, 0, sig.htcap or 0)
            v[2] = sig.htagg or 0
            struct.pack_into("<I", v, 3, sig.htmcs or 0)
            out.append(InformationElement(TAG_HT_CAP, bytes(v)))
        elif tag == TAG_VENDOR:
            ent = next(vendors)
            if ent is None:
                out.append(InformationElement(TAG_VENDOR, b"\x00\x00"))
            else:
                oui, vtype = ent
                extra = vendor_payloads.get((oui, vtype), b"\x00")
                out.append(InformationElement.vendor(oui, vtype, extra))
        else:
            out.append(InformationElement(tag, bytes([tag & 0xFF, 0x00])))
    return out
