"""802.11 frame decoding and encoding: management, control and data headers,
tagged Information Elements, and WPS attribute TLVs."""

from __future__ import annotations

import enum
import struct
import zlib
from dataclasses import dataclass, field, replace

from macrand.address import WPS_OUI, MacAddress

BROADCAST = MacAddress(b"\xff" * 6)

TYPE_MGMT, TYPE_CTRL, TYPE_DATA = 0, 1, 2

FLAG_TO_DS = 0x01
FLAG_FROM_DS = 0x02
FLAG_RETRY = 0x08
FLAG_ORDER = 0x80

TAG_SSID = 0
TAG_RATES = 1
TAG_DS_PARAM = 3
TAG_HT_CAP = 45
TAG_EXT_RATES = 50
TAG_VENDOR = 221

WPS_VENDOR_TYPE = 4

WPS_ATTR_MANUFACTURER = 0x1021
WPS_ATTR_MODEL_NAME = 0x1023
WPS_ATTR_MODEL_NUMBER = 0x1024
WPS_ATTR_UUID_E = 0x1047


class FrameKind(enum.Enum):
    ProbeRequest = "ProbeRequest"
    ProbeResponse = "ProbeResponse"
    Beacon = "Beacon"
    Authentication = "Authentication"
    Association = "Association"
    Deauthentication = "Deauthentication"
    Disassociation = "Disassociation"
    Atim = "Atim"
    Rts = "Rts"
    Cts = "Cts"
    Ack = "Ack"
    CfEnd = "CfEnd"
    CfEndCfAck = "CfEndCfAck"
    Data = "Data"


# (type, subtype) -> kind; anything absent decodes as Data with its subtype kept.
_MGMT_KINDS = {
    0: FrameKind.Association,
    1: FrameKind.Association,
    2: FrameKind.Association,
    3: FrameKind.Association,
    4: FrameKind.ProbeRequest,
    5: FrameKind.ProbeResponse,
    8: FrameKind.Beacon,
    9: FrameKind.Atim,
    10: FrameKind.Disassociation,
    11: FrameKind.Authentication,
    12: FrameKind.Deauthentication,
}
# fixed-field length preceding the tagged parameters, per management subtype
_MGMT_FIXED = {0: 4, 1: 6, 2: 10, 3: 6, 4: 0, 5: 12, 8: 12, 9: 0, 10: 2, 11: 6, 12: 2}
# subtypes that never carry IEs
_MGMT_NO_IES = {9, 10, 12}

_CTRL_KINDS = {
    11: FrameKind.Rts,
    12: FrameKind.Cts,
    13: FrameKind.Ack,
    14: FrameKind.CfEnd,
    15: FrameKind.CfEndCfAck,
}
_CTRL_TWO_ADDR = {8, 9, 10, 11, 14, 15}

ASSOC_REQUEST_SUBTYPES = {0, 2}


class FrameError(Exception):
    """Structured parse failure; never fatal to a capture."""


class MalformedFrame(FrameError):
    pass


@dataclass(frozen=True, slots=True)
class InformationElement:
    tag: int
    value: bytes

    def __post_init__(self):
        if not 0 <= self.tag <= 255:
            raise ValueError("IE tag out of range")
        if len(self.value) > 255:
            raise ValueError("IE value longer than 255 bytes")

    @property
    def length(self) -> int:
        return len(self.value)

    @property
    def vendor_oui(self) -> bytes | None:
        if self.tag == TAG_VENDOR and len(self.value) >= 4:
            return self.value[:3]
        return None

    @property
    def vendor_type(self) -> int | None:
        if self.tag == TAG_VENDOR and len(self.value) >= 4:
            return self.value[3]
        return None

    def encode(self) -> bytes:
        return bytes((self.tag, len(self.value))) + self.value

    @classmethod
    def vendor(cls, oui: bytes, vendor_type: int, data: bytes = b"") -> "InformationElement":
        return cls(TAG_VENDOR, oui + bytes((vendor_type,)) + data)


@dataclass(frozen=True, slots=True)
class ManagementFrame:
    """One decoded 802.11 frame. Despite the name, control and data frames
    are represented too; ``kind`` tells them apart."""

    kind: FrameKind
    destination: MacAddress
    source: MacAddress | None = None
    bssid: MacAddress | None = None
    sequence_number: int | None = None
    ies: tuple[InformationElement, ...] = ()
    timestamp: int = 0
    frame_type: int = TYPE_MGMT
    subtype: int = 0
    flags: int = 0
    duration: int = 0
    fragment: int = 0
    fixed: bytes = b""
    body: bytes = b""

    @property
    def ssid(self) -> bytes | None:
        for ie in self.ies:
            if ie.tag == TAG_SSID:
                return ie.value
        return None

    @property
    def auth_transaction(self) -> int | None:
        if self.kind is FrameKind.Authentication and len(self.fixed) >= 4:
            return struct.unpack_from("<H", self.fixed, 2)[0]
        return None

    @property
    def is_assoc_request(self) -> bool:
        return self.kind is FrameKind.Association and self.subtype in ASSOC_REQUEST_SUBTYPES

    def vendor_ies(self, oui: bytes, vendor_type: int | None = None) -> list[InformationElement]:
        return [
            ie
            for ie in self.ies
            if ie.vendor_oui == oui and (vendor_type is None or ie.vendor_type == vendor_type)
        ]

    def with_timestamp(self, ts: int) -> "ManagementFrame":
        return replace(self, timestamp=ts)


def parse_ies(data: bytes, *, strict: bool = True) -> tuple[InformationElement, ...]:
    """Decode a tagged-parameter region.

    A trailing fragment of four bytes or less that does not form a complete
    IE is tolerated (an FCS nobody told us about). Longer overruns raise
    MalformedFrame when ``strict``.
    """
    out = []
    pos, n = 0, len(data)
    while pos < n:
        remaining = n - pos
        if remaining < 2:
            break
        tag, length = data[pos], data[pos + 1]
        if length > remaining - 2:
            if remaining <= 4 or not strict:
                break
            raise MalformedFrame(f"IE tag {tag} at offset {pos} overruns by {length - remaining + 2} bytes")
        out.append(InformationElement(tag, bytes(data[pos + 2 : pos + 2 + length])))
        pos += 2 + length
    return tuple(out)


def encode_ies(ies) -> bytes:
    return b"".join(ie.encode() for ie in ies)


def _mac(buf: bytes, off: int) -> MacAddress:
    return MacAddress(bytes(buf[off : off + 6]))


def fcs_matches(payload: bytes) -> bool:
    if len(payload) < 14:
        return False
    return zlib.crc32(payload[:-4]) & 0xFFFFFFFF == struct.unpack_from("<I", payload, len(payload) - 4)[0]


def parse_frame(payload: bytes, timestamp: int = 0, *, has_fcs: bool = False) -> ManagementFrame:
    """Decode one 802.11 frame (no radiotap, no pcap record header)."""
    if has_fcs:
        if len(payload) < 14:
            raise MalformedFrame("frame shorter than header plus FCS")
        payload = payload[:-4]
    elif fcs_matches(payload):
        payload = payload[:-4]
    if len(payload) < 10:
        raise MalformedFrame(f"frame of {len(payload)} bytes is below the 10-byte minimum")

    fc0, flags, duration = payload[0], payload[1], struct.unpack_from("<H", payload, 2)[0]
    ftype = (fc0 >> 2) & 0x3
    subtype = (fc0 >> 4) & 0xF
    if fc0 & 0x3:
        raise MalformedFrame(f"unsupported protocol version {fc0 & 0x3}")
    addr1 = _mac(payload, 4)

    if ftype == TYPE_CTRL:
        kind = _CTRL_KINDS.get(subtype, FrameKind.Data)
        source = None
        if subtype in _CTRL_TWO_ADDR:
            if len(payload) < 16:
                raise MalformedFrame(f"control subtype {subtype} needs 16 bytes")
            source = _mac(payload, 10)
            rest = payload[16:]
        else:
            rest = payload[10:]
        return ManagementFrame(
            kind=kind, destination=addr1, source=source, timestamp=timestamp,
            frame_type=ftype, subtype=subtype, flags=flags, duration=duration, body=bytes(rest),
        )

    if ftype == 3:
        raise MalformedFrame("reserved frame type 3")
    if len(payload) < 24:
        raise MalformedFrame(f"{'management' if ftype == TYPE_MGMT else 'data'} header truncated at {len(payload)} bytes")
    addr2, addr3 = _mac(payload, 10), _mac(payload, 16)
    seq_ctl = struct.unpack_from("<H", payload, 22)[0]
    seq, frag = seq_ctl >> 4, seq_ctl & 0xF
    pos = 24

    if ftype == TYPE_DATA:
        if flags & FLAG_TO_DS and flags & FLAG_FROM_DS:
            pos += 6
        if subtype & 0x8:
            pos += 2
        if len(payload) < pos:
            raise MalformedFrame("data header truncated")
        return ManagementFrame(
            kind=FrameKind.Data, destination=addr1, source=addr2, bssid=addr3,
            sequence_number=seq, fragment=frag, timestamp=timestamp, frame_type=ftype,
            subtype=subtype, flags=flags, duration=duration, fixed=bytes(payload[24:pos]),
            body=bytes(payload[pos:]),
        )

    if flags & FLAG_ORDER:
        pos += 4  # HT Control
    kind = _MGMT_KINDS.get(subtype)
    if kind is None:
        # unknown management subtype (action frames etc.): keep header, body opaque
        return ManagementFrame(
            kind=FrameKind.Data, destination=addr1, source=addr2, bssid=addr3,
            sequence_number=seq, fragment=frag, timestamp=timestamp, frame_type=ftype,
            subtype=subtype, flags=flags, duration=duration, body=bytes(payload[pos:]),
        )
    nfixed = _MGMT_FIXED[subtype]
    if len(payload) < pos + nfixed:
        raise MalformedFrame(f"fixed fields of subtype {subtype} truncated")
    fixed = bytes(payload[24 : pos + nfixed])
    pos += nfixed
    if flags & 0x40 or subtype in _MGMT_NO_IES:
        # protected or IE-less body: keep raw
        ies, body = (), bytes(payload[pos:])
    else:
        ies, body = parse_ies(payload[pos:]), b""
    return ManagementFrame(
        kind=kind, destination=addr1, source=addr2, bssid=addr3, sequence_number=seq,
        fragment=frag, ies=ies, timestamp=timestamp, frame_type=ftype, subtype=subtype,
        flags=flags, duration=duration, fixed=fixed, body=body,
    )


def encode_frame(frame: ManagementFrame) -> bytes:
    """Serialize a frame; inverse of parse_frame for frames it produced."""
    fc = bytes(((frame.subtype << 4) | (frame.frame_type << 2), frame.flags))
    head = fc + struct.pack("<H", frame.duration) + frame.destination.raw
    if frame.frame_type == TYPE_CTRL:
        if frame.source is not None:
            head += frame.source.raw
        return head + frame.body
    if frame.source is None or frame.bssid is None or frame.sequence_number is None:
        raise ValueError("management/data frames need source, bssid and sequence number")
    if not 0 <= frame.sequence_number < 4096:
        raise ValueError("sequence number must fit 12 bits")
    head += frame.source.raw + frame.bssid.raw
    head += struct.pack("<H", (frame.sequence_number << 4) | (frame.fragment & 0xF))
    return head + frame.fixed + encode_ies(frame.ies) + frame.body


# -- builders ---------------------------------------------------------------

def _mgmt(kind, subtype, dst, src, bssid, seq, ies=(), fixed=b"", body=b"", duration=0, flags=0):
    return ManagementFrame(
        kind=kind, destination=dst, source=src, bssid=bssid, sequence_number=seq % 4096,
        ies=tuple(ies), frame_type=TYPE_MGMT, subtype=subtype, flags=flags,
        duration=duration, fixed=fixed, body=body,
    )


def probe_request(src: MacAddress, seq: int, ies, dst: MacAddress = BROADCAST) -> ManagementFrame:
    return _mgmt(FrameKind.ProbeRequest, 4, dst, src, BROADCAST if dst == BROADCAST else dst, seq, ies)


def probe_response(src: MacAddress, dst: MacAddress, seq: int, ies, tsf: int = 0) -> ManagementFrame:
    fixed = struct.pack("<QHH", tsf, 100, 0x0401)
    return _mgmt(FrameKind.ProbeResponse, 5, dst, src, src, seq, ies, fixed)


def beacon(src: MacAddress, seq: int, ies, tsf: int = 0, interval: int = 100) -> ManagementFrame:
    fixed = struct.pack("<QHH", tsf, interval, 0x0421)
    return _mgmt(FrameKind.Beacon, 8, BROADCAST, src, src, seq, ies, fixed)


def authentication(src: MacAddress, dst: MacAddress, bssid: MacAddress, seq: int,
                   transaction: int = 1, status: int = 0, algorithm: int = 0, ies=()) -> ManagementFrame:
    fixed = struct.pack("<HHH", algorithm, transaction, status)
    return _mgmt(FrameKind.Authentication, 11, dst, src, bssid, seq, ies, fixed)


def association_request(src: MacAddress, bssid: MacAddress, seq: int, ies) -> ManagementFrame:
    fixed = struct.pack("<HH", 0x0431, 10)
    return _mgmt(FrameKind.Association, 0, bssid, src, bssid, seq, ies, fixed)


def association_response(src: MacAddress, dst: MacAddress, seq: int, aid: int = 1, ies=()) -> ManagementFrame:
    fixed = struct.pack("<HHH", 0x0431, 0, 0xC000 | aid)
    return _mgmt(FrameKind.Association, 1, dst, src, src, seq, ies, fixed)


def deauthentication(src: MacAddress, dst: MacAddress, bssid: MacAddress, seq: int, reason: int = 3) -> ManagementFrame:
    return _mgmt(FrameKind.Deauthentication, 12, dst, src, bssid, seq, fixed=struct.pack("<H", reason))


def disassociation(src: MacAddress, dst: MacAddress, bssid: MacAddress, seq: int, reason: int = 8) -> ManagementFrame:
    return _mgmt(FrameKind.Disassociation, 10, dst, src, bssid, seq, fixed=struct.pack("<H", reason))


def atim(src: MacAddress, dst: MacAddress, bssid: MacAddress, seq: int) -> ManagementFrame:
    return _mgmt(FrameKind.Atim, 9, dst, src, bssid, seq)


def data_frame(src: MacAddress, bssid: MacAddress, dst: MacAddress, seq: int,
               payload: bytes = b"", to_ds: bool = True) -> ManagementFrame:
    # addr1=BSSID, addr2=SA, addr3=DA when going to the DS; addr1=DA otherwise
    a1, a3 = (bssid, dst) if to_ds else (dst, bssid)
    return ManagementFrame(
        kind=FrameKind.Data, destination=a1, source=src, bssid=a3, sequence_number=seq % 4096,
        frame_type=TYPE_DATA, subtype=0, flags=FLAG_TO_DS if to_ds else 0, body=payload,
    )


def _ctrl(kind, subtype, ra, ta=None, duration=0):
    return ManagementFrame(kind=kind, destination=ra, source=ta, frame_type=TYPE_CTRL,
                           subtype=subtype, duration=duration)


def rts(ra: MacAddress, ta: MacAddress, duration: int = 314) -> ManagementFrame:
    return _ctrl(FrameKind.Rts, 11, ra, ta, duration)


def cts(ra: MacAddress, duration: int = 0) -> ManagementFrame:
    return _ctrl(FrameKind.Cts, 12, ra, None, duration)


def ack(ra: MacAddress) -> ManagementFrame:
    return _ctrl(FrameKind.Ack, 13, ra)


def cf_end(ra: MacAddress, bssid: MacAddress) -> ManagementFrame:
    return _ctrl(FrameKind.CfEnd, 14, ra, bssid)


def cf_end_ack(ra: MacAddress, bssid: MacAddress) -> ManagementFrame:
    return _ctrl(FrameKind.CfEndCfAck, 15, ra, bssid)


# -- WPS --------------------------------------------------------------------

@dataclass(frozen=True)
class WpsAttributes:
    manufacturer: str | None = None
    model_name: str | None = None
    model_number: str | None = None
    uuid_e: bytes | None = None
    overrun: bool = False  # a TLV length ran past the IE; fields before it are kept

    def __post_init__(self):
        if self.uuid_e is not None and len(self.uuid_e) != 16:
            raise ValueError("uuid_e must be 16 bytes")

    def encode_tlvs(self) -> bytes:
        out = b""
        for attr, val in (
            (WPS_ATTR_MANUFACTURER, self.manufacturer),
            (WPS_ATTR_MODEL_NAME, self.model_name),
            (WPS_ATTR_MODEL_NUMBER, self.model_number),
        ):
            if val is not None:
                raw = val.encode("utf-8")
                out += struct.pack(">HH", attr, len(raw)) + raw
        if self.uuid_e is not None:
            out += struct.pack(">HH", WPS_ATTR_UUID_E, 16) + self.uuid_e
        return out

    def to_ie(self) -> InformationElement:
        return InformationElement.vendor(WPS_OUI, WPS_VENDOR_TYPE, self.encode_tlvs())

    def to_json(self) -> dict:
        return {
            "manufacturer": self.manufacturer,
            "model_name": self.model_name,
            "model_number": self.model_number,
            "uuid_e": self.uuid_e.hex() if self.uuid_e else None,
        }

    @classmethod
    def from_json(cls, d: dict | None) -> "WpsAttributes | None":
        if d is None:
            return None
        return cls(d.get("manufacturer"), d.get("model_name"), d.get("model_number"),
                   bytes.fromhex(d["uuid_e"]) if d.get("uuid_e") else None)


def is_wps_ie(ie: InformationElement) -> bool:
    return ie.vendor_oui == WPS_OUI and ie.vendor_type == WPS_VENDOR_TYPE


def parse_wps(ie: InformationElement) -> WpsAttributes:
    if not is_wps_ie(ie):
        raise ValueError("not a WPS vendor IE (00:50:F2 type 4)")
    data = ie.value[4:]
    fields: dict[str, object] = {}
    pos, overrun = 0, False
    while pos + 4 <= len(data):
        attr, length = struct.unpack_from(">HH", data, pos)
        pos += 4
        if pos + length > len(data):
            overrun = True
            break
        val = data[pos : pos + length]
        pos += length
        if attr == WPS_ATTR_MANUFACTURER:
            fields["manufacturer"] = val.decode("utf-8", "replace")
        elif attr == WPS_ATTR_MODEL_NAME:
            fields["model_name"] = val.decode("utf-8", "replace")
        elif attr == WPS_ATTR_MODEL_NUMBER:
            fields["model_number"] = val.decode("utf-8", "replace")
        elif attr == WPS_ATTR_UUID_E and length == 16:
            fields["uuid_e"] = bytes(val)
    if 0 < len(data) - pos < 4:
        overrun = True
    return WpsAttributes(overrun=overrun, **fields)


def frame_wps(frame: ManagementFrame) -> WpsAttributes | None:
    for ie in frame.ies:
        if is_wps_ie(ie):
            return parse_wps(ie)
    return None
