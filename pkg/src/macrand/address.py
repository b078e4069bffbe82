"""MAC address semantics and the prefix (OUI/CID) registry."""

from __future__ import annotations

import csv
import enum
import io
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

LOCAL_BIT = 0x02
MULTICAST_BIT = 0x01

_HEX_RE = re.compile(r"[0-9A-Fa-f]")


class AddressClass(enum.Enum):
    GlobalUnicast = "GlobalUnicast"
    LocalUnicast = "LocalUnicast"
    Multicast = "Multicast"


class PrefixKind(enum.Enum):
    Oui = "Oui"
    Cid = "Cid"


@dataclass(frozen=True, order=True, slots=True)
class MacAddress:
    raw: bytes

    def __post_init__(self):
        if not isinstance(self.raw, (bytes, bytearray)) or len(self.raw) != 6:
            raise ValueError(f"MAC address needs 6 bytes, got {self.raw!r}")
        if isinstance(self.raw, bytearray):
            object.__setattr__(self, "raw", bytes(self.raw))

    @classmethod
    def parse(cls, text: str) -> "MacAddress":
        digits = "".join(_HEX_RE.findall(text))
        stripped = re.sub(r"[\s:\-.]", "", text)
        if len(digits) != 12 or len(stripped) != 12:
            raise ValueError(f"not a MAC address: {text!r}")
        return cls(bytes.fromhex(digits))

    @classmethod
    def from_int(cls, value: int) -> "MacAddress":
        return cls(value.to_bytes(6, "big"))

    def __int__(self) -> int:
        return int.from_bytes(self.raw, "big")

    def __str__(self) -> str:
        return ":".join(f"{b:02X}" for b in self.raw)

    def __repr__(self) -> str:
        return f"MacAddress('{self}')"

    @property
    def prefix(self) -> bytes:
        return self.raw[:3]

    @property
    def is_local(self) -> bool:
        return bool(self.raw[0] & LOCAL_BIT)

    @property
    def is_multicast(self) -> bool:
        return bool(self.raw[0] & MULTICAST_BIT)


def format_prefix(prefix: bytes) -> str:
    return ":".join(f"{b:02X}" for b in prefix)


def parse_prefix(text: str) -> bytes:
    digits = "".join(_HEX_RE.findall(text))
    if len(digits) != 6:
        raise ValueError(f"not a 3-byte prefix: {text!r}")
    return bytes.fromhex(digits)


def classify_bits(addr: MacAddress) -> AddressClass:
    # multicast wins: a multicast source is a protocol violation, flagged distinctly
    if addr.is_multicast:
        return AddressClass.Multicast
    if addr.is_local:
        return AddressClass.LocalUnicast
    return AddressClass.GlobalUnicast


def strip_local_bit(addr: MacAddress) -> MacAddress:
    return MacAddress(bytes([addr.raw[0] & ~LOCAL_BIT & 0xFF]) + addr.raw[1:])


def set_local_bit(addr: MacAddress) -> MacAddress:
    return MacAddress(bytes([addr.raw[0] | LOCAL_BIT]) + addr.raw[1:])


@dataclass(frozen=True)
class RegistryEntry:
    owner: str
    kind: PrefixKind


class PrefixRegistry:
    """Exact 3-byte prefix lookup table.

    Loaded from ``prefix,owner,kind`` CSV. The IEEE MA-L/CID CSV export
    (``Registry,Assignment,Organization Name,...``) is accepted as well so
    a full registry can replace the shipped one.
    """

    def __init__(self, entries: dict[bytes, RegistryEntry] | None = None):
        self._entries: dict[bytes, RegistryEntry] = {}
        for prefix, entry in (entries or {}).items():
            self.add(prefix, entry.owner, entry.kind)

    def add(self, prefix: bytes, owner: str, kind: PrefixKind) -> None:
        if len(prefix) != 3:
            raise ValueError("prefix must be 3 bytes")
        if prefix in self._entries:
            raise ValueError(f"duplicate prefix {format_prefix(prefix)}")
        local = bool(prefix[0] & LOCAL_BIT)
        if kind is PrefixKind.Cid and not local:
            raise ValueError(f"CID {format_prefix(prefix)} must have the local bit set")
        if kind is PrefixKind.Oui and local:
            raise ValueError(f"OUI {format_prefix(prefix)} must have the local bit clear")
        self._entries[prefix] = RegistryEntry(owner, kind)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, prefix: bytes) -> bool:
        return prefix in self._entries

    def items(self):
        return self._entries.items()

    def resolve(self, addr: MacAddress) -> RegistryEntry | None:
        return self._entries.get(addr.prefix)

    def prefixes_owned_by(self, owner: str) -> set[bytes]:
        return {p for p, e in self._entries.items() if e.owner == owner}

    @classmethod
    def from_csv_text(cls, text: str) -> "PrefixRegistry":
        reg = cls()
        reader = csv.reader(io.StringIO(text))
        header = None
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = [c.strip().lower() for c in row]
                if header[:3] == ["prefix", "owner", "kind"]:
                    continue
                if "assignment" in header:
                    continue
                header = ["prefix", "owner", "kind"]
            if "assignment" in header:
                # IEEE export: Registry,Assignment,Organization Name,...
                registry = row[header.index("registry")].strip().upper()
                kind = PrefixKind.Cid if registry == "CID" else PrefixKind.Oui
                if registry not in ("MA-L", "CID"):
                    continue
                prefix = parse_prefix(row[header.index("assignment")])
                owner = row[header.index("organization name")].strip()
                if prefix in reg:
                    continue
            else:
                prefix = parse_prefix(row[0])
                owner = row[1].strip()
                kind = PrefixKind(row[2].strip())
            reg.add(prefix, owner, kind)
        return reg

    @classmethod
    def load(cls, path: str | Path) -> "PrefixRegistry":
        return cls.from_csv_text(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default(cls) -> "PrefixRegistry":
        text = resources.files("macrand").joinpath("data/registry.csv").read_text(encoding="utf-8")
        return cls.from_csv_text(text)


def resolve_prefix(addr: MacAddress, registry: PrefixRegistry) -> RegistryEntry | None:
    return registry.resolve(addr)


GOOGLE_CID = bytes.fromhex("DAA119")
MOTOROLA_RANDOM_PREFIX = bytes.fromhex("9268C3")  # not IEEE-allocated
WPS_OUI = bytes.fromhex("0050F2")
WFA_OUI = bytes.fromhex("506F9A")
NINTENDO_OUI = bytes.fromhex("001F32")
APPLE_OUI = bytes.fromhex("0017F2")
