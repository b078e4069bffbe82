"""Binning of observed probe-request source addresses: global vs local,
service vs randomized, and randomized addresses into scheme bins."""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping

from macrand.address import (
    APPLE_OUI,
    GOOGLE_CID,
    MOTOROLA_RANDOM_PREFIX,
    NINTENDO_OUI,
    WFA_OUI,
    AddressClass,
    MacAddress,
    PrefixRegistry,
    classify_bits,
    format_prefix,
    strip_local_bit,
)
from macrand.dot11 import FrameKind, ManagementFrame, WpsAttributes, frame_wps
from macrand.signature import DeviceSignature, derive_signature

# wpa_supplicant.conf ships this UUID as its example; many HTC phones transmit it verbatim.
DEGENERATE_UUIDS = frozenset({bytes.fromhex("123456789abcdef0123456789abcdef0")})


class Bin(enum.Enum):
    GlobalUnicast = "GlobalUnicast"
    ServiceWifiDirect = "ServiceWifiDirect"
    ServiceNintendo = "ServiceNintendo"
    ServiceExtender = "ServiceExtender"
    RandAndroidCidWps = "RandAndroidCidWps"
    RandAndroidCid = "RandAndroidCid"
    RandMotorolaCidWps = "RandMotorolaCidWps"
    RandMotorolaGlobalScheme = "RandMotorolaGlobalScheme"
    RandIos = "RandIos"
    RandWindowsLinux = "RandWindowsLinux"
    UnknownLocal = "UnknownLocal"
    MulticastSource = "MulticastSource"

    @property
    def is_service(self) -> bool:
        return self.name.startswith("Service")

    @property
    def is_randomized(self) -> bool:
        return self.name.startswith("Rand") or self is Bin.UnknownLocal


SERVICE_BINS = (Bin.ServiceWifiDirect, Bin.ServiceNintendo, Bin.ServiceExtender)
RANDOMIZED_BINS = tuple(b for b in Bin if b.is_randomized)


def load_shipped_ios_signatures() -> frozenset[str]:
    text = resources.files("macrand").joinpath("data/ios_signatures.txt").read_text(encoding="utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#"))


@dataclass(frozen=True)
class ClassifyConfig:
    global_scheme_floor: int = 10
    global_scheme_fraction: float = 0.20
    infrastructure_owners: tuple[str, ...] = ("Cisco", "D-Link", "Belkin")
    # an address kept longer than a default random-address lifetime is not rotating
    extender_min_span_s: float = 60.0
    wifi_direct_oui: bytes = WFA_OUI
    wifi_direct_type: int = 10
    nintendo_oui: bytes = NINTENDO_OUI
    apple_owner: str = "Apple"
    apple_oui: bytes = APPLE_OUI
    # vendor type of the constant Apple IE added by iOS 10; not published, so configurable
    apple_ios_vendor_type: int = 10

    def to_json(self) -> dict:
        return {
            "global_scheme_floor": self.global_scheme_floor,
            "global_scheme_fraction": self.global_scheme_fraction,
            "infrastructure_owners": list(self.infrastructure_owners),
            "extender_min_span_s": self.extender_min_span_s,
            "wifi_direct_type": self.wifi_direct_type,
            "apple_ios_vendor_type": self.apple_ios_vendor_type,
        }


@dataclass
class DeviceRecord:
    key: str
    bin: Bin
    addresses: set[MacAddress]
    signatures_global: set[DeviceSignature] = field(default_factory=set)
    signatures_random: set[DeviceSignature] = field(default_factory=set)
    wps: WpsAttributes | None = None
    evidence: list[str] = field(default_factory=list)
    linked_global: MacAddress | None = None
    link_methods: list[str] = field(default_factory=list)

    @property
    def seqchain_linked(self) -> bool:
        return "SeqChain" in self.link_methods

    @property
    def key_is_uuid(self) -> bool:
        return len(self.key) == 32 and ":" not in self.key

    def to_json(self) -> dict:
        return {
            "key": self.key,
            "bin": self.bin.value,
            "signatures_global": sorted(s.canonical for s in self.signatures_global),
            "signatures_random": sorted(s.canonical for s in self.signatures_random),
            "addresses": sorted(str(a) for a in self.addresses),
            "wps": self.wps.to_json() if self.wps else None,
            "evidence": list(self.evidence),
            "linked_global": str(self.linked_global) if self.linked_global else None,
            "link_methods": sorted(set(self.link_methods)),
        }

    @classmethod
    def from_json(cls, d: dict) -> "DeviceRecord":
        return cls(
            key=d["key"],
            bin=Bin(d["bin"]),
            addresses={MacAddress.parse(a) for a in d["addresses"]},
            signatures_global={DeviceSignature.parse(s) for s in d["signatures_global"]},
            signatures_random={DeviceSignature.parse(s) for s in d["signatures_random"]},
            wps=WpsAttributes.from_json(d.get("wps")),
            evidence=list(d.get("evidence", [])),
            linked_global=MacAddress.parse(d["linked_global"]) if d.get("linked_global") else None,
            link_methods=list(d.get("link_methods", [])),
        )


def _safe_signature(frame: ManagementFrame) -> DeviceSignature | None:
    try:
        return derive_signature(frame)
    except ValueError:
        return None


def group_by_source(frames: Iterable[ManagementFrame], kinds=(FrameKind.ProbeRequest,)
                    ) -> dict[MacAddress, list[ManagementFrame]]:
    out: dict[MacAddress, list[ManagementFrame]] = defaultdict(list)
    for f in frames:
        if f.kind in kinds and f.source is not None:
            out[f.source].append(f)
    return dict(out)


def filter_services(
    by_source: Mapping[MacAddress, list[ManagementFrame]],
    registry: PrefixRegistry,
    config: ClassifyConfig = ClassifyConfig(),
) -> dict[MacAddress, Bin | None]:
    """Label locally assigned sources used by P2P services or extenders."""
    out: dict[MacAddress, Bin | None] = {}
    for addr, frames in by_source.items():
        out[addr] = _service_bin(addr, frames, registry, config)
    return out


def _service_bin(addr, frames, registry, config) -> Bin | None:
    if any(f.vendor_ies(config.wifi_direct_oui, config.wifi_direct_type) for f in frames):
        return Bin.ServiceWifiDirect
    if any((f.ssid or b"").startswith(b"DIRECT-") for f in frames):
        return Bin.ServiceWifiDirect
    if any(f.vendor_ies(config.nintendo_oui) for f in frames):
        return Bin.ServiceNintendo
    if is_extender(addr, frames, registry, config):
        return Bin.ServiceExtender
    return None


def is_extender(addr, frames, registry, config=ClassifyConfig()) -> bool:
    # all three conjuncts: infrastructure OUI underneath, one SSID, stable address
    entry = registry.resolve(strip_local_bit(addr))
    if entry is None or entry.owner not in config.infrastructure_owners:
        return False
    ssids = {f.ssid for f in frames if f.ssid}
    if len(ssids) != 1:
        return False
    times = [f.timestamp for f in frames]
    return (max(times) - min(times)) / 1e6 >= config.extender_min_span_s


def detect_global_scheme(
    frames: Iterable[ManagementFrame],
    exclude: Iterable[MacAddress] = (),
    floor: int = 10,
    fraction: float = 0.20,
) -> set[bytes]:
    """Global prefixes that account for an abnormal share of one capture's
    distinct probe-request sources (OUI-prefixed randomization)."""
    excluded = set(exclude)
    sources = {f.source for f in frames if f.kind is FrameKind.ProbeRequest and f.source is not None}
    sources = {a for a in sources if a not in excluded and not a.is_multicast}
    per_prefix: dict[bytes, int] = defaultdict(int)
    for a in sources:
        if classify_bits(a) is AddressClass.GlobalUnicast:
            per_prefix[a.prefix] += 1
    total = len(sources)
    return {p for p, n in per_prefix.items() if n > floor and n > fraction * total}


def bootstrap_ios_signatures(
    frames: Iterable[ManagementFrame],
    registry: PrefixRegistry,
    seed: Iterable[str] = (),
    apple_owner: str = "Apple",
) -> frozenset[str]:
    """Seed list plus every signature seen from a global Apple-OUI source."""
    sigs = set(seed)
    for f in frames:
        if f.source is None or f.kind not in (FrameKind.ProbeRequest, FrameKind.Association):
            continue
        if classify_bits(f.source) is not AddressClass.GlobalUnicast:
            continue
        entry = registry.resolve(f.source)
        if entry is None or entry.owner != apple_owner:
            continue
        sig = _safe_signature(f)
        if sig is not None and sig.ie_tags:
            sigs.add(sig.canonical)
    return frozenset(sigs)


@dataclass
class BinContext:
    registry: PrefixRegistry
    ios_signatures: frozenset[str] = frozenset()
    associated_sources: frozenset[MacAddress] = frozenset()
    apple_ie_sources: frozenset[MacAddress] = frozenset()
    config: ClassifyConfig = ClassifyConfig()


def assign_randomization_bin(record: DeviceRecord, ctx: BinContext) -> Bin:
    """Scheme bin for a non-service locally assigned record; also appends
    the rule identifiers that fired to ``record.evidence``."""
    prefixes = {a.prefix for a in record.addresses}
    has_uuid = record.wps is not None and record.wps.uuid_e is not None
    if prefixes == {GOOGLE_CID}:
        record.evidence.append("prefix:DA:A1:19")
        if has_uuid:
            record.evidence.append("wps:uuid_e")
            return Bin.RandAndroidCidWps
        return Bin.RandAndroidCid
    if prefixes == {MOTOROLA_RANDOM_PREFIX}:
        record.evidence.append("prefix:92:68:C3")
        if has_uuid:
            record.evidence.append("wps:uuid_e")
            return Bin.RandMotorolaCidWps
        record.evidence.append("92:68:C3-without-uuid")
        return Bin.UnknownLocal
    unregistered = all(ctx.registry.resolve(a) is None for a in record.addresses)
    if unregistered:
        if any(s.canonical in ctx.ios_signatures for s in record.signatures_random):
            record.evidence.append("ios:signature")
            return Bin.RandIos
        if record.addresses & ctx.apple_ie_sources:
            record.evidence.append("ios:apple-vendor-ie")
            return Bin.RandIos
    if record.addresses & ctx.associated_sources:
        record.evidence.append("assoc:local-source")
        return Bin.RandWindowsLinux
    record.evidence.append("no-rule")
    return Bin.UnknownLocal


def classify_frames(
    frames: list[ManagementFrame],
    registry: PrefixRegistry,
    config: ClassifyConfig = ClassifyConfig(),
    ios_signatures: frozenset[str] = frozenset(),
) -> list[DeviceRecord]:
    """Bin every probe-request source address of one capture."""
    probes = group_by_source(frames)
    associated = frozenset(
        f.source
        for f in frames
        if f.source is not None
        and f.source.is_local
        and (
            (f.kind is FrameKind.Authentication and f.auth_transaction in (1, 3))
            or f.is_assoc_request
            or (f.kind is FrameKind.Data and f.frame_type == 2)
        )
    )
    apple_ie = frozenset(
        a for a, fs in probes.items()
        if any(f.vendor_ies(config.apple_oui, config.apple_ios_vendor_type) for f in fs)
    )

    records: list[DeviceRecord] = []
    local_sources = {a: fs for a, fs in probes.items() if classify_bits(a) is AddressClass.LocalUnicast}
    services = filter_services(local_sources, registry, config)
    serviced = {a for a, b in services.items() if b is not None}
    flagged = detect_global_scheme(
        frames, serviced, config.global_scheme_floor, config.global_scheme_fraction
    )

    def sigs(fs):
        return {s for s in (_safe_signature(f) for f in fs) if s is not None}

    def wps_of(fs):
        found = None
        for f in fs:
            w = frame_wps(f)
            if w is not None and (found is None or (found.uuid_e is None and w.uuid_e is not None)):
                found = w
        return found

    # randomized local addresses sharing a non-degenerate UUID-E are one device
    grouped: dict[str, list[MacAddress]] = defaultdict(list)
    for addr in sorted(probes):
        fs = probes[addr]
        cls = classify_bits(addr)
        if cls is AddressClass.Multicast:
            records.append(DeviceRecord(str(addr), Bin.MulticastSource, {addr}, evidence=["bits:multicast"]))
        elif cls is AddressClass.GlobalUnicast:
            if addr.prefix in flagged:
                records.append(DeviceRecord(
                    str(addr), Bin.RandMotorolaGlobalScheme, {addr}, signatures_random=sigs(fs),
                    wps=wps_of(fs), evidence=[f"global-scheme:{format_prefix(addr.prefix)}"],
                ))
            else:
                records.append(DeviceRecord(
                    str(addr), Bin.GlobalUnicast, {addr}, signatures_global=sigs(fs),
                    wps=wps_of(fs), evidence=["bits:global"],
                ))
        elif services.get(addr) is not None:
            b = services[addr]
            records.append(DeviceRecord(str(addr), b, {addr}, signatures_random=sigs(fs),
                                        wps=wps_of(fs), evidence=[f"service:{b.value}"]))
        else:
            w = wps_of(fs)
            if w is not None and w.uuid_e is not None and w.uuid_e not in DEGENERATE_UUIDS:
                grouped[w.uuid_e.hex()].append(addr)
            else:
                grouped[str(addr)].append(addr)

    ctx = BinContext(registry, ios_signatures, associated, apple_ie, config)
    for key in sorted(grouped):
        addrs = grouped[key]
        fs = [f for a in addrs for f in probes[a]]
        rec = DeviceRecord(key, Bin.UnknownLocal, set(addrs), signatures_random=sigs(fs), wps=wps_of(fs))
        w = rec.wps
        if w is not None and w.uuid_e in DEGENERATE_UUIDS:
            rec.evidence.append("wps:degenerate-uuid")
        rec.bin = assign_randomization_bin(rec, ctx)
        records.append(rec)
    records.sort(key=lambda r: r.key)
    return records


_BIN_PRECEDENCE = {b: i for i, b in enumerate([
    Bin.MulticastSource, *SERVICE_BINS, Bin.RandAndroidCidWps, Bin.RandMotorolaCidWps,
    Bin.RandAndroidCid, Bin.RandMotorolaGlobalScheme, Bin.RandIos, Bin.RandWindowsLinux,
    Bin.UnknownLocal, Bin.GlobalUnicast,
])}


def merge_records(batches: Iterable[list[DeviceRecord]]) -> list[DeviceRecord]:
    """Deterministic reduce of per-capture records into one catalog.

    Records sharing a key, or sharing any address, collapse into one; the
    more specific bin wins."""
    merged: list[DeviceRecord] = []
    by_key: dict[str, DeviceRecord] = {}
    by_addr: dict[MacAddress, DeviceRecord] = {}
    for batch in batches:
        for rec in batch:
            target = by_key.get(rec.key) or next((by_addr[a] for a in sorted(rec.addresses) if a in by_addr), None)
            if target is None:
                new = DeviceRecord(rec.key, rec.bin, set(rec.addresses), set(rec.signatures_global),
                                   set(rec.signatures_random), rec.wps, list(rec.evidence))
                merged.append(new)
                by_key[new.key] = new
                for a in new.addresses:
                    by_addr[a] = new
                continue
            target.addresses |= rec.addresses
            target.signatures_global |= rec.signatures_global
            target.signatures_random |= rec.signatures_random
            if target.wps is None:
                target.wps = rec.wps
            for e in rec.evidence:
                if e not in target.evidence:
                    target.evidence.append(e)
            if _BIN_PRECEDENCE[rec.bin] < _BIN_PRECEDENCE[target.bin]:
                target.bin = rec.bin
            for a in rec.addresses:
                by_addr[a] = target
    merged.sort(key=lambda r: r.key)
    return merged


@dataclass
class BinReport:
    counts: dict[Bin, int]
    addresses: dict[Bin, int]
    unlinked: dict[Bin, int]
    corpus: int
    global_total: int
    local_total: int
    multicast_total: int = 0

    def check(self) -> None:
        local_bins = [b for b in Bin if b.is_service or (b.is_randomized and b is not Bin.RandMotorolaGlobalScheme)]
        global_bins = [Bin.GlobalUnicast, Bin.RandMotorolaGlobalScheme]
        if sum(self.addresses[b] for b in local_bins) != self.local_total:
            raise AssertionError("local bins do not sum to the local total")
        if sum(self.addresses[b] for b in global_bins) != self.global_total:
            raise AssertionError("global bins do not sum to the global total")
        if self.global_total + self.local_total + self.multicast_total != self.corpus:
            raise AssertionError("totals do not sum to the corpus")

    def to_json(self) -> dict:
        return {
            "counts": {b.value: self.counts[b] for b in Bin},
            "addresses": {b.value: self.addresses[b] for b in Bin},
            "unlinked": {b.value: self.unlinked[b] for b in Bin},
            "totals": {"corpus": self.corpus, "global": self.global_total, "local": self.local_total,
                       "multicast": self.multicast_total},
        }


def build_bin_report(catalog: Iterable[DeviceRecord]) -> BinReport:
    """Distinct-device counts per bin.

    Randomized records count once per linked identity when derandomization
    linked them, otherwise once per key (the UUID-E or the address itself)."""
    keys: dict[Bin, set[str]] = {b: set() for b in Bin}
    addrs: dict[Bin, set[MacAddress]] = {b: set() for b in Bin}
    unlinked: dict[Bin, int] = {b: 0 for b in Bin}
    all_addrs: set[MacAddress] = set()
    for rec in catalog:
        all_addrs |= rec.addresses
        addrs[rec.bin] |= rec.addresses
        if rec.bin.is_randomized and rec.linked_global is not None:
            keys[rec.bin].add("linked:" + str(rec.linked_global))
        else:
            keys[rec.bin].add(rec.key)
            if rec.bin.is_randomized:
                unlinked[rec.bin] += 1
    counts = {b: len(keys[b]) for b in Bin}
    cls = [classify_bits(a) for a in all_addrs]
    return BinReport(
        counts=counts,
        addresses={b: len(addrs[b]) for b in Bin},
        unlinked=unlinked,
        corpus=len(all_addrs),
        global_total=sum(c is AddressClass.GlobalUnicast for c in cls),
        local_total=sum(c is AddressClass.LocalUnicast for c in cls),
        multicast_total=sum(c is AddressClass.Multicast for c in cls),
    )


def render_bin_report(report: BinReport) -> str:
    lines = [
        "Corpus",
        f"  {'distinct addresses':<28}{report.corpus:>10}",
        f"  {'globally unique':<28}{report.global_total:>10}",
        f"  {'locally assigned':<28}{report.local_total:>10}",
        "",
        f"{'bin':<28}{'devices':>10}{'addresses':>12}{'unlinked':>10}",
    ]
    for b in Bin:
        if report.addresses[b] == 0 and report.counts[b] == 0:
            continue
        lines.append(f"{b.value:<28}{report.counts[b]:>10}{report.addresses[b]:>12}{report.unlinked[b]:>10}")
    return "\n".join(lines)


def bin_report_csv(report: BinReport) -> str:
    rows = ["bin,devices,addresses,unlinked"]
    for b in Bin:
        rows.append(f"{b.value},{report.counts[b]},{report.addresses[b]},{report.unlinked[b]}")
    return "\n".join(rows) + "\n"
