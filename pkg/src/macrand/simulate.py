"""Deterministic ground-truth trace synthesizer.

Each TraceScript describes one device. ``synthesize`` renders every
script to frames, interleaves them by timestamp and writes a LINKTYPE 105
pcap plus one ground-truth JSON line per device.
"""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from macrand.address import APPLE_OUI, GOOGLE_CID, MOTOROLA_RANDOM_PREFIX, WPS_OUI, MacAddress
from macrand.capture import LINKTYPE_IEEE802_11, write_pcap
from macrand.dot11 import (
    BROADCAST,
    WPS_VENDOR_TYPE,
    InformationElement,
    ManagementFrame,
    WpsAttributes,
    association_request,
    association_response,
    authentication,
    beacon,
    data_frame,
    encode_frame,
    probe_request,
)
from macrand.signature import DeviceSignature, ies_from_signature

SEQ_MOD = 4096
EPOCH_US = 1_500_000_000 * 1_000_000
TYPE6_VENDOR_TYPE = 6


class Scheme(enum.Enum):
    IosFullRandom = "IosFullRandom"
    AndroidCid = "AndroidCid"
    MotorolaCid = "MotorolaCid"
    MotorolaGlobalRandom = "MotorolaGlobalRandom"
    NoRandomization = "NoRandomization"
    WindowsLinuxAssociated = "WindowsLinuxAssociated"


# schemes that leak global probes on screen-on / incoming-call triggers
GLOBAL_TRIGGER_SCHEMES = frozenset({Scheme.AndroidCid, Scheme.MotorolaCid})


class EventKind(enum.Enum):
    ProbeBurst = "ProbeBurst"
    ScreenOn = "ScreenOn"
    IncomingCall = "IncomingCall"
    Associate = "Associate"
    HotspotBeacon = "HotspotBeacon"
    DirectedProbe = "DirectedProbe"


@dataclass(frozen=True)
class Event:
    time_s: float
    kind: EventKind
    ssid: bytes | None = None

    def to_json(self) -> dict:
        d = {"time_s": self.time_s, "kind": self.kind.value}
        if self.ssid is not None:
            d["ssid"] = self.ssid.decode("utf-8", "backslashreplace")
        return d


class ScriptConflict(ValueError):
    pass


@dataclass
class TraceScript:
    device_id: str
    scheme: Scheme
    global_mac: MacAddress
    sig_global: DeviceSignature
    sig_random: DeviceSignature
    events: list[Event] = field(default_factory=list)
    bluetooth_mac: MacAddress | None = None
    wps: WpsAttributes | None = None
    rand_lifetime_s: int = 60  # 0 rotates on every burst
    seed: int = 0
    random_oui: bytes | None = None  # MotorolaGlobalRandom only; defaults to the global OUI

    def __post_init__(self):
        times = [e.time_s for e in self.events]
        if times != sorted(times):
            raise ValueError(f"{self.device_id}: events must be time ordered")


@dataclass(frozen=True)
class SimConfig:
    burst_min: int = 3
    burst_max: int = 5
    intra_burst_s: float = 0.020
    global_burst: int = 3
    hotspot_beacons: int = 3
    beacon_interval_s: float = 0.1024
    drop_probability: float = 0.0
    seed: int = 0
    ap_mac: MacAddress = MacAddress.parse("00:0B:85:00:00:01")


def random_address(scheme: Scheme, rng: random.Random, oui: bytes | None = None) -> MacAddress:
    """One fresh randomized address for a scheme."""
    tail = rng.getrandbits(24).to_bytes(3, "big")
    if scheme is Scheme.AndroidCid:
        return MacAddress(GOOGLE_CID + tail)
    if scheme is Scheme.MotorolaCid:
        return MacAddress(MOTOROLA_RANDOM_PREFIX + tail)
    if scheme is Scheme.MotorolaGlobalRandom:
        if oui is None:
            raise ValueError("OUI-prefixed randomization needs an OUI")
        return MacAddress(oui + tail)
    if scheme in (Scheme.IosFullRandom, Scheme.WindowsLinuxAssociated):
        raw = rng.getrandbits(48).to_bytes(6, "big")
        return MacAddress(bytes([(raw[0] & 0xFC) | 0x02]) + raw[1:])
    raise ValueError(f"{scheme.value} does not randomize")


def random_addresses(scheme: Scheme, n: int, seed: int = 0, oui: bytes | None = None) -> list[MacAddress]:
    rng = random.Random(seed)
    return [random_address(scheme, rng, oui) for _ in range(n)]


class _Device:
    def __init__(self, script: TraceScript, cfg: SimConfig):
        self.s = script
        self.cfg = cfg
        self.rng = random.Random(script.seed)
        self.seq = self.rng.randrange(SEQ_MOD)
        self.addr: MacAddress | None = None
        self.addr_born = 0.0
        self.out: list[tuple[int, ManagementFrame]] = []
        self.addresses: set[MacAddress] = set()
        self.ies_cache: dict = {}
        self.ap_seq = self.rng.randrange(SEQ_MOD)

    @property
    def randomizes(self) -> bool:
        return self.s.scheme is not Scheme.NoRandomization

    def next_seq(self) -> int:
        v = self.seq
        self.seq = (self.seq + 1) % SEQ_MOD
        return v

    def emit(self, t: float, frame: ManagementFrame) -> None:
        if frame.source is not None and frame.source != self.cfg.ap_mac:
            self.addresses.add(frame.source)
        self.out.append((EPOCH_US + round(t * 1e6), frame))

    def ies(self, sig: DeviceSignature, ssid: bytes = b"") -> list[InformationElement]:
        key = (sig.canonical, ssid)
        if key not in self.ies_cache:
            payloads = {}
            if self.s.wps is not None:
                payloads[(WPS_OUI, WPS_VENDOR_TYPE)] = self.s.wps.encode_tlvs()
            self.ies_cache[key] = ies_from_signature(sig, ssid, payloads)
        return self.ies_cache[key]

    def current_random(self, t: float) -> MacAddress:
        life = self.s.rand_lifetime_s
        if self.addr is None or life == 0 or t - self.addr_born >= life:
            oui = self.s.random_oui or self.s.global_mac.prefix
            self.addr = random_address(self.s.scheme, self.rng, oui)
            self.addr_born = t
        return self.addr

    def burst(self, t: float, src: MacAddress, sig: DeviceSignature, ssid: bytes = b"", n: int | None = None) -> float:
        if n is None:
            n = self.rng.randint(self.cfg.burst_min, self.cfg.burst_max)
        ies = self.ies(sig, ssid)
        for _ in range(n):
            self.emit(t, probe_request(src, self.next_seq(), ies))
            t += self.cfg.intra_burst_s
        return t

    def scan(self, t: float, ssid: bytes = b"") -> float:
        if self.randomizes:
            return self.burst(t, self.current_random(t), self.s.sig_random, ssid)
        return self.burst(t, self.s.global_mac, self.s.sig_global, ssid)

    def associate(self, t: float, ssid: bytes) -> float:
        t = self.scan(t)
        ap = self.cfg.ap_mac
        me = self.addr if self.s.scheme is Scheme.WindowsLinuxAssociated else self.s.global_mac
        step = 0.002
        self.emit(t, authentication(me, ap, ap, self.next_seq(), transaction=1))
        t += step
        self.emit(t, authentication(ap, me, ap, self.ap_seq, transaction=2))
        self.ap_seq = (self.ap_seq + 1) % SEQ_MOD
        t += step
        self.emit(t, association_request(me, ap, self.next_seq(), self.ies(self.s.sig_global, ssid)))
        t += step
        self.emit(t, association_response(ap, me, self.ap_seq))
        self.ap_seq = (self.ap_seq + 1) % SEQ_MOD
        for _ in range(2):
            t += step
            self.emit(t, data_frame(me, ap, BROADCAST, self.next_seq(), b"\xaa\xaa\x03\x00\x00\x00\x08\x00"))
        return t + step

    def hotspot(self, t: float) -> float:
        if self.s.bluetooth_mac is None:
            raise ValueError(f"{self.s.device_id}: HotspotBeacon needs a bluetooth_mac")
        first = (self.rng.getrandbits(8) & 0xFC) | 0x02
        src = MacAddress(bytes([first]) + self.s.global_mac.raw[1:])
        ies = [
            InformationElement(0, b""),
            InformationElement(1, bytes([0x82, 0x84, 0x8B, 0x96])),
            InformationElement.vendor(APPLE_OUI, TYPE6_VENDOR_TYPE, self.s.bluetooth_mac.raw),
        ]
        for _ in range(self.cfg.hotspot_beacons):
            self.emit(t, beacon(src, self.next_seq(), ies))
            t += self.cfg.beacon_interval_s
        return t

    def run(self) -> None:
        for ev in self.s.events:
            t = ev.time_s
            k = ev.kind
            if k is EventKind.ProbeBurst:
                self.scan(t)
            elif k in (EventKind.ScreenOn, EventKind.IncomingCall):
                if self.s.scheme in GLOBAL_TRIGGER_SCHEMES:
                    t = self.burst(t, self.s.global_mac, self.s.sig_global, n=self.cfg.global_burst)
                self.scan(t)
            elif k is EventKind.DirectedProbe:
                self.scan(t, ev.ssid or b"")
            elif k is EventKind.Associate:
                self.associate(t, ev.ssid or b"")
            elif k is EventKind.HotspotBeacon:
                self.hotspot(t)


@dataclass
class SynthesisResult:
    frames: list[tuple[int, ManagementFrame]]
    ground_truth: list[dict]
    dropped: int = 0

    def address_owner(self) -> dict[MacAddress, str]:
        return {MacAddress.parse(a): g["device_id"] for g in self.ground_truth for a in g["addresses"]}


def render(scripts: Sequence[TraceScript], config: SimConfig = SimConfig()) -> SynthesisResult:
    """Frames of all scripts, time ordered, plus ground truth."""
    seen: dict[MacAddress, str] = {}
    for s in scripts:
        if s.global_mac in seen:
            raise ScriptConflict(f"{s.device_id} and {seen[s.global_mac]} share {s.global_mac}")
        seen[s.global_mac] = s.device_id
    merged: list[tuple[int, int, int, ManagementFrame]] = []
    truth = []
    for order, s in enumerate(scripts):
        dev = _Device(s, config)
        dev.run()
        merged.extend((ts, order, i, f) for i, (ts, f) in enumerate(dev.out))
        truth.append({
            "device_id": s.device_id,
            "scheme": s.scheme.value,
            "global_mac": str(s.global_mac),
            "addresses": sorted(str(a) for a in dev.addresses),
            "events": [e.to_json() for e in s.events],
        })
    merged.sort(key=lambda x: (x[0], x[1], x[2]))
    drop_rng = random.Random(config.seed ^ 0x5EED)
    frames, dropped = [], 0
    for ts, _, _, f in merged:
        if config.drop_probability and drop_rng.random() < config.drop_probability:
            dropped += 1
            continue
        frames.append((ts, f.with_timestamp(ts)))
    return SynthesisResult(frames, truth, dropped)


def synthesize(scripts: Sequence[TraceScript], out: str | Path, config: SimConfig = SimConfig(),
               truth_path: str | Path | None = None) -> SynthesisResult:
    """Write ``out`` (pcap) and ``truth_path`` (JSON lines, default ``out`` + .truth.jsonl)."""
    res = render(scripts, config)
    out = Path(out)
    write_pcap(out, ((ts, encode_frame(f)) for ts, f in res.frames), LINKTYPE_IEEE802_11)
    truth_path = Path(truth_path) if truth_path else out.with_name(out.name + ".truth.jsonl")
    with open(truth_path, "w", encoding="utf-8") as fh:
        for g in res.ground_truth:
            fh.write(json.dumps(g, sort_keys=True) + "\n")
    return res


def load_ground_truth(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


def periodic(kind: EventKind, start: float, end: float, period: float, ssid: bytes | None = None) -> list[Event]:
    out, t = [], start
    while t < end:
        out.append(Event(round(t, 6), kind, ssid))
        t += period
    return out


def merge_events(*groups: Iterable[Event]) -> list[Event]:
    return sorted((e for g in groups for e in g), key=lambda e: e.time_s)
