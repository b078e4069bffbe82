"""Attacks that recover a device's global MAC address from randomized traffic."""

from __future__ import annotations

import bisect
import enum
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from macrand.address import APPLE_OUI, MacAddress
from macrand.dot11 import FrameKind, ManagementFrame
from macrand.signature import DeviceSignature, derive_signature

log = logging.getLogger(__name__)

SEQ_MOD = 4096
# ordered frames of one radio must step forward by less than half the space
MAX_FORWARD_STEP = SEQ_MOD // 2 - 1
TYPE6_VENDOR_TYPE = 6
DEFAULT_OFFLOAD_SSIDS = (b"BELL_WIFI", b"5099251212", b"attwifibn")


class Method(enum.Enum):
    SeqChain = "SeqChain"
    UuidReversal = "UuidReversal"
    AuthAssoc = "AuthAssoc"
    Type6Correlation = "Type6Correlation"


class Confidence(enum.Enum):
    Exact = "Exact"
    Heuristic = "Heuristic"


class MalformedType6(ValueError):
    pass


@dataclass
class LinkResult:
    global_mac: MacAddress
    randomized: set[MacAddress]
    method: Method
    confidence: Confidence
    evidence: list[tuple[int, int, int]] = field(default_factory=list)  # (frame idx, frame idx, seq delta)
    capture: str | None = None
    bluetooth: MacAddress | None = None
    offset_class: str | None = None

    def __post_init__(self):
        if self.method in (Method.UuidReversal, Method.Type6Correlation) and self.confidence is not Confidence.Exact:
            raise ValueError(f"{self.method.value} links are exact")
        if self.method in (Method.SeqChain, Method.AuthAssoc) and not self.evidence:
            raise ValueError(f"{self.method.value} links need evidence")

    def to_json(self) -> dict:
        return {
            "global": str(self.global_mac),
            "randomized": sorted(str(a) for a in self.randomized),
            "method": self.method.value,
            "confidence": self.confidence.value,
            "evidence": [list(e) for e in self.evidence],
            "capture": self.capture,
            "bluetooth": str(self.bluetooth) if self.bluetooth else None,
            "offset_class": self.offset_class,
        }

    @classmethod
    def from_json(cls, d: dict) -> "LinkResult":
        return cls(
            global_mac=MacAddress.parse(d["global"]),
            randomized={MacAddress.parse(a) for a in d["randomized"]},
            method=Method(d["method"]),
            confidence=Confidence(d["confidence"]),
            evidence=[tuple(e) for e in d.get("evidence", [])],
            capture=d.get("capture"),
            bluetooth=MacAddress.parse(d["bluetooth"]) if d.get("bluetooth") else None,
            offset_class=d.get("offset_class"),
        )


@dataclass(frozen=True)
class ChainConfig:
    max_gap: int = 30
    max_dt_s: float = 2.0
    validate: bool = True
    max_rounds: int = 16

    @property
    def max_dt_us(self) -> int:
        return int(self.max_dt_s * 1e6)


@dataclass
class Ambiguity:
    frame_index: int
    address: MacAddress
    candidates: list[MacAddress]
    method: str

    def to_json(self) -> dict:
        return {"frame_index": self.frame_index, "address": str(self.address),
                "candidates": sorted(str(c) for c in self.candidates), "method": self.method}


def seq_delta(newer: int, older: int) -> int:
    return (newer - older) % SEQ_MOD


def local_bit_randomized(addr: MacAddress) -> bool:
    return addr.is_local


@dataclass
class _Entry:
    idx: int
    frame: ManagementFrame
    sig: DeviceSignature | None

    @property
    def seq(self) -> int:
        return self.frame.sequence_number

    @property
    def ts(self) -> int:
        return self.frame.timestamp

    @property
    def addr(self) -> MacAddress:
        return self.frame.source


@dataclass
class _Merge:
    trigger: int  # frame index that caused the join
    tail: int     # frame index of the joined chain's tail
    delta: int
    a: MacAddress
    b: MacAddress


class _UnionFind:
    def __init__(self):
        self.parent: dict[MacAddress, MacAddress] = {}
        self.members: dict[MacAddress, set[MacAddress]] = {}

    def add(self, a):
        if a not in self.parent:
            self.parent[a] = a
            self.members[a] = {a}

    def find(self, a):
        p = self.parent
        root = a
        while p[root] != root:
            root = p[root]
        while p[a] != root:
            p[a], a = root, p[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if len(self.members[ra]) < len(self.members[rb]) or (
            len(self.members[ra]) == len(self.members[rb]) and rb < ra
        ):
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.members[ra] |= self.members.pop(rb)
        return ra


@dataclass
class Chains:
    """Outcome of one chaining pass over a capture."""

    components: list[set[MacAddress]]
    frames: dict[MacAddress, list[_Entry]]
    merges: list[_Merge]
    ambiguities: list[Ambiguity]
    randomized: Callable[[MacAddress], bool]

    def component_entries(self, comp: set[MacAddress]) -> list[_Entry]:
        out = [e for a in comp for e in self.frames[a]]
        out.sort(key=lambda e: (e.ts, e.idx))
        return out


def _compatible(a: DeviceSignature | None, b: DeviceSignature | None, pairs: set[tuple[str, str]]) -> bool:
    if a is None or b is None:
        return False
    ca, cb = a.canonical, b.canonical
    return ca == cb or (ca, cb) in pairs or (cb, ca) in pairs


def _probe_entries(frames: Sequence[ManagementFrame], exclude: set[MacAddress]) -> list[_Entry]:
    out = []
    for i, f in enumerate(frames):
        if f.kind is not FrameKind.ProbeRequest or f.source is None or f.sequence_number is None:
            continue
        if f.source in exclude or f.source.is_multicast:
            continue
        try:
            sig = derive_signature(f)
        except ValueError:
            sig = None
        out.append(_Entry(i, f, sig))
    out.sort(key=lambda e: (e.ts, e.idx))
    return out


def _chain_once(entries, cfg, pairs, randomized, banned, bootstrap):
    uf = _UnionFind()
    tails: dict[MacAddress, _Entry] = {}
    recent: list[tuple[int, MacAddress]] = []  # (ts, root at the time), time ordered
    merges: list[_Merge] = []
    ambiguities: list[Ambiguity] = []
    globals_: dict[MacAddress, set[MacAddress]] = {}

    def fits(t: _Entry, e: _Entry) -> int | None:
        d = seq_delta(e.seq, t.seq)
        if 1 <= d <= cfg.max_gap and 0 <= e.ts - t.ts <= cfg.max_dt_us:
            return d
        return None

    for e in entries:
        a = e.addr
        if a not in uf.parent:
            uf.add(a)
            globals_[a] = set() if randomized(a) else {a}
        ra = uf.find(a)
        own = tails.get(ra)
        if own is not None and fits(own, e) is not None:
            tails[ra] = e
            recent.append((e.ts, ra))
            continue
        cands: list[tuple[MacAddress, _Entry, int]] = []
        seen_roots = set()
        lo = e.ts - cfg.max_dt_us
        for k in range(len(recent) - 1, -1, -1):
            ts, r0 = recent[k]
            if ts < lo:
                break
            r = uf.find(r0)
            if r == ra or r in seen_roots:
                continue
            seen_roots.add(r)
            t = tails[r]
            d = fits(t, e)
            if d is None or (e.idx, t.idx) in banned:
                continue
            if len(globals_[ra] | globals_[r]) > 1:
                continue
            ok = _compatible(t.sig, e.sig, pairs)
            if not ok and bootstrap and d == 1:
                # cross-signature join while learning: strict successor between a global and a randomized address
                ok = randomized(t.addr) != randomized(a)
            if ok:
                cands.append((r, t, d))
        if len(cands) == 1:
            r, t, d = cands[0]
            merges.append(_Merge(e.idx, t.idx, d, t.addr, a))
            g = globals_[ra] | globals_[r]
            ra = uf.union(ra, r)
            globals_[ra] = g
        elif len(cands) > 1:
            amb = Ambiguity(e.idx, a, sorted(t.addr for _, t, _ in cands), "SeqChain")
            log.info("ambiguous chain join at frame %d (%s): %d candidates", e.idx, a, len(cands))
            ambiguities.append(amb)
        tails[ra] = e
        recent.append((e.ts, ra))

    roots: dict[MacAddress, set[MacAddress]] = {}
    for a in uf.parent:
        roots.setdefault(uf.find(a), set()).add(a)
    return list(roots.values()), merges, ambiguities


def _violations(comp_entries: list[_Entry]) -> list[tuple[_Entry, _Entry]]:
    bad = []
    for p, q in zip(comp_entries, comp_entries[1:]):
        if p.addr == q.addr:
            continue
        if not 1 <= seq_delta(q.seq, p.seq) <= MAX_FORWARD_STEP:
            bad.append((p, q))
    return bad


def _culprit(merges: list[_Merge], a: MacAddress, b: MacAddress) -> _Merge | None:
    uf = _UnionFind()
    for m in merges:
        uf.add(m.a)
        uf.add(m.b)
        uf.union(m.a, m.b)
        if a in uf.parent and b in uf.parent and uf.find(a) == uf.find(b):
            return m
    return None


def build_chains(
    frames: Sequence[ManagementFrame],
    pairs: Iterable[tuple[DeviceSignature, DeviceSignature]] = (),
    *,
    config: ChainConfig = ChainConfig(),
    randomized: Callable[[MacAddress], bool] = local_bit_randomized,
    exclude: Iterable[MacAddress] = (),
    bootstrap: bool = False,
) -> Chains:
    """Greedy time-ordered chaining of probe requests by sequence number.

    After each pass every chain is checked: its frames in time order must
    keep stepping forward. A merge that broke this is banned and the pass
    is rerun until no chain is inconsistent."""
    pair_keys = {(g.canonical, r.canonical) for g, r in pairs}
    entries = _probe_entries(frames, set(exclude))
    by_addr: dict[MacAddress, list[_Entry]] = defaultdict(list)
    for e in entries:
        by_addr[e.addr].append(e)
    banned: set[tuple[int, int]] = set()
    for _ in range(config.max_rounds):
        comps, merges, ambiguities = _chain_once(entries, config, pair_keys, randomized, banned, bootstrap)
        chains = Chains(comps, dict(by_addr), merges, ambiguities, randomized)
        if not config.validate:
            return chains
        new_bans = set()
        for comp in comps:
            if len(comp) < 2:
                continue
            for p, q in _violations(chains.component_entries(comp)):
                m = _culprit(merges, p.addr, q.addr)
                if m is not None:
                    new_bans.add((m.trigger, m.tail))
        if not new_bans:
            return chains
        log.info("banning %d inconsistent chain merges", len(new_bans))
        banned |= new_bans
    return chains


def chain_sequences(
    frames: Sequence[ManagementFrame],
    pairs: Iterable[tuple[DeviceSignature, DeviceSignature]] = (),
    *,
    config: ChainConfig = ChainConfig(),
    randomized: Callable[[MacAddress], bool] = local_bit_randomized,
    exclude: Iterable[MacAddress] = (),
    bootstrap: bool = False,
    capture: str | None = None,
) -> tuple[list[LinkResult], list[Ambiguity]]:
    """One SeqChain link per chain holding a global address and two or more frames."""
    chains = build_chains(frames, pairs, config=config, randomized=randomized, exclude=exclude, bootstrap=bootstrap)
    return chain_links(chains, capture), chains.ambiguities


def chain_links(chains: Chains, capture: str | None = None) -> list[LinkResult]:
    merges_by_trigger = defaultdict(list)
    for m in chains.merges:
        merges_by_trigger[m.b].append(m)
    out = []
    for comp in chains.components:
        glob = [a for a in comp if not chains.randomized(a)]
        if len(glob) != 1:
            continue
        entries = chains.component_entries(comp)
        if len(entries) < 2:
            continue
        evidence = sorted(
            (m.tail, m.trigger, m.delta) for a in comp for m in merges_by_trigger.get(a, ())
            if m.a in comp
        )
        if not evidence:
            p, q = entries[0], entries[1]
            evidence = [(p.idx, q.idx, seq_delta(q.seq, p.seq))]
        out.append(LinkResult(glob[0], {a for a in comp if chains.randomized(a)},
                              Method.SeqChain, Confidence.Heuristic, evidence, capture))
    out.sort(key=lambda r: r.global_mac)
    return out


def _client_session_frames(frames: Sequence[ManagementFrame]) -> dict[MacAddress, list[int]]:
    out: dict[MacAddress, list[int]] = defaultdict(list)
    for i, f in enumerate(frames):
        if f.source is None or f.sequence_number is None:
            continue
        if (f.kind is FrameKind.Authentication and f.auth_transaction in (1, 3)) or f.is_assoc_request:
            out[f.source].append(i)
    return out


def link_auth_assoc(
    frames: Sequence[ManagementFrame],
    pairs: Iterable[tuple[DeviceSignature, DeviceSignature]] = (),
    *,
    config: ChainConfig = ChainConfig(),
    randomized: Callable[[MacAddress], bool] = local_bit_randomized,
    exclude: Iterable[MacAddress] = (),
    chains: Chains | None = None,
    capture: str | None = None,
) -> tuple[list[LinkResult], list[Ambiguity]]:
    """Link a global-source authentication/association exchange to the
    randomized probe chain whose sequence counter it continues."""
    pairs = list(pairs)
    pair_keys = {(g.canonical, r.canonical) for g, r in pairs}
    if chains is None:
        chains = build_chains(frames, pairs, config=config, randomized=randomized, exclude=exclude)
    comp_entries = []
    for comp in chains.components:
        if not any(chains.randomized(a) for a in comp):
            continue
        ents = chains.component_entries(comp)
        comp_entries.append((comp, ents, [e.ts for e in ents],
                             {e.sig.canonical: e.sig for e in ents if e.sig is not None}))

    links: list[LinkResult] = []
    ambiguities: list[Ambiguity] = []
    for src, idxs in sorted(_client_session_frames(frames).items()):
        if src.is_multicast or randomized(src):
            continue
        sessions: list[list[int]] = []
        for i in idxs:
            if sessions and frames[i].timestamp - frames[sessions[-1][-1]].timestamp <= config.max_dt_us:
                sessions[-1].append(i)
            else:
                sessions.append([i])
        linked: dict[frozenset, LinkResult] = {}
        for sess in sessions:
            f0 = frames[sess[0]]
            sess_sigs = [derive_signature(frames[i]) for i in sess if frames[i].ies]
            cands = []
            for comp, ents, times, sigs in comp_entries:
                if any(not chains.randomized(a) and a != src for a in comp):
                    continue
                k = bisect.bisect_right(times, f0.timestamp) - 1
                if k < 0:
                    continue
                t = ents[k]
                d = seq_delta(f0.sequence_number, t.seq)
                if not (1 <= d <= config.max_gap and f0.timestamp - t.ts <= config.max_dt_us):
                    continue
                if sess_sigs and not any(_compatible(s, c, pair_keys) for s in sess_sigs for c in sigs.values()):
                    continue
                cands.append((comp, t, d))
            if len(cands) == 1:
                comp, t, d = cands[0]
                key = frozenset(comp)
                rnd = {a for a in comp if chains.randomized(a)}
                if key in linked:
                    linked[key].evidence.append((t.idx, sess[0], d))
                else:
                    linked[key] = LinkResult(src, rnd, Method.AuthAssoc, Confidence.Heuristic,
                                             [(t.idx, sess[0], d)], capture)
            elif len(cands) > 1:
                log.info("ambiguous auth/assoc link at frame %d (%s)", sess[0], src)
                ambiguities.append(Ambiguity(sess[0], src, sorted(t.addr for _, t, _ in cands), "AuthAssoc"))
        links.extend(linked.values())
    links.sort(key=lambda r: (r.global_mac, min(r.randomized)))
    return links, ambiguities


def reverse_records(records, table) -> tuple[list[LinkResult], list[str]]:
    """UUID-E reversal for every randomized record advertising one.

    Returns the links plus the keys of records whose UUID-E is a known
    shared value (flagged, never resolved)."""
    from macrand.rainbow import is_degenerate

    links, degenerate = [], []
    for rec in records:
        if not rec.bin.is_randomized or rec.wps is None or rec.wps.uuid_e is None:
            continue
        u = rec.wps.uuid_e
        if is_degenerate(u):
            degenerate.append(rec.key)
            continue
        mac = table.lookup(u).mac
        if mac is not None:
            links.append(LinkResult(mac, set(rec.addresses), Method.UuidReversal, Confidence.Exact))
    links.sort(key=lambda r: r.global_mac)
    return links, degenerate


@dataclass
class KarmaFinding:
    device_key: str
    directed_ssids: list[bytes]
    offload_flag: bool

    def __post_init__(self):
        if not self.directed_ssids:
            raise ValueError("a finding needs at least one directed SSID")

    def to_json(self) -> dict:
        return {"device_key": self.device_key,
                "directed_ssids": [s.decode("utf-8", "backslashreplace") for s in self.directed_ssids],
                "offload_flag": self.offload_flag}


def audit_karma(
    frames_by_device: Mapping[str, Iterable[ManagementFrame]],
    offload_ssids: Iterable[bytes] = DEFAULT_OFFLOAD_SSIDS,
) -> list[KarmaFinding]:
    """Devices that named an SSID in a probe request are Karma targets."""
    offload = set(offload_ssids)
    out = []
    for key in sorted(frames_by_device):
        ssids: list[bytes] = []
        for f in frames_by_device[key]:
            if f.kind is FrameKind.ProbeRequest and f.ssid and f.ssid not in ssids:
                ssids.append(f.ssid)
        if ssids:
            out.append(KarmaFinding(key, ssids, any(s in offload for s in ssids)))
    return out


def top_ssids(findings: Iterable[KarmaFinding], n: int = 10) -> list[tuple[bytes, int]]:
    """Directed SSIDs ranked by the number of devices probing for them."""
    c = Counter(s for f in findings for s in f.directed_ssids)
    return sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))[:n]


def device_keys(records) -> dict[MacAddress, str]:
    """Address -> device key: UUID-E when known, else the linked global, else itself."""
    out = {}
    for rec in records:
        for a in rec.addresses:
            if rec.key_is_uuid:
                out[a] = rec.key
            elif rec.linked_global is not None:
                out[a] = str(rec.linked_global)
            else:
                out[a] = str(a)
    return out


def group_frames_by_device(frames: Iterable[ManagementFrame], keys: Mapping[MacAddress, str]
                           ) -> dict[str, list[ManagementFrame]]:
    out: dict[str, list[ManagementFrame]] = defaultdict(list)
    for f in frames:
        if f.source is not None and f.source in keys:
            out[keys[f.source]].append(f)
    return dict(out)


def offset_class(wifi: MacAddress, bluetooth: MacAddress) -> str:
    d = int(bluetooth) - int(wifi)
    if d == 0:
        return "Same"
    if d == 1:
        return "OneHigher"
    if d == -1:
        return "OneLower"
    if bluetooth.prefix == wifi.prefix:
        return "SameOuiOther"
    return "DifferentOui"


def type6_payload(frame: ManagementFrame, apple_oui: bytes = APPLE_OUI) -> bytes | None:
    for ie in frame.vendor_ies(apple_oui, TYPE6_VENDOR_TYPE):
        payload = ie.value[4:]
        if len(payload) != 6:
            raise MalformedType6(f"Type-6 payload is {len(payload)} bytes, expected 6")
        return payload
    return None


def correlate_type6(beacons: Iterable[ManagementFrame], *, strict: bool = True) -> list[LinkResult]:
    """Hotspot beacons: WiFi MAC = first byte of the Bluetooth address
    followed by bytes 1..5 of the beacon source."""
    found: dict[MacAddress, LinkResult] = {}
    for f in beacons:
        if f.kind is not FrameKind.Beacon or f.source is None:
            continue
        try:
            bt = type6_payload(f)
        except MalformedType6:
            if strict:
                raise
            continue
        if bt is None:
            continue
        wifi = MacAddress(bt[:1] + f.source.raw[1:])
        bluetooth = MacAddress(bt)
        if wifi in found:
            found[wifi].randomized.add(f.source)
            continue
        found[wifi] = LinkResult(wifi, {f.source}, Method.Type6Correlation, Confidence.Exact,
                                 bluetooth=bluetooth, offset_class=offset_class(wifi, bluetooth))
    return [found[k] for k in sorted(found)]


OFFSET_CLASSES = ("Same", "OneHigher", "OneLower", "SameOuiOther", "DifferentOui")


def offset_class_shares(links: Iterable[LinkResult]) -> dict[str, float]:
    c = Counter(l.offset_class for l in links if l.method is Method.Type6Correlation)
    total = sum(c.values())
    return {k: (c[k] / total if total else 0.0) for k in OFFSET_CLASSES}
