"""End-to-end analysis: classify captures, learn signature pairs, run every
derandomization method and fold the links back into the catalog."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from macrand.address import MacAddress, PrefixRegistry
from macrand.classify import (
    Bin,
    ClassifyConfig,
    DeviceRecord,
    bootstrap_ios_signatures,
    classify_frames,
    load_shipped_ios_signatures,
    merge_records,
)
from macrand.derandomize import (
    DEFAULT_OFFLOAD_SSIDS,
    Ambiguity,
    ChainConfig,
    KarmaFinding,
    LinkResult,
    Method,
    audit_karma,
    build_chains,
    chain_links,
    correlate_type6,
    device_keys,
    group_frames_by_device,
    link_auth_assoc,
    reverse_records,
)
from macrand.dot11 import FrameKind, ManagementFrame
from macrand.signature import DeviceSignature, signature_pairs

MATRIX_METHODS = ("UuidReversal", "SeqChain", "AuthAssoc", "Karma")


@dataclass
class CaptureFrames:
    name: str
    frames: list[ManagementFrame]


@dataclass(frozen=True)
class PipelineConfig:
    classify: ClassifyConfig = ClassifyConfig()
    chain: ChainConfig = ChainConfig()
    learn_pairs: bool = True
    pair_support: int = 1
    offload_ssids: tuple[bytes, ...] = DEFAULT_OFFLOAD_SSIDS

    def to_json(self) -> dict:
        return {
            "classify": self.classify.to_json(),
            "max_gap": self.chain.max_gap,
            "max_dt_s": self.chain.max_dt_s,
            "learn_pairs": self.learn_pairs,
            "pair_support": self.pair_support,
            "offload_ssids": [s.decode() for s in self.offload_ssids],
        }


@dataclass
class PipelineResult:
    records: list[DeviceRecord]
    links: list[LinkResult]
    ambiguities: list[Ambiguity] = field(default_factory=list)
    pairs: list[tuple[DeviceSignature, DeviceSignature]] = field(default_factory=list)
    karma: list[KarmaFinding] = field(default_factory=list)
    degenerate: list[str] = field(default_factory=list)
    reversal_ran: bool = False


def classify_captures(captures: Sequence[CaptureFrames], registry: PrefixRegistry,
                      config: ClassifyConfig = ClassifyConfig()) -> list[DeviceRecord]:
    all_frames = [f for c in captures for f in c.frames]
    ios = bootstrap_ios_signatures(all_frames, registry, load_shipped_ios_signatures(), config.apple_owner)
    return merge_records(classify_frames(c.frames, registry, config, ios) for c in captures)


@dataclass
class _LinkedSigs:
    signatures_global: set
    signatures_random: set
    seqchain_linked: bool = True


def _by_address(records: Sequence[DeviceRecord]) -> dict[MacAddress, DeviceRecord]:
    return {a: r for r in records for a in r.addresses}


def linked_signature_view(records: Sequence[DeviceRecord], links: Sequence[LinkResult]) -> list[_LinkedSigs]:
    """One (global signatures, randomized signatures) view per SeqChain link."""
    where = _by_address(records)
    out = []
    for link in links:
        if link.method is not Method.SeqChain or not link.randomized:
            continue
        g = where.get(link.global_mac)
        if g is None:
            continue
        rnd = set()
        for a in link.randomized:
            if a in where:
                rnd |= where[a].signatures_random
        out.append(_LinkedSigs(set(g.signatures_global), rnd))
    return out


def apply_links(records: list[DeviceRecord], links: Sequence[LinkResult]) -> None:
    """Record the linked global identity and method on every record a link touches."""
    where = _by_address(records)
    for link in links:
        g_rec = where.get(link.global_mac)
        if g_rec is not None and link.method.value not in g_rec.link_methods:
            g_rec.link_methods.append(link.method.value)
        for a in sorted(link.randomized):
            rec = where.get(a)
            if rec is None or rec is g_rec:
                continue
            if rec.linked_global is None:
                rec.linked_global = link.global_mac
            elif rec.linked_global != link.global_mac:
                note = f"link-conflict:{link.global_mac}"
                if note not in rec.evidence:
                    rec.evidence.append(note)
                continue
            if link.method.value not in rec.link_methods:
                rec.link_methods.append(link.method.value)
            if g_rec is not None and link.method is Method.SeqChain:
                rec.signatures_global |= g_rec.signatures_global
    for rec in records:
        rec.link_methods.sort()


def run_pipeline(
    captures: Sequence[CaptureFrames],
    registry: PrefixRegistry,
    config: PipelineConfig = PipelineConfig(),
    table=None,
    records: list[DeviceRecord] | None = None,
) -> PipelineResult:
    if records is None:
        records = classify_captures(captures, registry, config.classify)
    randomized_addrs = {a for r in records if r.bin.is_randomized for a in r.addresses}
    excluded = {a for r in records if r.bin.is_service or r.bin is Bin.MulticastSource for a in r.addresses}

    known = {a for r in records for a in r.addresses}

    def randomized(a: MacAddress) -> bool:
        # sources never seen probing fall back to the local bit
        return a in randomized_addrs or (a not in known and a.is_local)

    pairs: list[tuple[DeviceSignature, DeviceSignature]] = []
    if config.learn_pairs:
        boot = []
        for c in captures:
            ch = build_chains(c.frames, (), config=config.chain, randomized=randomized,
                              exclude=excluded, bootstrap=True)
            boot.extend(chain_links(ch, c.name))
        pairs = signature_pairs(linked_signature_view(records, boot), config.pair_support)

    links: list[LinkResult] = []
    ambiguities: list[Ambiguity] = []
    for c in captures:
        ch = build_chains(c.frames, pairs, config=config.chain, randomized=randomized, exclude=excluded)
        links.extend(chain_links(ch, c.name))
        ambiguities.extend(ch.ambiguities)
        aa, amb = link_auth_assoc(c.frames, pairs, config=config.chain, randomized=randomized,
                                  chains=ch, capture=c.name)
        links.extend(aa)
        ambiguities.extend(amb)
        beacons = [f for f in c.frames if f.kind is FrameKind.Beacon]
        for l in correlate_type6(beacons, strict=False):
            l.capture = c.name
            links.append(l)

    degenerate: list[str] = []
    if table is not None:
        rl, degenerate = reverse_records(records, table)
        links.extend(rl)

    apply_links(records, links)
    keys = device_keys(records)
    devices = group_frames_by_device((f for c in captures for f in c.frames), keys)
    karma = audit_karma(devices, config.offload_ssids)
    return PipelineResult(records, links, ambiguities, pairs, karma, degenerate, table is not None)


def method_matrix(result: PipelineResult) -> dict[Bin, dict[str, str]]:
    """Per randomized bin: did any device fall to each method."""
    keys_by_bin: dict[Bin, set[str]] = {}
    where = _by_address(result.records)
    for r in result.records:
        if r.bin.is_randomized:
            keys_by_bin.setdefault(r.bin, set())
    karma_keys = {k.device_key for k in result.karma}
    key_of = device_keys(result.records)
    karma_bins = {where[a].bin for a, k in key_of.items() if k in karma_keys}
    out: dict[Bin, dict[str, str]] = {}
    for b in keys_by_bin:
        row = {}
        recs = [r for r in result.records if r.bin is b]
        for m in ("UuidReversal", "SeqChain", "AuthAssoc"):
            hit = any(m in r.link_methods for r in recs)
            row[m] = "yes" if hit else "no"
        if not result.reversal_ran:
            row["UuidReversal"] = "skipped"
        row["Karma"] = "yes" if b in karma_bins else "no"
        out[b] = row
    return out


def render_matrix(matrix: dict[Bin, dict[str, str]]) -> str:
    head = f"{'bin':<28}" + "".join(f"{m:>14}" for m in MATRIX_METHODS)
    lines = [head]
    for b in Bin:
        if b in matrix:
            lines.append(f"{b.value:<28}" + "".join(f"{matrix[b][m]:>14}" for m in MATRIX_METHODS))
    return "\n".join(lines)
