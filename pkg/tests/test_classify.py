import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macrand.address import GOOGLE_CID, MacAddress, WFA_OUI, NINTENDO_OUI
from macrand.classify import (
    Bin,
    BinContext,
    ClassifyConfig,
    DeviceRecord,
    build_bin_report,
    classify_frames,
    detect_global_scheme,
    filter_services,
    is_extender,
    load_shipped_ios_signatures,
    merge_records,
    assign_randomization_bin,
)
from macrand.dot11 import InformationElement, WpsAttributes, association_request, probe_request
from macrand.pipeline import CaptureFrames, run_pipeline
from macrand.signature import DeviceSignature
from macrand.simulate import Event, EventKind, Scheme, SimConfig, TraceScript, random_address, render

from conftest import mac

SIG = DeviceSignature.parse("0,1,50")


def _probe(src, seq=1, ssid=b"", ts=0, extra=()):
    return probe_request(src, seq, [InformationElement(0, ssid), *extra]).with_timestamp(ts)


def _local(i, prefix=b"\x02\x00\x00"):
    return MacAddress(prefix + i.to_bytes(3, "big"))


# -- services ---------------------------------------------------------------

def test_wifi_direct_by_ssid():
    a = _local(1)
    assert filter_services({a: [_probe(a, ssid=b"DIRECT-AB")]}, None) == {a: Bin.ServiceWifiDirect}


def test_wifi_direct_by_vendor_ie():
    a = _local(1)
    ie = InformationElement.vendor(WFA_OUI, 10, b"\x00")
    assert filter_services({a: [_probe(a, extra=[ie])]}, None)[a] is Bin.ServiceWifiDirect


def test_nintendo(registry):
    a = _local(2)
    ie = InformationElement.vendor(NINTENDO_OUI, 1, b"\x00")
    assert filter_services({a: [_probe(a, extra=[ie])]}, registry)[a] is Bin.ServiceNintendo


CISCO_LOCAL = mac("02:40:96:11:22:33")  # 00:40:96 with the local bit


def test_extender_all_conjuncts(registry):
    frames = [_probe(CISCO_LOCAL, ssid=b"Office", ts=t * 10_000_000) for t in range(8)]
    assert filter_services({CISCO_LOCAL: frames}, registry)[CISCO_LOCAL] is Bin.ServiceExtender


@pytest.mark.parametrize("case", ["not-infrastructure", "two-ssids", "short-span"])
def test_extender_conjunct_counterexamples(registry, case):
    addr = CISCO_LOCAL
    frames = [_probe(addr, ssid=b"Office", ts=t * 10_000_000) for t in range(8)]
    if case == "not-infrastructure":
        addr = mac("02:17:F2:11:22:33")
        frames = [_probe(addr, ssid=b"Office", ts=t * 10_000_000) for t in range(8)]
    elif case == "two-ssids":
        frames.append(_probe(addr, ssid=b"Home", ts=90_000_000))
    else:
        frames = frames[:3]
    assert not is_extender(addr, frames, registry)


# -- global-scheme detection ------------------------------------------------

def _probes_for(n, prefix):
    return [_probe(MacAddress(prefix + i.to_bytes(3, "big"))) for i in range(n)]


def test_global_scheme_boundaries():
    moto = bytes.fromhex("F8F1B6")
    filler = lambda n: _probes_for(n, bytes.fromhex("001B77"))[:0] + [
        _probe(MacAddress(bytes([0x00, 0x10 + i // 256, i % 256, 0, 0, 1]))) for i in range(n)]
    # exactly at the floor, 19% of sources: neither conjunct holds
    assert detect_global_scheme(_probes_for(10, moto) + filler(43)) == set()
    # above the floor but only 19%
    assert detect_global_scheme(_probes_for(11, moto) + filler(47)) == set()
    # at the floor but 50%
    assert detect_global_scheme(_probes_for(10, moto) + filler(10)) == set()
    # above both
    assert detect_global_scheme(_probes_for(11, moto) + filler(10)) == {moto}


def test_single_address_devices_not_flagged():
    frames = [_probe(MacAddress(bytes([0x00, i, 0x00, 0, 0, 1]))) for i in range(100)]
    assert detect_global_scheme(frames) == set()


def test_moto_g4_among_sixty_devices():
    rng = random.Random(4)
    moto = TraceScript("g4", Scheme.MotorolaGlobalRandom, mac("14:30:C6:00:00:01"), SIG, SIG,
                       [Event(float(t), EventKind.ProbeBurst) for t in range(50)], rand_lifetime_s=0,
                       random_oui=bytes.fromhex("F8F1B6"), seed=1)
    others = [TraceScript(f"n{i}", Scheme.NoRandomization, MacAddress(bytes([0, 0x30 + i, 0x77, 0, 1, i])), SIG, SIG,
                          [Event(rng.uniform(0, 50), EventKind.ProbeBurst)], seed=i) for i in range(59)]
    for s in others:
        s.events.sort(key=lambda e: e.time_s)
    frames = [f for _, f in render([moto, *others], SimConfig(burst_min=1, burst_max=1)).frames]
    assert detect_global_scheme(frames) == {bytes.fromhex("F8F1B6")}


# -- randomization bins -----------------------------------------------------

def _rec(addrs, wps=None, sigs=()):
    return DeviceRecord("k", Bin.UnknownLocal, set(addrs), signatures_random=set(sigs), wps=wps)


def test_android_cid_wps(registry):
    r = _rec([MacAddress(GOOGLE_CID + b"\x12\x34\x56")], WpsAttributes(uuid_e=bytes(16)))
    assert assign_randomization_bin(r, BinContext(registry)) is Bin.RandAndroidCidWps
    assert "wps:uuid_e" in r.evidence


def test_android_cid_plain(registry):
    r = _rec([MacAddress(GOOGLE_CID + b"\x12\x34\x56")])
    assert assign_randomization_bin(r, BinContext(registry)) is Bin.RandAndroidCid


def test_motorola_cid_without_wps_is_unknown(registry):
    r = _rec([mac("92:68:C3:00:00:01")])
    assert assign_randomization_bin(r, BinContext(registry)) is Bin.UnknownLocal


def test_ios_by_signature(registry):
    sig = sorted(load_shipped_ios_signatures())[0]
    r = _rec([mac("7A:11:22:33:44:55")], sigs=[DeviceSignature.parse(sig)])
    ctx = BinContext(registry, ios_signatures=frozenset({sig}))
    assert assign_randomization_bin(r, ctx) is Bin.RandIos


def test_windows_by_association(registry):
    a = mac("7A:11:22:33:44:55")
    frames = [_probe(a), association_request(a, mac("00:0B:85:00:00:01"), 2, [InformationElement(0, b"x")])]
    (rec,) = classify_frames(frames, registry)
    assert rec.bin is Bin.RandWindowsLinux


def test_degenerate_uuid_never_groups(registry):
    w = WpsAttributes(uuid_e=bytes.fromhex("123456789abcdef0123456789abcdef0"))
    frames = [_probe(mac(f"DA:A1:19:00:00:0{i}"), extra=[w.to_ie()]) for i in range(3)]
    recs = classify_frames(frames, registry)
    assert len(recs) == 3
    assert all("wps:degenerate-uuid" in r.evidence for r in recs)


def test_shared_uuid_groups(registry):
    w = WpsAttributes(uuid_e=bytes(range(16)))
    frames = [_probe(mac(f"DA:A1:19:00:00:0{i}"), extra=[w.to_ie()]) for i in range(3)]
    (rec,) = classify_frames(frames, registry)
    assert rec.key == bytes(range(16)).hex() and len(rec.addresses) == 3 and rec.key_is_uuid


# -- reports ----------------------------------------------------------------

def test_empty_report():
    rep = build_bin_report([])
    rep.check()
    assert rep.corpus == 0 and all(v == 0 for v in rep.counts.values())


def test_thousand_unlinked_addresses(registry):
    sig = sorted(load_shipped_ios_signatures())[0]
    rng = random.Random(0)
    frames = [probe_request(random_address(Scheme.IosFullRandom, rng), i,
                            [InformationElement(0, b"")] + [])
              for i in range(1000)]
    recs = [DeviceRecord(str(f.source), Bin.RandIos, {f.source}) for f in frames]
    rep = build_bin_report(recs)
    rep.check()
    assert rep.counts[Bin.RandIos] == 1000 and rep.unlinked[Bin.RandIos] == 1000


def test_five_ios_three_android_after_linking(registry):
    ios_sigs = sorted(load_shipped_ios_signatures())
    scripts = []
    for i in range(5):
        sig = DeviceSignature.parse(ios_sigs[i])
        g = MacAddress(bytes.fromhex("0017F2") + bytes([0, 1, i]))
        ev = [Event(1.0 + i, EventKind.ProbeBurst), Event(10.0 + i, EventKind.ProbeBurst),
              Event(20.0 + i, EventKind.Associate, b"lab")]
        scripts.append(TraceScript(f"ios{i}", Scheme.IosFullRandom, g, sig, sig, ev, seed=10 + i))
    for i in range(3):
        g = MacAddress(bytes.fromhex("0012FB") + bytes([0, 2, i]))
        sg = DeviceSignature.parse(f"0,1,50,3,45,htcap:{0x100 + i:04x},htagg:03,htmcs:000000ff")
        sr = DeviceSignature.parse(f"0,1,50,45,htcap:{0x200 + i:04x},htagg:03,htmcs:000000ff")
        ev = [Event(2.0 + i, EventKind.ScreenOn), Event(15.0 + i, EventKind.ProbeBurst),
              Event(30.0 + i, EventKind.ProbeBurst)]
        scripts.append(TraceScript(f"and{i}", Scheme.AndroidCid, g, sg, sr, ev, seed=20 + i))
    frames = [f for _, f in render(scripts, SimConfig(seed=3)).frames]
    res = run_pipeline([CaptureFrames("c", frames)], registry)
    rep = build_bin_report(res.records)
    rep.check()
    assert rep.counts[Bin.RandIos] == 5
    assert rep.counts[Bin.RandAndroidCid] == 3
    assert rep.unlinked[Bin.RandIos] == 0 and rep.unlinked[Bin.RandAndroidCid] == 0


def test_corpus_report_consistent(pipeline_result):
    rep = build_bin_report(pipeline_result.records)
    rep.check()
    assert rep.corpus == rep.global_total + rep.local_total + rep.multicast_total


# -- properties -------------------------------------------------------------

addr_st = st.builds(lambda b, l: MacAddress(bytes([(b[0] & 0xFC) | (2 if l else 0)]) + b[1:]),
                    st.binary(min_size=6, max_size=6), st.booleans())


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(addr_st, st.sampled_from([b"", b"DIRECT-x", b"Home"])), min_size=1, max_size=40),
       st.randoms(use_true_random=False))
def test_order_independent_partition(registry, items, rnd):
    frames = [_probe(a, i, s) for i, (a, s) in enumerate(items)]
    shuffled = list(frames)
    rnd.shuffle(shuffled)
    a = classify_frames(frames, registry)
    b = classify_frames(shuffled, registry)
    assert [r.to_json() for r in a] == [r.to_json() for r in b]
    seen = [x for r in a for x in r.addresses]
    assert len(seen) == len(set(seen)) == len({f.source for f in frames})


@settings(max_examples=40, deadline=None)
@given(st.lists(addr_st, min_size=1, max_size=30), st.integers(1, 4))
def test_merge_is_partition(registry, addrs, k):
    frames = [_probe(a, i) for i, a in enumerate(addrs)]
    batches = [classify_frames(frames[i::k], registry) for i in range(k)]
    merged = merge_records(batches)
    seen = [x for r in merged for x in r.addresses]
    assert len(seen) == len(set(seen)) == len(set(addrs))
    assert merge_records(batches) == merged


def test_config_json_roundtrip():
    d = ClassifyConfig().to_json()
    assert d["global_scheme_floor"] == 10 and d["global_scheme_fraction"] == 0.2
