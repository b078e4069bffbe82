import math

import pytest

from macrand.address import GOOGLE_CID, MacAddress
from macrand.capture import load_capture, parse_capture
from macrand.dot11 import FrameKind, encode_frame
from macrand.randtest import collision_stats
from macrand.signature import DeviceSignature, derive_signature
from macrand.simulate import (
    Event,
    EventKind,
    Scheme,
    ScriptConflict,
    SimConfig,
    TraceScript,
    load_ground_truth,
    random_address,
    random_addresses,
    render,
    synthesize,
)

from conftest import mac

SIG_G = DeviceSignature.parse("0,1,50,3,45,221(0x50f2,8),htcap:012c,htagg:03,htmcs:000000ff")
SIG_R = DeviceSignature.parse("0,1,50")


def android(events, seed=1, g="00:12:FB:00:01:00"):
    return TraceScript("a", Scheme.AndroidCid, mac(g), SIG_G, SIG_R, events, seed=seed)


def test_android_screen_on(tmp_path):
    out = tmp_path / "a.pcap"
    synthesize([android([Event(1.0, EventKind.ScreenOn)])], out)
    frames = parse_capture(load_capture(out)).frames
    glob = [f for f in frames if f.source == mac("00:12:FB:00:01:00")]
    rnd = [f for f in frames if f.source.prefix == GOOGLE_CID]
    assert glob and rnd
    assert all(derive_signature(f) == SIG_G for f in glob)
    assert all(derive_signature(f) == SIG_R for f in rnd)
    seqs = [f.sequence_number for f in frames]
    assert all((b - a) % 4096 == 1 for a, b in zip(seqs, seqs[1:]))
    truth = load_ground_truth(tmp_path / "a.pcap.truth.jsonl")
    assert truth[0]["device_id"] == "a" and len(truth[0]["addresses"]) == 2


def test_ios_rotation_collisions():
    s = TraceScript("i", Scheme.IosFullRandom, mac("00:17:F2:00:00:01"), SIG_R, SIG_R,
                    [Event(float(t), EventKind.ProbeBurst) for t in range(10_000)], rand_lifetime_s=0, seed=9)
    res = render([s], SimConfig(burst_min=1, burst_max=1))
    addrs = [f.source for _, f in res.frames]
    assert len(set(addrs)) == 10_000
    rep = collision_stats(addrs)
    assert abs(rep.observed_collisions - rep.expected_collisions) <= 3 * math.sqrt(rep.expected_collisions)


def test_empty_events(tmp_path):
    out = tmp_path / "e.pcap"
    res = synthesize([android([])], out)
    assert res.frames == [] and load_capture(out).frames == []


def test_shared_global_conflict():
    with pytest.raises(ScriptConflict):
        render([android([], seed=1), android([], seed=2)])


def test_unordered_events_rejected():
    with pytest.raises(ValueError):
        android([Event(5.0, EventKind.ProbeBurst), Event(1.0, EventKind.ProbeBurst)])


def test_deterministic():
    s = [android([Event(1.0, EventKind.ScreenOn), Event(30.0, EventKind.Associate, b"lab")], seed=5)]
    a, b = render(s, SimConfig(seed=3)), render(s, SimConfig(seed=3))
    assert [(t, encode_frame(f)) for t, f in a.frames] == [(t, encode_frame(f)) for t, f in b.frames]
    assert a.ground_truth == b.ground_truth


def test_drop_probability():
    s = [android([Event(float(t), EventKind.ProbeBurst) for t in range(100)])]
    full = render(s)
    lossy = render(s, SimConfig(drop_probability=0.3, seed=1))
    assert lossy.dropped + len(lossy.frames) == len(full.frames)
    assert 0.2 < lossy.dropped / len(full.frames) < 0.4


def test_associate_uses_global_except_windows():
    ev = [Event(1.0, EventKind.Associate, b"lab")]
    for scheme, expect_global in [(Scheme.IosFullRandom, True), (Scheme.WindowsLinuxAssociated, False)]:
        s = TraceScript("d", scheme, mac("00:1B:77:00:00:01"), SIG_R, SIG_R, ev, seed=2)
        frames = [f for _, f in render([s]).frames]
        auth = [f for f in frames if f.kind is FrameKind.Authentication and f.auth_transaction == 1]
        assert len(auth) == 1
        assert (auth[0].source == s.global_mac) is expect_global
        if not expect_global:
            assert auth[0].source.is_local


def test_hotspot_beacon_layout():
    g, bt = mac("F0:D1:A9:10:20:30"), mac("F0:D1:A9:10:20:31")
    s = TraceScript("h", Scheme.IosFullRandom, g, SIG_R, SIG_R, [Event(1.0, EventKind.HotspotBeacon)],
                    bluetooth_mac=bt, seed=1)
    beacons = [f for _, f in render([s]).frames if f.kind is FrameKind.Beacon]
    assert len(beacons) == 3
    assert all(b.source.raw[1:] == g.raw[1:] and b.source.is_local for b in beacons)


def test_random_address_schemes():
    import random
    rng = random.Random(0)
    assert random_address(Scheme.AndroidCid, rng).prefix == GOOGLE_CID
    assert str(random_address(Scheme.MotorolaCid, rng)).startswith("92:68:C3")
    ios = random_address(Scheme.IosFullRandom, rng)
    assert ios.is_local and not ios.is_multicast
    assert random_address(Scheme.MotorolaGlobalRandom, rng, bytes.fromhex("F8F1B6")).prefix == bytes.fromhex("F8F1B6")
    with pytest.raises(ValueError):
        random_address(Scheme.NoRandomization, rng)
    assert random_addresses(Scheme.IosFullRandom, 5, 1) == random_addresses(Scheme.IosFullRandom, 5, 1)
