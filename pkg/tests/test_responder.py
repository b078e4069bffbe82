import random

from macrand.corpus import responder_matrix
from macrand.dot11 import (
    FrameKind,
    association_response,
    authentication,
    deauthentication,
    disassociation,
    probe_request,
    rts,
)
from macrand.responder import CLASS1_KINDS, Medium, ResponderState, State, crafted_source, respond, rts_scan
from macrand.simulate import Scheme

from conftest import mac

G = mac("00:12:FB:00:07:00")
AP = mac("00:0B:85:00:00:01")
C = mac("02:AB:CD:EF:01:02")


def test_rts_yields_cts_to_crafted_source():
    reply = respond(ResponderState(G), rts(G, C, 314))
    assert reply is not None and reply.kind is FrameKind.Cts
    assert reply.destination == C and reply.source is None and reply.duration == 314


def test_probe_gets_no_reply():
    assert respond(ResponderState(G), probe_request(C, 1, [], dst=G)) is None


def test_alias_gets_no_reply():
    alias = mac("DA:A1:19:00:00:01")
    assert respond(ResponderState(G, aliases=(alias,)), rts(alias, C)) is None


def test_radio_states():
    assert respond(ResponderState(G, wifi_enabled=False, location_wake=True), rts(G, C)) is not None
    assert respond(ResponderState(G, airplane_mode=True, location_wake=True), rts(G, C)) is not None
    assert respond(ResponderState(G, wifi_enabled=False), rts(G, C)) is None
    assert respond(ResponderState(G, airplane_mode=True), rts(G, C)) is None


def test_state_machine():
    s = ResponderState(G)
    s.transition(authentication(AP, G, AP, 1, transaction=2))
    assert s.state is State.S2_Auth
    s.transition(association_response(AP, G, 2))
    assert s.state is State.S3_Assoc
    s.transition(disassociation(AP, G, AP, 3))
    assert s.state is State.S2_Auth
    s.transition(deauthentication(AP, G, AP, 4))
    assert s.state is State.S1_Unauth
    # frames for someone else change nothing
    s.transition(authentication(AP, C, AP, 5, transaction=2))
    assert s.state is State.S1_Unauth


def test_association_needs_authentication():
    s = ResponderState(G)
    s.transition(association_response(AP, G, 2))
    assert s.state is State.S1_Unauth


def test_rts_is_class1():
    assert FrameKind.Rts in CLASS1_KINDS and FrameKind.Association not in CLASS1_KINDS


def test_crafted_source_is_local_unicast():
    rng = random.Random(0)
    for _ in range(100):
        a = crafted_source(rng)
        assert a.is_local and not a.is_multicast


def test_scan_empty_medium():
    cands = [G, C]
    assert rts_scan(cands, Medium()) == [(G, False), (C, False)]


def test_scan_matrix():
    responders = responder_matrix(16, seed=1)
    assert {r.global_mac for r in responders}.__len__() == 16
    assert any(not r.wifi_enabled and r.location_wake for r in responders)
    absent = [mac(f"00:1B:77:00:09:{i:02X}") for i in range(16)]
    cands = [r.global_mac for r in responders] + absent
    result = dict(rts_scan(cands, Medium(responders), seed=2))
    assert all(result[r.global_mac] for r in responders)
    assert not any(result[a] for a in absent)


def test_scan_aliases_absent():
    responders = responder_matrix(12, seed=1)
    aliases = [a for r in responders for a in r.aliases]
    assert aliases
    assert not any(p for _, p in rts_scan(aliases, Medium(responders)))


def test_matrix_covers_schemes():
    responders = responder_matrix(16)
    assert len({(r.wifi_enabled, r.airplane_mode, r.location_wake, r.state) for r in responders}) == 4
    # one NoRandomization slot per cycle of schemes carries no aliases
    assert sum(not r.aliases for r in responders) == sum(1 for i in range(16) if list(Scheme)[i % 6]
                                                       is Scheme.NoRandomization)
