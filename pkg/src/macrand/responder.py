"""Class-1 frame responder and the RTS presence scan over a simulated medium."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from macrand.address import MacAddress
from macrand.dot11 import FrameKind, ManagementFrame, cts, rts
from macrand.signature import DeviceSignature

# frames an unauthenticated, unassociated station may receive
CLASS1_KINDS = frozenset({
    FrameKind.ProbeRequest, FrameKind.ProbeResponse, FrameKind.Beacon, FrameKind.Authentication,
    FrameKind.Deauthentication, FrameKind.Atim, FrameKind.Rts, FrameKind.Cts, FrameKind.Ack,
    FrameKind.CfEnd, FrameKind.CfEndCfAck,
})


class State(enum.Enum):
    S1_Unauth = "S1_Unauth"
    S2_Auth = "S2_Auth"
    S3_Assoc = "S3_Assoc"


@dataclass
class ResponderState:
    global_mac: MacAddress
    state: State = State.S1_Unauth
    wifi_enabled: bool = True
    airplane_mode: bool = False
    location_wake: bool = False
    aliases: tuple[MacAddress, ...] = ()  # randomized addresses the device also uses
    signature: DeviceSignature | None = None

    @property
    def awake(self) -> bool:
        # location services wake the radio even with WiFi or airplane mode on
        return (self.wifi_enabled and not self.airplane_mode) or self.location_wake

    def transition(self, frame: ManagementFrame) -> State:
        """Apply an authentication/association state change addressed to us."""
        if frame.destination != self.global_mac:
            return self.state
        k = frame.kind
        if k is FrameKind.Authentication and frame.auth_transaction in (2, 4):
            if self.state is State.S1_Unauth:
                self.state = State.S2_Auth
        elif k is FrameKind.Association and not frame.is_assoc_request:
            if self.state is State.S2_Auth:
                self.state = State.S3_Assoc
        elif k is FrameKind.Deauthentication:
            self.state = State.S1_Unauth
        elif k is FrameKind.Disassociation:
            if self.state is State.S3_Assoc:
                self.state = State.S2_Auth
        return self.state


def respond(state: ResponderState, frame: ManagementFrame) -> ManagementFrame | None:
    """Reply of a device to one received frame; only an RTS sent to the
    global address yields anything (a sourceless CTS)."""
    state.transition(frame)
    if not state.awake:
        return None
    if frame.kind is FrameKind.Rts and frame.destination == state.global_mac and frame.source is not None:
        return cts(frame.source, frame.duration)
    return None


class Medium:
    """Serialized broadcast medium shared by a set of responders."""

    def __init__(self, responders: Iterable[ResponderState] = ()):
        self.responders = list(responders)
        self.log: list[tuple[ManagementFrame, list[ManagementFrame]]] = []

    def transmit(self, frame: ManagementFrame) -> list[ManagementFrame]:
        replies = [r for r in (respond(s, frame) for s in self.responders) if r is not None]
        self.log.append((frame, replies))
        return replies

    def signatures_heard(self) -> set[str]:
        return {r.signature.canonical for r in self.responders if r.signature is not None and r.awake}


def crafted_source(rng: random.Random) -> MacAddress:
    raw = rng.getrandbits(48).to_bytes(6, "big")
    return MacAddress(bytes([(raw[0] & 0xFC) | 0x02]) + raw[1:])


def rts_scan(
    candidates: Sequence[MacAddress],
    medium: Medium,
    *,
    seed: int = 0,
    trigger: DeviceSignature | None = None,
    duration: int = 314,
) -> list[tuple[MacAddress, bool]]:
    """Send one RTS per candidate, each from a fresh crafted source; a
    candidate is present when a CTS comes back addressed to that source.

    With ``trigger`` set nothing is sent until that signature is heard."""
    if not candidates:
        raise ValueError("candidate list is empty")
    if trigger is not None and trigger.canonical not in medium.signatures_heard():
        return [(c, False) for c in candidates]
    rng = random.Random(seed)
    out = []
    for c in candidates:
        src = crafted_source(rng)
        replies = medium.transmit(rts(c, src, duration))
        out.append((c, any(r.kind is FrameKind.Cts and r.destination == src for r in replies)))
    return out

