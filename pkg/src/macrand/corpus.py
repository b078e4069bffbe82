"""Scheme-matrix synthetic corpus: N devices per randomization scheme with
distinct model signatures and a mix of trigger, association, directed
probe and hotspot events."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from macrand.address import MacAddress, parse_prefix
from macrand.classify import load_shipped_ios_signatures
from macrand.dot11 import WpsAttributes
from macrand.rainbow import uuid_e
from macrand.signature import DeviceSignature
from macrand.simulate import Event, EventKind, Scheme, TraceScript

ANDROID_OUIS = ("00:12:FB", "00:1E:75", "00:E0:FC")
MOTOROLA_CID_OUIS = ("90:68:C3", "5C:51:88")
MOTOROLA_GLOBAL_OUI = "14:30:C6"
MOTOROLA_RANDOM_OUI = "F8:F1:B6"
NO_RANDOM_OUIS = ("00:1B:77", "00:E0:FC")
WINDOWS_OUI = "00:1B:77"
APPLE_OUIS = ("00:17:F2", "28:CF:E9", "3C:15:C2", "F0:D1:A9", "AC:BC:32")

DIRECTED_SSIDS = (b"BELL_WIFI", b"attwifibn", b"5099251212", b"CoffeeShop", b"HomeNet")


@dataclass(frozen=True)
class CorpusConfig:
    per_scheme: int = 10
    duration_s: float = 300.0
    burst_period_s: float = 15.0
    screen_on_per_device: int = 2
    seed: int = 7


@dataclass
class Corpus:
    scripts: list[TraceScript]
    rainbow_ouis: list[bytes] = field(default_factory=list)

    def by_scheme(self, scheme: Scheme) -> list[TraceScript]:
        return [s for s in self.scripts if s.scheme is scheme]


def _sig(text: str) -> DeviceSignature:
    return DeviceSignature.parse(text)


def _global(oui: str, n: int) -> MacAddress:
    # suffix kept inside 16 bits so a desk-scale reverse table covers it
    return MacAddress(parse_prefix(oui) + bytes([0, (n >> 8) & 0xFF, n & 0xFF]))


def _events(rng: random.Random, cfg: CorpusConfig, specials: dict[int, Event | EventKind]) -> list[Event]:
    """Bursts on a fixed period with a random phase; chosen slots are
    replaced by special events so nothing overlaps."""
    phase = rng.uniform(0.5, cfg.burst_period_s)
    slots = []
    t = phase
    while t < cfg.duration_s:
        slots.append(round(t, 3))
        t += cfg.burst_period_s
    out = []
    for i, ts in enumerate(slots):
        sp = specials.get(i)
        if sp is None:
            out.append(Event(ts, EventKind.ProbeBurst))
        elif isinstance(sp, EventKind):
            out.append(Event(ts, sp))
        else:
            out.append(Event(ts, sp.kind, sp.ssid))
    return out


def build_corpus(cfg: CorpusConfig = CorpusConfig()) -> Corpus:
    rng = random.Random(cfg.seed)
    n = cfg.per_scheme
    n_slots = int(cfg.duration_s // cfg.burst_period_s)
    if n_slots < 8:
        raise ValueError("corpus duration too short for the event mix")
    ios_sigs = sorted(load_shipped_ios_signatures())
    scripts: list[TraceScript] = []
    rainbow: set[bytes] = set()

    def specials(i: int, *, triggers: bool, associate: bool, directed: bool, hotspot: bool = False):
        sp: dict[int, Event | EventKind] = {}
        free = list(range(1, n_slots))
        rng.shuffle(free)
        if triggers:
            sp[0] = EventKind.ScreenOn
            for _ in range(cfg.screen_on_per_device - 1):
                sp[free.pop()] = rng.choice((EventKind.ScreenOn, EventKind.IncomingCall))
        if associate:
            sp[free.pop()] = Event(0, EventKind.Associate, b"LabAP")
        if directed:
            sp[free.pop()] = Event(0, EventKind.DirectedProbe, DIRECTED_SSIDS[i % len(DIRECTED_SSIDS)])
        if hotspot:
            sp[free.pop()] = EventKind.HotspotBeacon
        return sp

    def add(scheme, i, gmac, sig_g, sig_r, sp, **kw):
        seed = rng.getrandbits(63)
        scripts.append(TraceScript(
            device_id=f"{scheme.value}-{i:02d}", scheme=scheme, global_mac=gmac, sig_global=sig_g,
            sig_random=sig_r, events=_events(random.Random(seed), cfg, sp), seed=seed, **kw,
        ))

    for i in range(n):
        gmac = _global(ANDROID_OUIS[i % len(ANDROID_OUIS)], 0x100 + i)
        wps = None
        wtag = ""
        if i < (n + 1) // 2:
            wps = WpsAttributes("Huawei", "Nexus 6P", f"H1511-{i}", uuid_e(gmac))
            wtag = ",221(0x50f2,4)"
            rainbow.add(gmac.prefix)
        add(Scheme.AndroidCid, i, gmac,
            _sig(f"0,1,50,3,45,221(0x50f2,8){wtag},htcap:{0x012c + i:04x},htagg:03,htmcs:000000ff"),
            _sig(f"0,1,50,45{wtag},htcap:{0x1020 + i:04x},htagg:03,htmcs:000000ff"),
            specials(i, triggers=True, associate=i % 2 == 0, directed=i in (1, n - 1)), wps=wps)

    for i in range(n):
        gmac = _global(MOTOROLA_CID_OUIS[i % len(MOTOROLA_CID_OUIS)], 0x200 + i)
        rainbow.add(gmac.prefix)
        wps = WpsAttributes("motorola", "Moto E2", f"XT1527-{i}", uuid_e(gmac))
        add(Scheme.MotorolaCid, i, gmac,
            _sig(f"0,1,50,3,45,221(0x50f2,8),221(0x50f2,4),htcap:{0x022c + i:04x},htagg:03,htmcs:000000ff"),
            _sig(f"0,1,50,45,221(0x50f2,4),htcap:{0x2020 + i:04x},htagg:03,htmcs:000000ff"),
            specials(i, triggers=True, associate=i % 2 == 0, directed=i in (1, n - 1)), wps=wps)

    for i in range(n):
        gmac = _global(MOTOROLA_GLOBAL_OUI, 0x300 + i)
        sig = _sig(f"0,1,50,3,45,127,htcap:{0x032c + i:04x},htagg:03,htmcs:000000ff")
        add(Scheme.MotorolaGlobalRandom, i, gmac, sig, sig,
            specials(i, triggers=True, associate=i % 2 == 0, directed=i in (1, n - 1)),
            rand_lifetime_s=0, random_oui=parse_prefix(MOTOROLA_RANDOM_OUI))

    for i in range(n):
        gmac = _global(NO_RANDOM_OUIS[i % len(NO_RANDOM_OUIS)], 0x400 + i)
        sig = _sig(f"0,1,50,3,45,127,221(0x50f2,8),htcap:{0x042c + i:04x},htagg:03,htmcs:000000ff")
        add(Scheme.NoRandomization, i, gmac, sig, sig,
            specials(i, triggers=True, associate=False, directed=i in (1, n - 1)))

    for i in range(n):
        gmac = _global(WINDOWS_OUI, 0x500 + i)
        sig = _sig(f"0,1,50,3,45,127,221(0x50f2,2),htcap:{0x052c + i:04x},htagg:17,htmcs:0000ffff")
        add(Scheme.WindowsLinuxAssociated, i, gmac, sig, sig,
            specials(i, triggers=False, associate=True, directed=i in (1, n - 1)))

    for i in range(n):
        gmac = _global(APPLE_OUIS[i % len(APPLE_OUIS)], 0x600 + i)
        sig = _sig(ios_sigs[i % len(ios_sigs)])
        hotspot = i < 3
        bt = MacAddress.from_int(int(gmac) + 1) if hotspot else None
        add(Scheme.IosFullRandom, i, gmac, sig, sig,
            specials(i, triggers=True, associate=i % 2 == 0, directed=i in (1, n - 1), hotspot=hotspot),
            bluetooth_mac=bt)

    return Corpus(scripts, sorted(rainbow))


def hotspot_scripts(n: int = 1000, one_off_share: float = 0.95, seed: int = 11) -> list[TraceScript]:
    """Hotspot-only iOS devices; ``one_off_share`` of them use a Bluetooth
    address one above or below the WiFi address, the rest another address
    under the same OUI."""
    rng = random.Random(seed)
    sig = _sig(sorted(load_shipped_ios_signatures())[0])
    n_one_off = round(n * one_off_share)
    out = []
    for i in range(n):
        raw = bytes.fromhex("F0D1A9") + rng.getrandbits(24).to_bytes(3, "big")
        # keep clear of the 00 and FF suffix edges so +-1 stays inside the OUI
        raw = raw[:3] + bytes([raw[3] | 0x01, raw[4], max(2, min(raw[5], 0xFD))])
        wifi = MacAddress(raw)
        if i < n_one_off:
            bt = MacAddress.from_int(int(wifi) + (1 if rng.random() < 0.882 else -1))
        else:
            bt = MacAddress(raw[:3] + bytes([raw[3] ^ 0x80, raw[4], raw[5]]))
        out.append(TraceScript(f"hotspot-{i:04d}", Scheme.IosFullRandom, wifi, sig, sig,
                               [Event(1.0 + i * 0.001, EventKind.HotspotBeacon)],
                               bluetooth_mac=bt, seed=rng.getrandbits(63)))
    return out


# (wifi_enabled, airplane_mode, location_wake, state); every one leaves the radio awake
RADIO_STATES = (
    (True, False, False, "S1_Unauth"),
    (False, False, True, "S1_Unauth"),
    (True, True, True, "S1_Unauth"),
    (True, False, False, "S3_Assoc"),
)


def responder_matrix(n: int = 16, seed: int = 0):
    """Responders cycling through every scheme and every awake radio state,
    each also holding a few randomized aliases."""
    from macrand.responder import ResponderState, State
    from macrand.simulate import random_address

    rng = random.Random(seed)
    schemes = list(Scheme)
    out = []
    for i in range(n):
        scheme = schemes[i % len(schemes)]
        wifi, airplane, wake, state = RADIO_STATES[(i // len(schemes) + i) % len(RADIO_STATES)]
        gmac = _global(APPLE_OUIS[i % len(APPLE_OUIS)] if scheme is Scheme.IosFullRandom
                       else ANDROID_OUIS[i % len(ANDROID_OUIS)], 0x700 + i)
        aliases = ()
        if scheme is not Scheme.NoRandomization:
            oui = parse_prefix(MOTOROLA_RANDOM_OUI) if scheme is Scheme.MotorolaGlobalRandom else None
            aliases = tuple(random_address(scheme, rng, oui) for _ in range(3))
        out.append(ResponderState(gmac, State(state), wifi, airplane, wake, aliases))
    return out
