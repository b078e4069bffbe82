import pytest
from hypothesis import given
from hypothesis import strategies as st

from macrand.address import WPS_OUI
from macrand.dot11 import InformationElement, cts, encode_frame, parse_frame, probe_request
from macrand.signature import (
    DeviceSignature,
    WrongFrameKind,
    derive_signature,
    ies_from_signature,
    signature_match,
    signature_pairs,
)

from conftest import MOTO_E2_SIG_G, MOTO_E2_SIG_R, mac

SRC = mac("90:68:C3:12:34:56")


def moto_e2_global_probe():
    ht = bytearray(26)
    ht[0:2] = bytes([0x2C, 0x01])
    ht[2] = 0x03
    ht[3:7] = bytes([0xFF, 0x00, 0x00, 0x00])
    ies = [
        InformationElement(0, b""),
        InformationElement(1, bytes([0x02, 0x04, 0x0B, 0x16])),
        InformationElement(50, bytes([0x0C, 0x12, 0x18, 0x24])),
        InformationElement(3, b"\x01"),
        InformationElement(45, bytes(ht)),
        InformationElement.vendor(WPS_OUI, 8, b"\x00\x00"),
    ]
    return parse_frame(encode_frame(probe_request(SRC, 100, ies)))


def test_moto_e2_golden():
    assert derive_signature(moto_e2_global_probe()).canonical == MOTO_E2_SIG_G


def test_random_state_signature():
    ies = [InformationElement(0, b""), InformationElement(1, b"\x02"), InformationElement(50, b"\x0c")]
    assert derive_signature(probe_request(SRC, 1, ies)).canonical == MOTO_E2_SIG_R


def test_no_ies():
    assert derive_signature(probe_request(SRC, 1, [])).canonical == ""


def test_wrong_kind():
    with pytest.raises(WrongFrameKind):
        derive_signature(cts(SRC))


def test_match():
    g, r, e = (DeviceSignature.parse(s) for s in (MOTO_E2_SIG_G, MOTO_E2_SIG_R, ""))
    assert signature_match(g, g)
    assert not signature_match(g, r)
    assert signature_match(e, DeviceSignature.parse(""))


class _Rec:
    def __init__(self, g, r, linked=True):
        self.signatures_global, self.signatures_random, self.seqchain_linked = g, r, linked


def test_pairs_from_one_linked_record():
    g, r = DeviceSignature.parse(MOTO_E2_SIG_G), DeviceSignature.parse(MOTO_E2_SIG_R)
    assert signature_pairs([_Rec({g}, {r})]) == [(g, r)]


def test_pairs_empty_and_unlinked():
    g, r = DeviceSignature.parse(MOTO_E2_SIG_G), DeviceSignature.parse(MOTO_E2_SIG_R)
    assert signature_pairs([]) == []
    assert signature_pairs([_Rec({g}, {r}, linked=False)]) == []
    assert signature_pairs([_Rec({g}, {g})]) == []


def test_pair_support():
    g, r = DeviceSignature.parse(MOTO_E2_SIG_G), DeviceSignature.parse(MOTO_E2_SIG_R)
    assert signature_pairs([_Rec({g}, {r})], support=2) == []
    assert signature_pairs([_Rec({g}, {r}), _Rec({g}, {r})], support=2) == [(g, r)]


@pytest.mark.parametrize("bad", ["0,1,x", "0,256", "221(0x50f2,)", "htcap:zz"])
def test_parse_rejects(bad):
    with pytest.raises(ValueError):
        DeviceSignature.parse(bad)


tags = st.integers(0, 255).filter(lambda t: t not in (45, 221))
vendor = st.tuples(st.binary(min_size=3, max_size=3), st.integers(0, 255))


@st.composite
def signatures(draw):
    items = draw(st.lists(st.one_of(tags, vendor), max_size=10))
    ht = draw(st.one_of(st.none(), st.tuples(st.integers(0, 0xFFFF), st.integers(0, 255), st.integers(0, 2**32 - 1))))
    ie_tags, vendors = [], []
    for it in items:
        if isinstance(it, tuple):
            ie_tags.append(221)
            vendors.append(it)
        else:
            ie_tags.append(it)
    if ht is None:
        return DeviceSignature(tuple(ie_tags), tuple(vendors))
    ie_tags.append(45)
    return DeviceSignature(tuple(ie_tags), tuple(vendors), *ht)


@given(signatures())
def test_canonical_parse_roundtrip(sig):
    assert DeviceSignature.parse(sig.canonical) == sig


@given(signatures())
def test_ies_from_signature_inverse(sig):
    f = parse_frame(encode_frame(probe_request(SRC, 3, ies_from_signature(sig))))
    assert derive_signature(f) == sig
