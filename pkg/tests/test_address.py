import pytest
from hypothesis import given
from hypothesis import strategies as st

from macrand.address import (
    AddressClass,
    MacAddress,
    PrefixKind,
    PrefixRegistry,
    classify_bits,
    resolve_prefix,
    set_local_bit,
    strip_local_bit,
)

from conftest import mac

macs = st.binary(min_size=6, max_size=6).map(MacAddress)


@pytest.mark.parametrize("text, expected", [
    ("DA:A1:19:12:34:56", AddressClass.LocalUnicast),
    ("90:68:C3:00:00:01", AddressClass.GlobalUnicast),
    ("01:00:5E:00:00:01", AddressClass.Multicast),
])
def test_classify_bits(text, expected):
    assert classify_bits(mac(text)) is expected


@pytest.mark.parametrize("text, expected", [
    ("92:68:C3:AA:BB:CC", "90:68:C3:AA:BB:CC"),
    ("90:68:C3:AA:BB:CC", "90:68:C3:AA:BB:CC"),
    ("DA:A1:19:00:00:00", "D8:A1:19:00:00:00"),
])
def test_strip_local_bit(text, expected):
    assert str(strip_local_bit(mac(text))) == expected


def test_resolve_google_cid(registry):
    e = resolve_prefix(mac("DA:A1:19:12:34:56"), registry)
    assert e is not None and e.owner == "Google" and e.kind is PrefixKind.Cid


def test_resolve_unallocated_and_broadcast(registry):
    assert resolve_prefix(mac("92:68:C3:00:00:01"), registry) is None
    assert resolve_prefix(mac("FF:FF:FF:FF:FF:FF"), registry) is None


@pytest.mark.parametrize("text", ["", "00:11:22:33:44", "00:11:22:33:44:55:66", "zz:11:22:33:44:55",
                                  "00:11:22:33:44:5g"])
def test_parse_rejects(text):
    with pytest.raises(ValueError):
        MacAddress.parse(text)


@pytest.mark.parametrize("text", ["00:11:22:33:44:55", "00-11-22-33-44-55", "0011.2233.4455", "001122334455"])
def test_parse_formats(text):
    assert str(MacAddress.parse(text)) == "00:11:22:33:44:55"


def test_registry_rejects_conflicting_entry():
    r = PrefixRegistry.from_csv_text("prefix,owner,kind\nDA:A1:19,Google,Cid\n")
    with pytest.raises(ValueError):
        r.add(bytes.fromhex("DAA119"), "Other", PrefixKind.Oui)


def test_cid_without_local_bit_rejected():
    with pytest.raises(ValueError):
        PrefixRegistry.from_csv_text("prefix,owner,kind\n90:68:C3,Motorola,Cid\n")


@given(macs)
def test_strip_idempotent_and_clears_bit(a):
    s = strip_local_bit(a)
    assert not s.is_local
    assert strip_local_bit(s) == s
    assert s.raw[1:] == a.raw[1:]


@given(macs)
def test_set_then_strip_roundtrip(a):
    assert strip_local_bit(set_local_bit(a)) == strip_local_bit(a)


@given(macs)
def test_text_roundtrip(a):
    assert MacAddress.parse(str(a)) == a
    assert MacAddress.from_int(int(a)) == a


@given(macs)
def test_classes_partition(a):
    c = classify_bits(a)
    if a.is_multicast:
        assert c is AddressClass.Multicast
    elif a.is_local:
        assert c is AddressClass.LocalUnicast
    else:
        assert c is AddressClass.GlobalUnicast
