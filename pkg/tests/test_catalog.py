import pytest

from macrand.catalog import CatalogLocked, CatalogStore, sha256_file
from macrand.classify import Bin, DeviceRecord
from macrand.derandomize import Confidence, LinkResult, Method
from macrand.dot11 import WpsAttributes

from conftest import mac


def test_roundtrip(tmp_path, moto_sig_g):
    store = CatalogStore(tmp_path / "cat")
    recs = [
        DeviceRecord("b", Bin.RandIos, {mac("7A:00:00:00:00:01")}),
        DeviceRecord("a", Bin.GlobalUnicast, {mac("90:68:C3:00:00:01")}, signatures_global={moto_sig_g},
                     wps=WpsAttributes("motorola", "Moto E2", None, bytes(16)), link_methods=["SeqChain"]),
    ]
    links = [LinkResult(mac("90:68:C3:00:00:01"), {mac("92:68:C3:00:00:01")}, Method.SeqChain,
                        Confidence.Heuristic, [(1, 2, 1)], "c")]
    with store:
        store.write_meta({"inputs": []})
        store.write_records(recs)
        store.write_links(links)
    assert [r.key for r in store.records()] == ["a", "b"]
    assert store.records()[0].to_json() == recs[1].to_json()
    assert store.links() == links
    assert store.meta()["version"]


def test_lock_is_exclusive(tmp_path):
    a, b = CatalogStore(tmp_path / "cat"), CatalogStore(tmp_path / "cat")
    with a:
        with pytest.raises(CatalogLocked):
            b.lock()
    with b:
        pass


def test_capture_copy(tmp_path):
    src = tmp_path / "x.pcap"
    src.write_bytes(b"abc")
    store = CatalogStore(tmp_path / "cat")
    digest = sha256_file(src)
    dst = store.add_capture(src, digest)
    assert dst.read_bytes() == b"abc" and dst.name == f"{digest}.pcap"


def test_missing_catalog_is_empty(tmp_path):
    store = CatalogStore(tmp_path / "none")
    assert not store.exists()
    assert store.records() == [] and store.links() == [] and store.meta()["inputs"] == []
