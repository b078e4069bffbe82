import json

import pytest

from macrand.address import GOOGLE_CID, MOTOROLA_RANDOM_PREFIX, MacAddress
from macrand.capture import write_pcap
from macrand.catalog import CatalogStore
from macrand.classify import Bin
from macrand.cli import main
from macrand.simulate import load_ground_truth


@pytest.fixture(scope="module")
def corpus_pcap(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--out", str(d / "corpus.pcap"), "--seed", "7"]) == 0
    return d / "corpus.pcap"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_ingest_bins_match_ground_truth(tmp_path, corpus_pcap, capsys):
    cat = tmp_path / "cat"
    code, out, _ = run(["--catalog", cat, "ingest", corpus_pcap], capsys)
    assert code == 0 and "ingested" in out
    bin_of = {a: r.bin for r in CatalogStore(cat).records() for a in r.addresses}
    truth = load_ground_truth(str(corpus_pcap) + ".truth.jsonl")
    for t in truth:
        addrs = [MacAddress.parse(a) for a in t["addresses"]]
        probed = [a for a in addrs if a in bin_of]
        g = MacAddress.parse(t["global_mac"])
        rnd = [a for a in probed if a != g]
        if t["scheme"] == "AndroidCid":
            assert all(a.prefix == GOOGLE_CID for a in rnd)
            assert {bin_of[a] for a in rnd} <= {Bin.RandAndroidCid, Bin.RandAndroidCidWps}
        elif t["scheme"] == "MotorolaCid":
            assert all(a.prefix == MOTOROLA_RANDOM_PREFIX for a in rnd)
            assert {bin_of[a] for a in rnd} == {Bin.RandMotorolaCidWps}
        elif t["scheme"] == "MotorolaGlobalRandom":
            assert rnd and {bin_of[a] for a in rnd} == {Bin.RandMotorolaGlobalScheme}
        elif t["scheme"] == "IosFullRandom":
            assert rnd and {bin_of[a] for a in rnd} == {Bin.RandIos}
        elif t["scheme"] == "NoRandomization":
            assert probed == [g] and bin_of[g] is Bin.GlobalUnicast
        elif t["scheme"] == "WindowsLinuxAssociated":
            assert Bin.RandWindowsLinux in {bin_of[a] for a in rnd}


def test_ingest_idempotent(tmp_path, corpus_pcap, capsys):
    cat = tmp_path / "cat"
    run(["ingest", "--catalog", cat, corpus_pcap], capsys)
    first = {p.name: p.read_bytes() for p in cat.iterdir() if p.is_file()}
    code, out, _ = run(["ingest", "--catalog", cat, corpus_pcap], capsys)
    assert code == 0 and "unchanged" in out
    assert {p.name: p.read_bytes() for p in cat.iterdir() if p.is_file()} == first


def test_ingest_empty_pcap(tmp_path, capsys):
    p = tmp_path / "empty.pcap"
    write_pcap(p, [])
    code, _, _ = run(["ingest", "--catalog", tmp_path / "cat", p], capsys)
    assert code == 0
    assert CatalogStore(tmp_path / "cat").records() == []
    code, out, _ = run(["report", "--catalog", tmp_path / "cat"], capsys)
    assert code == 0 and "distinct addresses" in out


def test_ingest_bad_input_exit_2(tmp_path, corpus_pcap, capsys):
    bad = tmp_path / "bad.pcap"
    bad.write_bytes(b"not a capture at all, clearly")
    eth = tmp_path / "eth.pcap"
    write_pcap(eth, [], link_type=1)
    code, out, _ = run(["ingest", "--catalog", tmp_path / "cat", corpus_pcap, bad, eth], capsys)
    assert code == 2
    assert "bad.pcap" in out and "eth.pcap" in out and "UnsupportedLinkType" in out
    # the good file still went in
    assert CatalogStore(tmp_path / "cat").records()


def test_signature_filter(tmp_path, corpus_pcap, capsys):
    sig = "0,1,50,3,45,127,htcap:032c,htagg:03,htmcs:000000ff"
    code, _, _ = run(["ingest", "--catalog", tmp_path / "cat", "--signature", sig, corpus_pcap], capsys)
    assert code == 0
    recs = CatalogStore(tmp_path / "cat").records()
    assert recs and all(any(s.canonical == sig for s in r.signatures_global | r.signatures_random) for r in recs)


def test_derand_and_report(tmp_path, corpus_pcap, capsys):
    cat = tmp_path / "cat"
    run(["ingest", "--catalog", cat, corpus_pcap], capsys)
    code, out, _ = run(["derand", "--catalog", cat], capsys)
    assert code == 0 and "skipped" in out
    assert CatalogStore(cat).links()
    code, out, _ = run(["derand", "--catalog", cat, "--json"], capsys)
    payload = json.loads(out)
    assert payload["matrix"]["RandIos"]["AuthAssoc"] == "yes"
    assert payload["matrix"]["RandIos"]["UuidReversal"] == "skipped"
    code, out, _ = run(["report", "--catalog", cat, "--json"], capsys)
    rep = json.loads(out)
    t = rep["bins"]["totals"]
    assert t["corpus"] == t["global"] + t["local"] + t["multicast"]
    assert rep["type6"]["devices"] == 3 and rep["karma"]["findings"] > 0
    code, out, _ = run(["report", "--catalog", cat, "--csv"], capsys)
    assert out.startswith("bin,devices,addresses,unlinked")


def test_derand_with_rainbow(tmp_path, corpus_pcap, capsys):
    cat = tmp_path / "cat"
    run(["ingest", "--catalog", cat, corpus_pcap], capsys)
    table = tmp_path / "t.bin"
    ouis = sum((["--oui", o] for o in ("00:12:FB", "00:1E:75", "00:E0:FC", "90:68:C3", "5C:51:88")), [])
    assert run(["rainbow", *ouis, "--suffix-bits", 16, "--out", table], capsys)[0] == 0
    code, out, _ = run(["derand", "--catalog", cat, "--rainbow", table, "--json"], capsys)
    m = json.loads(out)["matrix"]
    assert m["RandMotorolaCidWps"]["UuidReversal"] == "yes" and m["RandIos"]["UuidReversal"] == "no"
    assert CatalogStore(cat).meta()["thresholds"]["rainbow"]["sha256"]


def test_derand_sweep(tmp_path, corpus_pcap, capsys):
    cat = tmp_path / "cat"
    run(["ingest", "--catalog", cat, corpus_pcap], capsys)
    code, out, _ = run(["derand", "--catalog", cat, "--sweep", "--sweep-gaps", "5,30", "--sweep-dts", "1,2"], capsys)
    lines = out.strip().splitlines()
    assert code == 0 and lines[0].startswith("max_gap,max_dt_s") and len(lines) == 5


def test_derand_without_catalog(tmp_path, capsys):
    assert run(["derand", "--catalog", tmp_path / "nothing"], capsys)[0] == 1


def test_hotspot_report_one_off_share(tmp_path, capsys):
    pcap = tmp_path / "hot.pcap"
    assert run(["simulate", "--mode", "hotspot", "--hotspots", 1000, "--out", pcap], capsys)[0] == 0
    cat = tmp_path / "cat"
    run(["ingest", "--catalog", cat, pcap], capsys)
    run(["derand", "--catalog", cat], capsys)
    code, out, _ = run(["report", "--catalog", cat, "--json"], capsys)
    t6 = json.loads(out)["type6"]
    assert t6["devices"] == 1000
    assert t6["one_off"] == pytest.approx(0.95, abs=0.005)


def test_rainbow_cli(tmp_path, capsys):
    out_path = tmp_path / "m.bin"
    code, out, _ = run(["rainbow", "--oui", "90:68:C3", "--suffix-bits", 16, "--out", out_path, "--json"], capsys)
    assert code == 0 and json.loads(out)["records"] == 65_536
    code, out, _ = run(["rainbow", "--mac", "90:68:C3:00:12:34", "--json"], capsys)
    u = json.loads(out)["uuid_e"]
    code, out, _ = run(["rainbow", "--table", out_path, "--lookup", u], capsys)
    assert code == 0 and out.strip() == "90:68:C3:00:12:34"
    code, out, _ = run(["rainbow", "--table", out_path, "--lookup", "123456789abcdef0123456789abcdef0"], capsys)
    assert "shared" in out


def test_rainbow_corrupt_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"\x00" * 64)
    assert run(["rainbow", "--table", bad, "--lookup", "00" * 16], capsys)[0] == 3


def test_randtest_synth(capsys):
    code, out, _ = run(["randtest", "--source", "synth", "--seed", 1], capsys)
    assert code == 0 and "all tests pass" in out


def test_randtest_catalog(tmp_path, corpus_pcap, capsys):
    cat = tmp_path / "cat"
    run(["ingest", "--catalog", cat, corpus_pcap], capsys)
    code, out, _ = run(["randtest", "--catalog", cat, "--json"], capsys)
    assert code == 0 and json.loads(out)["n"] == 50


def test_rts_cli(capsys):
    code, out, _ = run(["rts", "--json", "--seed", 4], capsys)
    res = json.loads(out)
    assert code == 0 and len(res) == 32 and sum(r["present"] for r in res) == 16


def test_usage_errors(tmp_path, capsys):
    assert run(["nosuch"], capsys)[0] == 1
    assert run(["rainbow"], capsys)[0] == 1
    assert run(["rainbow", "--mac", "zz"], capsys)[0] == 1
    assert run(["ingest", "--catalog", tmp_path, "--signature", "0,1,bogus"], capsys)[0] == 1


def test_lock_held(tmp_path, capsys):
    cat = tmp_path / "cat"
    cat.mkdir()
    (cat / ".lock").write_text("1")
    assert run(["ingest", "--catalog", cat], capsys)[0] == 1


def test_global_flags_either_side(tmp_path, corpus_pcap, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    run(["--catalog", a, "ingest", corpus_pcap], capsys)
    run(["ingest", corpus_pcap, "--catalog", b], capsys)
    assert (a / "records.jsonl").read_bytes() == (b / "records.jsonl").read_bytes()
