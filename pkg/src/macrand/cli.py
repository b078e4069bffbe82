"""``macrand`` command line.

Exit codes: 0 success, 1 usage error, 2 input-format error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import os
import sys
import uuid as uuidlib
from dataclasses import replace
from pathlib import Path

from macrand.address import MacAddress, PrefixRegistry, parse_prefix
from macrand.capture import CaptureError, UnsupportedLinkType, load_capture, parse_capture
from macrand.catalog import CatalogLocked, CatalogStore, sha256_file
from macrand.classify import (
    Bin,
    ClassifyConfig,
    bin_report_csv,
    build_bin_report,
    render_bin_report,
)
from macrand.derandomize import (
    ChainConfig,
    Method,
    offset_class_shares,
    top_ssids,
)
from macrand.dot11 import FrameKind
from macrand.pipeline import (
    CaptureFrames,
    PipelineConfig,
    classify_captures,
    method_matrix,
    render_matrix,
    run_pipeline,
)
from macrand.rainbow import CorruptTable, RainbowError, RainbowTable, build_rainbow_table, uuid_e
from macrand.randtest import PREFIX_SPACE, randomness_report
from macrand.signature import DeviceSignature, derive_signature

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("macrand")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS so values given before the subcommand are not overwritten by sub-parser defaults
    common.add_argument("--catalog", default=argparse.SUPPRESS, help="catalog directory (default ./catalog)")
    common.add_argument("--registry", default=argparse.SUPPRESS, help="prefix registry CSV")
    common.add_argument("--signature", default=argparse.SUPPRESS, help="canonical signature filter")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = _Parser(prog="macrand", description="802.11 MAC randomization analysis toolkit", parents=[common])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("ingest", parents=[common], help="parse, classify and store captures")
    s.add_argument("paths", nargs="*", type=Path)
    s.add_argument("--global-floor", type=int, default=ClassifyConfig.global_scheme_floor)
    s.add_argument("--global-fraction", type=float, default=ClassifyConfig.global_scheme_fraction)
    s.add_argument("--extender-min-span", type=float, default=ClassifyConfig.extender_min_span_s)
    s.add_argument("--apple-vendor-type", type=int, default=ClassifyConfig.apple_ios_vendor_type)

    s = sub.add_parser("derand", parents=[common], help="run the derandomization methods")
    s.add_argument("--max-gap", type=int, default=ChainConfig.max_gap)
    s.add_argument("--max-dt", type=float, default=ChainConfig.max_dt_s, help="seconds")
    s.add_argument("--rainbow", type=Path, help="UUID-E reverse table")
    s.add_argument("--no-learn-pairs", action="store_true")
    s.add_argument("--pair-support", type=int, default=1)
    s.add_argument("--sweep", action="store_true", help="emit a CSV of link counts over a threshold grid")
    s.add_argument("--sweep-gaps", type=_ints, default=[5, 10, 30, 60, 120])
    s.add_argument("--sweep-dts", type=_floats, default=[0.5, 1.0, 2.0, 5.0])
    s.add_argument("--sweep-out", type=Path)

    s = sub.add_parser("report", parents=[common], help="bin tables, Karma, Type-6 and randomness summaries")
    s.add_argument("--csv", action="store_true", help="bin table as CSV")
    s.add_argument("--top", type=int, default=10)
    s.add_argument("--offset", type=int, default=0, help="bit offset of the FIPS window")

    s = sub.add_parser("simulate", parents=[common], help="write a synthetic pcap and ground truth")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--mode", choices=("corpus", "hotspot"), default="corpus")
    s.add_argument("--per-scheme", type=int, default=10)
    s.add_argument("--duration", type=float, default=300.0)
    s.add_argument("--hotspots", type=int, default=1000)
    s.add_argument("--one-off-share", type=float, default=0.95)
    s.add_argument("--drop", type=float, default=0.0)

    s = sub.add_parser("rts", parents=[common], help="RTS presence scan over simulated responders")
    s.add_argument("--responders", type=int, default=16)
    s.add_argument("--absent", type=int, default=None, help="absent candidates (default: as many as responders)")
    s.add_argument("--candidates", type=Path, help="file of MAC addresses, one per line")
    s.add_argument("--trigger", help="only scan after this signature is heard")

    s = sub.add_parser("randtest", parents=[common], help="collision and FIPS 140-1 tests")
    s.add_argument("--source", choices=("catalog", "synth"), default="catalog")
    s.add_argument("--bin", default=Bin.RandIos.value, help="catalog bin to test")
    s.add_argument("--count", type=int, default=47_255, help="synthesized address count")
    s.add_argument("--offset", type=int, default=0)
    s.add_argument("--m", type=int, default=PREFIX_SPACE)

    s = sub.add_parser("rainbow", parents=[common], help="build or query a UUID-E reverse table")
    s.add_argument("--oui", action="append", default=[])
    s.add_argument("--suffix-bits", type=int, default=24)
    s.add_argument("--suffix-base", type=int, default=0)
    s.add_argument("--out", type=Path)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--table", type=Path)
    s.add_argument("--lookup", help="UUID-E to reverse")
    s.add_argument("--mac", help="print the UUID-E of this address")
    return p


def _opt(args, name, default=None):
    return getattr(args, name, default)


def _registry(args) -> PrefixRegistry:
    path = _opt(args, "registry")
    return PrefixRegistry.load(path) if path else PrefixRegistry.default()


def _store(args) -> CatalogStore:
    return CatalogStore(_opt(args, "catalog") or "catalog")


def _emit(args, text: str, payload) -> None:
    if _opt(args, "json"):
        print(json.dumps(payload, sort_keys=True, indent=2))
    else:
        print(text)


def _filter_frames(frames, signature: str | None):
    if not signature:
        return frames
    want = DeviceSignature.parse(signature).canonical
    return [f for f in frames if f.kind is not FrameKind.ProbeRequest or derive_signature(f).canonical == want]


def _catalog_captures(store: CatalogStore) -> list[CaptureFrames]:
    out = []
    for inp in store.meta().get("inputs", []):
        path = store.captures_dir / f"{inp['sha256']}.pcap"
        parsed = parse_capture(load_capture(path))
        out.append(CaptureFrames(inp["sha256"][:16], _filter_frames(parsed.frames, inp.get("signature_filter"))))
    return out


def _classify_config(meta: dict) -> ClassifyConfig:
    d = meta.get("thresholds", {}).get("classify")
    if not d:
        return ClassifyConfig()
    return ClassifyConfig(
        global_scheme_floor=d["global_scheme_floor"],
        global_scheme_fraction=d["global_scheme_fraction"],
        infrastructure_owners=tuple(d["infrastructure_owners"]),
        extender_min_span_s=d["extender_min_span_s"],
        wifi_direct_type=d["wifi_direct_type"],
        apple_ios_vendor_type=d["apple_ios_vendor_type"],
    )


def cmd_ingest(args) -> int:
    store = _store(args)
    registry = _registry(args)
    ccfg = ClassifyConfig(
        global_scheme_floor=args.global_floor,
        global_scheme_fraction=args.global_fraction,
        extender_min_span_s=args.extender_min_span,
        apple_ios_vendor_type=args.apple_vendor_type,
    )
    sig_filter = _opt(args, "signature")
    if sig_filter:
        DeviceSignature.parse(sig_filter)
    errors: list[tuple[str, str]] = []
    summary = []
    with store:
        meta = store.meta()
        inputs = {i["sha256"]: i for i in meta.get("inputs", [])}
        for path in args.paths:
            try:
                digest = sha256_file(path)
                parsed = parse_capture(load_capture(path))
            except FileNotFoundError:
                errors.append((str(path), "no such file"))
                continue
            except CaptureError as e:
                errors.append((str(path), f"{type(e).__name__}: {e}"))
                continue
            if digest in inputs and inputs[digest].get("signature_filter") == sig_filter:
                summary.append({"path": str(path), "status": "unchanged"})
                continue
            store.add_capture(path, digest)
            inputs[digest] = {
                "sha256": digest,
                "name": Path(path).name,
                "frames": len(parsed.frames),
                "malformed": parsed.malformed,
                "link_type": parsed.link_type,
                "signature_filter": sig_filter,
            }
            summary.append({"path": str(path), "status": "ingested", "frames": len(parsed.frames),
                            "malformed": parsed.malformed})
        meta["inputs"] = [inputs[k] for k in sorted(inputs)]
        meta.setdefault("thresholds", {})["classify"] = ccfg.to_json()
        meta["registry"] = {"path": _opt(args, "registry") or "<shipped>", "entries": len(registry)}
        store.write_meta(meta)
        records = classify_captures(_catalog_captures(store), registry, ccfg)
        store.write_records(records)
        if not store.links_path.exists():
            store.write_links([])
    report = build_bin_report(records)
    report.check()
    text = "\n".join(f"{s['path']}: {s['status']}" for s in summary)
    text += ("\n" if text else "") + render_bin_report(report)
    for path, err in errors:
        text += f"\nerror: {path}: {err}"
    _emit(args, text, {"files": summary, "errors": [{"path": p, "error": e} for p, e in errors],
                       "report": report.to_json()})
    return EXIT_INPUT if errors else EXIT_OK


def _pipeline_config(args, meta) -> PipelineConfig:
    return PipelineConfig(
        classify=_classify_config(meta),
        chain=ChainConfig(max_gap=args.max_gap, max_dt_s=args.max_dt),
        learn_pairs=not args.no_learn_pairs,
        pair_support=args.pair_support,
    )


def _fresh_records(store):
    recs = store.records()
    for r in recs:
        r.linked_global = None
        r.link_methods = []
        r.evidence = [e for e in r.evidence if not e.startswith("link-conflict:")]
        r.signatures_global = set(r.signatures_global) if r.bin is Bin.GlobalUnicast else set()
    return recs


def cmd_derand(args) -> int:
    store = _store(args)
    if not store.exists():
        raise UsageError(f"no catalog at {store.path}; run ingest first")
    registry = _registry(args)
    meta = store.meta()
    cfg = _pipeline_config(args, meta)
    captures = _catalog_captures(store)
    if args.sweep:
        rows = []
        base = _fresh_records(store)
        for gap in args.sweep_gaps:
            for dt in args.sweep_dts:
                c = replace(cfg, chain=ChainConfig(max_gap=gap, max_dt_s=dt))
                res = run_pipeline(captures, registry, c, None, copy.deepcopy(base))
                counts = {m: sum(l.method is m for l in res.links) for m in Method}
                rows.append([gap, dt, counts[Method.SeqChain], counts[Method.AuthAssoc],
                             len(res.links), len(res.ambiguities)])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["max_gap", "max_dt_s", "seqchain_links", "authassoc_links", "total_links", "ambiguities"])
        w.writerows(rows)
        if args.sweep_out:
            args.sweep_out.write_text(buf.getvalue())
        print(buf.getvalue(), end="")
        return EXIT_OK

    table = RainbowTable(args.rainbow) if args.rainbow else None
    with store:
        records = _fresh_records(store)
        res = run_pipeline(captures, registry, cfg, table, records)
        store.write_records(res.records)
        store.write_links(res.links)
        meta = store.meta()
        th = meta.setdefault("thresholds", {})
        th.update({k: v for k, v in cfg.to_json().items() if k != "classify"})
        th["rainbow"] = {"path": str(args.rainbow), "sha256": sha256_file(args.rainbow)} if args.rainbow else None
        meta["derand"] = {
            "pairs": sorted([g.canonical, r.canonical] for g, r in res.pairs),
            "ambiguities": [a.to_json() for a in res.ambiguities],
            "degenerate_uuid_records": sorted(res.degenerate),
            "karma": [k.to_json() for k in res.karma],
        }
        store.write_meta(meta)
    if table is not None:
        table.close()
    matrix = method_matrix(res)
    counts = {m.value: sum(l.method is m for l in res.links) for m in Method}
    text = render_matrix(matrix) + "\n\nlinks: " + ", ".join(f"{k}={v}" for k, v in counts.items())
    text += f"\nlearned signature pairs: {len(res.pairs)}; ambiguous joins rejected: {len(res.ambiguities)}"
    if res.degenerate:
        text += f"\nshared UUID-E flagged on {len(res.degenerate)} record(s)"
    if not res.reversal_ran:
        text += "\nUUID-E reversal skipped (no --rainbow table)"
    _emit(args, text, {"matrix": {b.value: row for b, row in matrix.items()}, "links": counts,
                       "ambiguities": len(res.ambiguities), "degenerate": res.degenerate})
    return EXIT_OK


def _ordered_addresses(captures, addrs: set[MacAddress]) -> list[MacAddress]:
    seen, out = set(), []
    for c in captures:
        for f in c.frames:
            if f.source in addrs and f.source not in seen:
                seen.add(f.source)
                out.append(f.source)
    return out


def cmd_report(args) -> int:
    store = _store(args)
    records = store.records() if store.exists() else []
    links = store.links() if store.exists() else []
    meta = store.meta()
    report = build_bin_report(records)
    report.check()
    if args.csv:
        print(bin_report_csv(report), end="")
        return EXIT_OK
    karma = meta.get("derand", {}).get("karma", [])
    from macrand.derandomize import KarmaFinding

    findings = [KarmaFinding(k["device_key"], [s.encode() for s in k["directed_ssids"]], k["offload_flag"])
                for k in karma]
    top = top_ssids(findings, args.top)
    type6 = [l for l in links if l.method is Method.Type6Correlation]
    shares = offset_class_shares(type6)
    ios = {a for r in records if r.bin is Bin.RandIos for a in r.addresses}
    rand = None
    if ios:
        rand = randomness_report(_ordered_addresses(_catalog_captures(store), ios), offset=args.offset)

    parts = [render_bin_report(report), "", "Karma audit"]
    parts.append(f"  devices sending directed probes: {len(findings)}"
                 f" ({sum(f.offload_flag for f in findings)} with an offload SSID)")
    for ssid, n in top:
        parts.append(f"  {ssid.decode('utf-8', 'backslashreplace'):<28}{n:>6}")
    parts += ["", f"Type-6 correlation ({len(type6)} hotspot devices)"]
    for k, v in shares.items():
        parts.append(f"  {k:<28}{100 * v:>6.1f}%")
    one_off = shares["OneHigher"] + shares["OneLower"]
    parts.append(f"  {'one-off total':<28}{100 * one_off:>6.1f}%")
    if rand is not None:
        parts += ["", "Randomness (RandIos addresses)", rand.render()]
    payload = {
        "bins": report.to_json(),
        "karma": {"findings": len(findings), "top": [[s.decode("utf-8", "backslashreplace"), n] for s, n in top]},
        "type6": {"devices": len(type6), "shares": shares, "one_off": one_off},
        "randomness": rand.to_json() if rand else None,
    }
    _emit(args, "\n".join(parts), payload)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from macrand.corpus import CorpusConfig, build_corpus, hotspot_scripts
    from macrand.simulate import SimConfig, synthesize

    seed = _opt(args, "seed", 7)
    if args.mode == "corpus":
        scripts = build_corpus(CorpusConfig(per_scheme=args.per_scheme, duration_s=args.duration, seed=seed)).scripts
    else:
        scripts = hotspot_scripts(args.hotspots, args.one_off_share, seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    res = synthesize(scripts, args.out, SimConfig(drop_probability=args.drop, seed=seed))
    _emit(args, f"wrote {len(res.frames)} frames from {len(scripts)} devices to {args.out} "
                f"(ground truth {args.out}.truth.jsonl, {res.dropped} dropped)",
          {"frames": len(res.frames), "devices": len(scripts), "dropped": res.dropped, "out": str(args.out)})
    return EXIT_OK


def cmd_rts(args) -> int:
    import random

    from macrand.corpus import responder_matrix
    from macrand.responder import Medium, rts_scan

    seed = _opt(args, "seed", 0)
    responders = responder_matrix(args.responders, seed)
    if args.candidates:
        cands = [MacAddress.parse(l) for l in args.candidates.read_text().split() if l.strip()]
    else:
        rng = random.Random(seed + 1)
        real = [r.global_mac for r in responders]
        n_absent = args.responders if args.absent is None else args.absent
        absent = []
        while len(absent) < n_absent:
            m = MacAddress(bytes([rng.getrandbits(8) & 0xFC]) + rng.getrandbits(40).to_bytes(5, "big"))
            if m not in real and m not in absent:
                absent.append(m)
        cands = real + absent
        rng.shuffle(cands)
    if not cands:
        raise UsageError("no candidates")
    trigger = DeviceSignature.parse(args.trigger) if args.trigger else None
    result = rts_scan(cands, Medium(responders), seed=seed, trigger=trigger)
    text = "\n".join(f"{m}  {'present' if p else 'absent'}" for m, p in result)
    text += f"\n{sum(p for _, p in result)} of {len(result)} candidates present"
    _emit(args, text, [{"mac": str(m), "present": p} for m, p in result])
    return EXIT_OK


def cmd_randtest(args) -> int:
    from macrand.simulate import Scheme, random_addresses

    if args.source == "synth":
        addrs = random_addresses(Scheme.IosFullRandom, args.count, _opt(args, "seed", 0))
    else:
        store = _store(args)
        if not store.exists():
            raise UsageError(f"no catalog at {store.path}")
        want = Bin(args.bin)
        sel = {a for r in store.records() if r.bin is want for a in r.addresses}
        addrs = _ordered_addresses(_catalog_captures(store), sel)
    if not addrs:
        raise UsageError("no addresses to test")
    rep = randomness_report(addrs, args.m, args.offset)
    text = rep.render()
    if rep.fips is None:
        text += f"\nFIPS tests skipped: {46 * len(addrs)} bits from {len(addrs)} addresses, 20000 needed"
    elif rep.fips.passed:
        text += "\nFIPS 140-1: all tests pass"
    else:
        text += "\nFIPS 140-1: " + ", ".join(k for k, v in rep.fips.passes.items() if not v) + " failed"
    _emit(args, text, rep.to_json())
    return EXIT_OK


def cmd_rainbow(args) -> int:
    if args.mac:
        u = uuid_e(MacAddress.parse(args.mac))
        _emit(args, str(uuidlib.UUID(bytes=u)), {"mac": args.mac, "uuid_e": u.hex()})
        return EXIT_OK
    if args.lookup:
        if not args.table:
            raise UsageError("--lookup needs --table")
        raw = uuidlib.UUID(args.lookup).bytes
        with RainbowTable(args.table) as t:
            res = t.lookup(raw)
        text = str(res.mac) if res.mac else "not found"
        if res.degenerate:
            text += " (known shared UUID-E; does not identify a device)"
        _emit(args, text, {"mac": str(res.mac) if res.mac else None, "degenerate": res.degenerate})
        return EXIT_OK
    if not args.oui or not args.out:
        raise UsageError("building a table needs --oui and --out")
    ouis = [parse_prefix(o) for o in args.oui]
    t = build_rainbow_table(ouis, args.out, suffix_bits=args.suffix_bits, suffix_base=args.suffix_base,
                            workers=args.workers)
    text = t.describe()
    payload = {"records": len(t), "ouis": [o.hex() for o in t.ouis], "size": os.path.getsize(args.out)}
    t.close()
    _emit(args, text, payload)
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "derand": cmd_derand,
    "report": cmd_report,
    "simulate": cmd_simulate,
    "rts": cmd_rts,
    "randtest": cmd_randtest,
    "rainbow": cmd_rainbow,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if _opt(args, "verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, CatalogLocked) as e:
        print(f"macrand: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"macrand: invalid argument: {e}", file=sys.stderr)
        return EXIT_USAGE
    except UnsupportedLinkType as e:
        print(f"macrand: {e}", file=sys.stderr)
        return EXIT_INPUT
    except CaptureError as e:
        print(f"macrand: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (CorruptTable, AssertionError) as e:
        print(f"macrand: invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except RainbowError as e:
        print(f"macrand: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
