"""Prefix-collision expectations and the FIPS 140-1 statistical tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from macrand.address import MacAddress

PREFIX_SPACE = 1 << 22  # 24 prefix bits less the local and multicast bits
FIPS_STREAM_BITS = 20_000
BITS_PER_ADDRESS = 46

# FIPS PUB 140-1 power-up statistical tests over a 20,000-bit sample.
FIPS_MONOBIT = (9_654, 10_346)  # exclusive
FIPS_POKER = (1.03, 57.4)  # exclusive
FIPS_RUNS = {  # inclusive, required for runs of zeros and of ones alike
    1: (2_267, 2_733),
    2: (1_079, 1_421),
    3: (502, 748),
    4: (223, 402),
    5: (90, 223),
    6: (90, 223),  # 6 and longer
}
FIPS_LONG_RUN = 34  # a run this long or longer fails


class ShortStream(ValueError):
    pass


@dataclass
class FipsResult:
    monobit: int
    poker: float
    runs_ones: dict[int, int]
    runs_zeros: dict[int, int]
    longest_run: int
    passes: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.passes.values())

    def to_json(self) -> dict:
        return {
            "monobit": self.monobit,
            "poker": round(self.poker, 4),
            "runs_ones": {str(k): v for k, v in self.runs_ones.items()},
            "runs_zeros": {str(k): v for k, v in self.runs_zeros.items()},
            "longest_run": self.longest_run,
            "passes": dict(self.passes),
            "passed": self.passed,
        }


@dataclass
class RandomnessReport:
    n: int
    m: int
    expected_collisions: float
    observed_collisions: int
    expected_triples: float
    observed_triples: int
    fips: FipsResult | None = None

    def collision_sigma(self) -> float:
        return math.sqrt(self.expected_collisions)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "expected_collisions": self.expected_collisions,
            "observed_collisions": self.observed_collisions,
            "expected_triples": self.expected_triples,
            "observed_triples": self.observed_triples,
            "fips": self.fips.to_json() if self.fips else None,
        }

    def render(self) -> str:
        lines = [
            f"Addresses observed:   {self.n}",
            f"Possible prefixes:    {self.m}",
            f"Prefix collisions:    expected = {self.expected_collisions:.1f}, observed = {self.observed_collisions}",
            f"Prefix triples:       expected = {self.expected_triples:.2f}, observed = {self.observed_triples}",
        ]
        if self.fips is not None:
            f = self.fips
            mark = {True: "pass", False: "FAIL"}
            lines += [
                f"Monobit test:         {f.monobit} ({mark[f.passes['monobit']]})",
                f"Poker test:           {f.poker:.2f} ({mark[f.passes['poker']]})",
                "Runs test (ones):     " + ", ".join(f"{f.runs_ones[k]}" for k in sorted(f.runs_ones))
                + f" ({mark[f.passes['runs']]})",
                "Runs test (zeros):    " + ", ".join(f"{f.runs_zeros[k]}" for k in sorted(f.runs_zeros)),
                f"Long run test:        {f.longest_run} ({mark[f.passes['long_run']]})",
            ]
        return "\n".join(lines)


def masked_prefix(addr: MacAddress) -> int:
    """The 22 variable prefix bits as an index in [0, 2^22)."""
    r = addr.raw
    return ((r[0] >> 2) << 16) | (r[1] << 8) | r[2]


def expected_collisions(n: int, m: int = PREFIX_SPACE) -> float:
    return math.comb(n, 2) / m


def expected_triples(n: int, m: int = PREFIX_SPACE) -> float:
    return math.comb(n, 3) / (m * m)


def collision_stats(addresses: Sequence[MacAddress], m: int = PREFIX_SPACE) -> RandomnessReport:
    """Distinct masked prefixes seen at least twice (collisions) and at
    least three times (triples), against the birthday expectations."""
    n = len(addresses)
    if n:
        keys = np.fromiter((masked_prefix(a) for a in addresses), dtype=np.int64, count=n)
        _, counts = np.unique(keys, return_counts=True)
        coll, trip = int((counts >= 2).sum()), int((counts >= 3).sum())
    else:
        coll = trip = 0
    return RandomnessReport(n, m, expected_collisions(n, m), coll, expected_triples(n, m), trip)


def mac_bitstream(addresses: Iterable[MacAddress]) -> np.ndarray:
    """46 variable bits per address, MSB first, as a uint8 0/1 array."""
    raws = [a.raw for a in addresses]
    if not raws:
        return np.zeros(0, dtype=np.uint8)
    arr = np.frombuffer(b"".join(raws), dtype=np.uint8).reshape(-1, 6)
    bits = np.unpackbits(arr, axis=1)
    # drop bit 6 (local) and bit 7 (multicast) of byte 0
    keep = np.r_[0:6, 8:48]
    return bits[:, keep].reshape(-1)


def _runs(bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run values and lengths."""
    change = np.flatnonzero(np.diff(bits)) + 1
    starts = np.r_[0, change]
    lengths = np.diff(np.r_[starts, len(bits)])
    return bits[starts], lengths


def _run_counts(lengths: np.ndarray) -> dict[int, int]:
    return {k: int((lengths == k).sum()) if k < 6 else int((lengths >= 6).sum()) for k in range(1, 7)}


def poker_statistic(bits: np.ndarray) -> float:
    nib = bits[:FIPS_STREAM_BITS].reshape(-1, 4)
    vals = nib[:, 0] * 8 + nib[:, 1] * 4 + nib[:, 2] * 2 + nib[:, 3]
    f = np.bincount(vals.astype(np.int64), minlength=16)
    k = len(vals)
    return 16.0 / k * float((f.astype(np.int64) ** 2).sum()) - k


def fips_suite(bits, offset: int = 0) -> FipsResult:
    """Run the four FIPS 140-1 tests over one 20,000-bit window."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 1 or np.any(bits > 1):
        raise ValueError("expected a flat 0/1 bit array")
    if len(bits) - offset < FIPS_STREAM_BITS:
        raise ShortStream(f"need {FIPS_STREAM_BITS} bits from offset {offset}, have {len(bits) - offset}")
    w = bits[offset : offset + FIPS_STREAM_BITS]
    ones = int(w.sum())
    poker = poker_statistic(w)
    values, lengths = _runs(w)
    r1 = _run_counts(lengths[values == 1])
    r0 = _run_counts(lengths[values == 0])
    longest = int(lengths.max())
    runs_ok = all(FIPS_RUNS[k][0] <= c[k] <= FIPS_RUNS[k][1] for c in (r0, r1) for k in FIPS_RUNS)
    passes = {
        "monobit": FIPS_MONOBIT[0] < ones < FIPS_MONOBIT[1],
        "poker": FIPS_POKER[0] < poker < FIPS_POKER[1],
        "runs": runs_ok,
        "long_run": longest < FIPS_LONG_RUN,
    }
    return FipsResult(ones, poker, r1, r0, longest, passes)


def randomness_report(addresses: Sequence[MacAddress], m: int = PREFIX_SPACE, offset: int = 0) -> RandomnessReport:
    rep = collision_stats(addresses, m)
    stream = mac_bitstream(addresses)
    if len(stream) - offset >= FIPS_STREAM_BITS:
        rep.fips = fips_suite(stream, offset)
    return rep

