from __future__ import annotations

import pytest

from macrand.address import MacAddress, PrefixRegistry
from macrand.corpus import CorpusConfig, build_corpus
from macrand.pipeline import CaptureFrames, run_pipeline
from macrand.rainbow import build_rainbow_table
from macrand.signature import DeviceSignature
from macrand.simulate import SimConfig, render

MOTO_E2_SIG_G = "0,1,50,3,45,221(0x50f2,8),htcap:012c,htagg:03,htmcs:000000ff"
MOTO_E2_SIG_R = "0,1,50"


def mac(text: str) -> MacAddress:
    return MacAddress.parse(text)


@pytest.fixture(scope="session")
def registry() -> PrefixRegistry:
    return PrefixRegistry.default()


@pytest.fixture(scope="session")
def corpus():
    return build_corpus(CorpusConfig())


@pytest.fixture(scope="session")
def corpus_sim(corpus):
    return render(corpus.scripts, SimConfig(seed=7))


@pytest.fixture(scope="session")
def corpus_frames(corpus_sim):
    return [f for _, f in corpus_sim.frames]


@pytest.fixture(scope="session")
def desk_table(corpus, tmp_path_factory):
    path = tmp_path_factory.mktemp("rainbow") / "desk.bin"
    t = build_rainbow_table(corpus.rainbow_ouis, path, suffix_bits=16)
    yield t
    t.close()


@pytest.fixture(scope="session")
def pipeline_result(corpus_frames, registry, desk_table):
    return run_pipeline([CaptureFrames("corpus", corpus_frames)], registry, table=desk_table)


@pytest.fixture
def moto_sig_g() -> DeviceSignature:
    return DeviceSignature.parse(MOTO_E2_SIG_G)


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
