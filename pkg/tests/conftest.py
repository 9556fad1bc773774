"""Shared fixtures: small synthetic corpora and session-scoped trained models."""

from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import settings

from jpave.data import SynthConfig, synth_generate
from jpave.training import TrainConfig, train

_CRITERIA: list[str] = []

# fixed example generation so repeated runs see the same cases
settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")

# settings shared by every training run in the suite (sized for one CPU core)
FAST = dict(l_max=20, d_a=64, batch_size=16, lr=1e-2, tokenize="space")


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(capsys):
    """Call with (number, passed, detail): prints one PASS/FAIL line and keeps it for the summary."""

    def emit(number: int, passed: bool, detail: str) -> bool:
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        _CRITERIA.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return emit


@pytest.fixture(scope="session")
def small_corpus():
    """Synthetic corpus with the default shape: 200 train instances, 5 attributes, 4 values each."""
    return synth_generate(SynthConfig(seed=0))


def _overfit(variant: str, corpus):
    tr, _, _, schema = corpus
    cfg = TrainConfig(variant=variant, epochs=200, patience=10, seed=0, **FAST)
    start = time.perf_counter()
    result = train(cfg, tr, tr, schema)
    return result, time.perf_counter() - start


@pytest.fixture(scope="session")
def overfit_gen(small_corpus):
    return _overfit("gen", small_corpus)


@pytest.fixture(scope="session")
def overfit_cls(small_corpus):
    return _overfit("cls", small_corpus)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
