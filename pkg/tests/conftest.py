import numpy as np
import pytest
import torch

from audioface.synthcorpus import CorpusConfig, generate_corpus


@pytest.fixture(scope="session", autouse=True)
def _threads():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def small_config():
    return CorpusConfig(num_sequences=6, min_segments=4, max_segments=8, num_speakers=3,
                        num_identities=2, test_fraction=0.34, seed=3)


@pytest.fixture(scope="session")
def small_corpus(small_config):
    return generate_corpus(small_config)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance verdicts, filled by test_acceptance.py and echoed after the run.
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)
