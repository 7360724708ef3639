import os
import sys

import hypothesis
import numpy as np
import pytest

sys.path.append(os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src"))

from dsp.features import MfccConfig  # noqa: E402
from enhancer.network import EnhancerConfig  # noqa: E402
from pbdr.modulation import MapperConfig  # noqa: E402
from phoneme.classifier import ClassifierConfig  # noqa: E402
from pipeline.config import RunConfig, ToyCorpusConfig  # noqa: E402
from pipeline.corpus import load_split, synth_toy_corpus  # noqa: E402

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("fast")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance experiment")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


TINY_CORPUS = ToyCorpusConfig(
    n_classes=8,
    n_train=4,
    n_test=2,
    utterance_min_s=0.3,
    utterance_max_s=0.5,
    segment_min_ms=80.0,
    segment_max_ms=150.0,
    seed=7,
)


def small_run_config(**changes) -> RunConfig:
    """Default framing with small networks, for fast pipeline tests."""
    rc = RunConfig(
        batch_size=2,
        epochs=2,
        max_steps=3,
        classifier=ClassifierConfig(n_inputs=13, bank_size=2, bank_channels=4, projection_channels=8,
                                    highway_layers=1, highway_width=8, gru_hidden=8, n_classes=8),
        mapper=MapperConfig(hidden=8),
        enhancer=EnhancerConfig(channels=(4, 4, 4), residual_blocks=1, concat_channels=2),
        mfcc=MfccConfig(),
    )
    return rc.updated(**changes) if changes else rc


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    corpus_dir = tmp_path_factory.mktemp("corpus")
    synth_toy_corpus(TINY_CORPUS, corpus_dir, progress=False)
    return corpus_dir


@pytest.fixture(scope="session")
def tiny_train(tiny_corpus):
    return load_split(tiny_corpus, "train", TINY_CORPUS.n_classes)


@pytest.fixture(scope="session")
def tiny_test(tiny_corpus):
    return load_split(tiny_corpus, "test", TINY_CORPUS.n_classes)
