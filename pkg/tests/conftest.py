"""Shared fixtures: one trained system per session, plus small signal helpers."""

import numpy as np
import pytest

from voiceauth import corpus as corpus_mod
from voiceauth.audio import AudioBuffer

CORPUS_SEED = 2
TARGET = "spk00"


@pytest.fixture(scope="session")
def corpus10():
    return corpus_mod.generate_corpus(10, 12, seed=CORPUS_SEED)


@pytest.fixture(scope="session")
def trained(corpus10):
    return corpus_mod.train_system(corpus10, TARGET, seed=CORPUS_SEED)


@pytest.fixture(scope="session")
def corpus_split(corpus10):
    return corpus_mod.split_corpus(corpus10)


@pytest.fixture(scope="session")
def speaker_profiles():
    return {p.speaker_id: p for p in corpus_mod.make_speakers(10, CORPUS_SEED)}


@pytest.fixture()
def noise_buffer():
    rng = np.random.default_rng(0)
    return AudioBuffer(samples=rng.normal(scale=0.1, size=16000),
                       sample_rate=16000)


@pytest.fixture()
def tone_buffer():
    t = np.arange(16000) / 16000
    return AudioBuffer(samples=0.5 * np.sin(2 * np.pi * 1000.0 * t),
                       sample_rate=16000)
