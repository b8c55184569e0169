import numpy as np
import pytest

from birdlabel.audio_io import AudioClip

RATE = 44100


def tone(freq_hz, duration_s=1.0, rate=RATE, amplitude=0.5):
    t = np.arange(int(duration_s * rate)) / rate
    return amplitude * np.sin(2.0 * np.pi * freq_hz * t)


@pytest.fixture
def tone_clip():
    def make(freq_hz, duration_s=1.0, rate=RATE, amplitude=0.5, source_id="tone"):
        return AudioClip(tone(freq_hz, duration_s, rate, amplitude), rate, source_id)

    return make


@pytest.fixture
def noise_clip():
    def make(duration_s=1.0, rate=RATE, sigma=0.1, seed=0, source_id="noise"):
        rng = np.random.default_rng(seed)
        return AudioClip(rng.normal(0.0, sigma, int(duration_s * rate)), rate, source_id)

    return make
