import numpy as np
import pytest
from scipy.io import wavfile

from birdlabel.audio_io import (
    AudioClip,
    AudioIOError,
    BandpassSpec,
    bandpass,
    load_audio,
    resample,
    save_wav,
    trim,
)
from conftest import tone
from oracles import band_power, dft_peak_hz


class TestLoadAudio:
    def test_stereo_48k_to_44100_duration_preserved(self, tmp_path):
        rate = 48000
        data = np.stack([tone(440, 2.0, rate), tone(880, 2.0, rate)], axis=1)
        path = tmp_path / "stereo.wav"
        wavfile.write(path, rate, (data * 32767).astype(np.int16))
        clip = load_audio(path, 44100)
        assert len(clip.samples) == 88200
        assert clip.sample_rate == 44100
        assert clip.samples.ndim == 1

    def test_identity_resample_keeps_samples(self, tmp_path):
        rate = 44100
        data = tone(440, 1.0, rate)
        path = tmp_path / "mono.wav"
        wavfile.write(path, rate, (data * 32767).astype(np.int16))
        clip = load_audio(path, 44100)
        np.testing.assert_allclose(clip.samples, data, atol=1e-4)

    def test_upsample_22050_keeps_dft_peak(self, tmp_path):
        rate = 22050
        path = tmp_path / "low.wav"
        wavfile.write(path, rate, (tone(440, 1.0, rate) * 32767).astype(np.int16))
        clip = load_audio(path, 44100)
        assert len(clip.samples) == 44100
        assert abs(dft_peak_hz(clip.samples, 44100) - 440.0) <= 1.0

    def test_24bit_and_32bit_pcm(self, tmp_path):
        data = (tone(500, 0.5) * (2**31 - 1)).astype(np.int32)
        path = tmp_path / "pcm32.wav"
        wavfile.write(path, 44100, data)
        clip = load_audio(path, 44100)
        assert np.max(np.abs(clip.samples)) <= 1.0
        assert np.max(np.abs(clip.samples)) > 0.4

    def test_missing_file(self, tmp_path):
        with pytest.raises(AudioIOError, match="no such file"):
            load_audio(tmp_path / "absent.wav")

    def test_non_wav_reports_conversion(self, tmp_path):
        path = tmp_path / "fake.mp3"
        path.write_bytes(b"ID3\x04\x00 not audio")
        with pytest.raises(AudioIOError, match="conversion to PCM WAV"):
            load_audio(path)

    def test_zero_length_audio(self, tmp_path):
        path = tmp_path / "empty.wav"
        wavfile.write(path, 44100, np.zeros(0, dtype=np.int16))
        with pytest.raises(AudioIOError, match="zero-length"):
            load_audio(path)


class TestBandpass:
    def test_white_noise_kills_50hz(self, noise_clip):
        clip = noise_clip(duration_s=4.0, seed=7)
        out = bandpass(clip, BandpassSpec(100.0, 18000.0, 15))
        drop_db = 10 * np.log10(
            band_power(out.samples, 44100, 40, 60)
            / band_power(out.samples, 44100, 950, 1050)
        )
        assert drop_db <= -20.0

    def test_in_band_tone_rms_preserved(self, tone_clip):
        clip = tone_clip(1000.0, duration_s=2.0)
        out = bandpass(clip, BandpassSpec(100.0, 18000.0, 15))
        rms_in = np.sqrt(np.mean(clip.samples**2))
        rms_out = np.sqrt(np.mean(out.samples**2))
        assert abs(rms_out - rms_in) / rms_in < 0.01

    def test_dc_removed(self):
        clip = AudioClip(np.full(44100, 0.5), 44100, "dc")
        out = bandpass(clip, BandpassSpec(100.0, 18000.0, 15))
        assert np.sqrt(np.mean(out.samples**2)) < 0.005

    def test_length_preserved(self, noise_clip):
        clip = noise_clip(duration_s=0.7)
        out = bandpass(clip, BandpassSpec(200.0, 8000.0, 15))
        assert len(out) == len(clip)

    def test_linearity(self, noise_clip):
        clip = noise_clip(duration_s=1.0, seed=3)
        spec = BandpassSpec(300.0, 5000.0, 15)
        direct = bandpass(AudioClip(2.5 * clip.samples, 44100), spec).samples
        scaled = 2.5 * bandpass(clip, spec).samples
        np.testing.assert_allclose(direct, scaled, rtol=1e-6, atol=1e-12)

    def test_high_hz_at_nyquist_rejected(self, noise_clip):
        with pytest.raises(AudioIOError, match="Nyquist"):
            bandpass(noise_clip(), BandpassSpec(100.0, 22050.0, 15))

    def test_invalid_band_rejected(self):
        with pytest.raises(ValueError):
            BandpassSpec(5000.0, 100.0, 15)


class TestTrim:
    def test_identity(self, tone_clip):
        clip = tone_clip(440.0, duration_s=2.0)
        out = trim(clip, 0.0, 2.0)
        np.testing.assert_array_equal(out.samples, clip.samples)

    def test_one_second_cut(self, tone_clip):
        clip = tone_clip(440.0, duration_s=3.0)
        out = trim(clip, 1.0, 2.0)
        assert len(out) == 44100

    def test_composition(self, tone_clip):
        clip = tone_clip(440.0, duration_s=4.0, source_id="orig")
        twice = trim(trim(clip, 1.0, 3.0), 0.5, 1.5)
        once = trim(clip, 1.5, 2.5)
        np.testing.assert_array_equal(twice.samples, once.samples)
        assert twice.source_id == once.source_id == "orig@s=66150"

    def test_out_of_range_rejected(self, tone_clip):
        clip = tone_clip(440.0, duration_s=1.0)
        with pytest.raises(ValueError):
            trim(clip, 0.5, 1.5)
        with pytest.raises(ValueError):
            trim(clip, 0.8, 0.2)


class TestResample:
    def test_duration_within_one_sample(self, tone_clip):
        clip = tone_clip(440.0, duration_s=1.3, rate=48000)
        out = resample(clip, 44100)
        assert abs(out.duration_s - clip.duration_s) <= 1.0 / 44100

    def test_wav_roundtrip(self, tmp_path, tone_clip):
        clip = tone_clip(440.0, duration_s=0.5)
        path = tmp_path / "out.wav"
        save_wav(clip, path)
        back = load_audio(path, 44100)
        np.testing.assert_allclose(back.samples, clip.samples, atol=1e-4)


class TestAudioClip:
    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            AudioClip(np.zeros(10), 0)

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            AudioClip(np.zeros((10, 2)), 44100)
