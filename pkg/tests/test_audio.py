"""WAV ingest, normalization, resampling, and framing."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voiceauth.audio import (AudioBuffer, frame_signal, read_audio, resample,
                             write_wav)
from voiceauth.exceptions import (AudioFormatError, BufferTooShortError,
                                  EmptyAudioError)


def _write_raw_wav(path, samples, rate, fmt="int16", channels=1):
    if fmt == "int16":
        pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767)
        data = pcm.astype("<i2").tobytes()
        code, bits = 1, 16
    else:
        data = np.asarray(samples, dtype="<f4").tobytes()
        code, bits = 3, 32
    block = channels * bits // 8
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, code, channels, rate,
                                    rate * block, block, bits)
    header += b"data" + struct.pack("<I", len(data))
    path.write_bytes(header + data)


def test_one_second_16k_mono(tmp_path):
    rng = np.random.default_rng(0)
    _write_raw_wav(tmp_path / "a.wav", rng.uniform(-0.5, 0.5, 16000), 16000)
    buf = read_audio(tmp_path / "a.wav")
    assert len(buf.samples) == 16000
    assert buf.sample_rate == 16000
    assert np.all(np.abs(buf.samples) <= 1.0)


def test_one_second_48k_resampled_to_16k(tmp_path):
    rng = np.random.default_rng(1)
    _write_raw_wav(tmp_path / "a.wav", rng.uniform(-0.5, 0.5, 48000), 48000)
    buf = read_audio(tmp_path / "a.wav")
    assert len(buf.samples) == 16000
    assert buf.sample_rate == 16000


def test_empty_file_is_error(tmp_path):
    _write_raw_wav(tmp_path / "empty.wav", np.zeros(0), 16000)
    with pytest.raises(EmptyAudioError):
        read_audio(tmp_path / "empty.wav")


def test_missing_file_is_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_audio(tmp_path / "nope.wav")


def test_garbage_header_is_error(tmp_path):
    (tmp_path / "bad.wav").write_bytes(b"not a wav file at all")
    with pytest.raises(AudioFormatError):
        read_audio(tmp_path / "bad.wav")


def test_unsupported_bit_depth_is_error(tmp_path):
    data = np.zeros(300, dtype="<i1").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, 16000, 16000, 1, 8)
    header += b"data" + struct.pack("<I", len(data))
    (tmp_path / "u8.wav").write_bytes(header + data)
    with pytest.raises(AudioFormatError):
        read_audio(tmp_path / "u8.wav")


def test_stereo_averaged_to_mono(tmp_path):
    left = np.full(1000, 0.5)
    right = np.full(1000, -0.1)
    interleaved = np.empty(2000)
    interleaved[0::2] = left
    interleaved[1::2] = right
    _write_raw_wav(tmp_path / "st.wav", interleaved, 16000, channels=2)
    buf = read_audio(tmp_path / "st.wav")
    assert len(buf.samples) == 1000
    assert np.allclose(buf.samples, 0.2, atol=1e-3)


def test_float32_wav(tmp_path):
    samples = np.linspace(-0.9, 0.9, 4096)
    _write_raw_wav(tmp_path / "f.wav", samples, 16000, fmt="float32")
    buf = read_audio(tmp_path / "f.wav")
    assert np.allclose(buf.samples, samples, atol=1e-6)


def test_int16_scaling_uses_32768(tmp_path):
    pcm = np.array([-32768, 0, 16384], dtype="<i2")
    data = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, 16000, 32000, 2, 16)
    header += b"data" + struct.pack("<I", len(data))
    (tmp_path / "s.wav").write_bytes(header + data)
    buf = read_audio(tmp_path / "s.wav")
    assert buf.samples[0] == -1.0
    assert buf.samples[1] == 0.0
    assert buf.samples[2] == 0.5


def test_read_is_deterministic(tmp_path):
    rng = np.random.default_rng(2)
    _write_raw_wav(tmp_path / "d.wav", rng.uniform(-0.5, 0.5, 22050), 22050)
    a = read_audio(tmp_path / "d.wav")
    b = read_audio(tmp_path / "d.wav")
    assert np.array_equal(a.samples, b.samples)
    fa = frame_signal(a, 2048, 256)
    fb = frame_signal(b, 2048, 256)
    assert np.array_equal(fa.frames, fb.frames)


def test_write_read_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    buf = AudioBuffer(samples=rng.uniform(-0.8, 0.8, 8000), sample_rate=16000)
    write_wav(tmp_path / "rt.wav", buf)
    back = read_audio(tmp_path / "rt.wav")
    assert np.allclose(back.samples, buf.samples, atol=1.0 / 32000)


@pytest.mark.parametrize("rate_in,n_in", [(8000, 8000), (22050, 11025),
                                          (44100, 44100), (48000, 96000)])
def test_resample_preserves_duration(rate_in, n_in):
    rng = np.random.default_rng(4)
    out = resample(rng.normal(size=n_in), rate_in, 16000)
    assert abs(len(out) / 16000 - n_in / rate_in) <= 1.0 / 16000


def test_resample_preserves_tone():
    t = np.arange(48000) / 48000
    tone = 0.5 * np.sin(2 * np.pi * 1000.0 * t)
    out = resample(tone, 48000, 16000)
    spectrum = np.abs(np.fft.rfft(out))
    peak_hz = np.argmax(spectrum) * 16000 / len(out)
    assert abs(peak_hz - 1000.0) < 2.0
    # interior RMS preserved (edges see the kernel ramp)
    assert abs(np.sqrt(np.mean(out[200:-200] ** 2)) - 0.5 / np.sqrt(2)) < 0.01


def test_frame_count_formula():
    buf = AudioBuffer(samples=np.ones(16000), sample_rate=16000)
    fm = frame_signal(buf, 2048, 256)
    assert fm.n_frames == (16000 - 2048) // 256 + 1 == 55
    assert fm.frames.shape == (55, 2048)


def test_rect_window_constant_signal():
    buf = AudioBuffer(samples=np.ones(1000), sample_rate=16000)
    fm = frame_signal(buf, 128, 64, window="rect")
    assert np.all(fm.frames == 1.0)


def test_hann_window_matches_formula():
    buf = AudioBuffer(samples=np.ones(512), sample_rate=16000)
    fm = frame_signal(buf, 256, 128, window="hann")
    n = np.arange(256)
    expected = 0.5 - 0.5 * np.cos(2 * np.pi * n / 256)
    assert np.allclose(fm.frames[0], expected, atol=1e-12)


def test_buffer_shorter_than_frame_is_error():
    buf = AudioBuffer(samples=np.ones(100), sample_rate=16000)
    with pytest.raises(BufferTooShortError):
        frame_signal(buf, 2048, 256)


def test_bad_hop_is_error():
    buf = AudioBuffer(samples=np.ones(4096), sample_rate=16000)
    with pytest.raises(ValueError):
        frame_signal(buf, 2048, 0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(64, 5000), frame_len=st.integers(1, 512),
       hop=st.integers(1, 400))
def test_frame_count_property(n, frame_len, hop):
    if frame_len > n:
        frame_len = n
    buf = AudioBuffer(samples=np.ones(n), sample_rate=16000)
    fm = frame_signal(buf, frame_len, hop, window="rect")
    assert fm.n_frames == (n - frame_len) // hop + 1
    assert fm.frames.shape[1] == frame_len


def test_buffer_invariants():
    with pytest.raises(EmptyAudioError):
        AudioBuffer(samples=np.array([]), sample_rate=16000)
    with pytest.raises(AudioFormatError):
        AudioBuffer(samples=np.array([np.nan, 0.0]), sample_rate=16000)
    with pytest.raises(AudioFormatError):
        AudioBuffer(samples=np.ones(10), sample_rate=0)
