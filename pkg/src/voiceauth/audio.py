"""Audio ingest: WAV reading, normalization, resampling, and framing.

Everything downstream consumes one canonical representation: mono float
samples in [-1, 1] at 16 kHz. Inputs at other rates are resampled with a
windowed-sinc kernel on load; multi-channel inputs are averaged to mono.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import AudioFormatError, BufferTooShortError, EmptyAudioError

CANONICAL_RATE = 16000

# Half-width of the resampling kernel, in zero crossings of the sinc.
_SINC_ZERO_CROSSINGS = 16


@dataclass
class AudioBuffer:
    """Mono PCM samples at a known sample rate. Treat as immutable."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise EmptyAudioError("buffer must be a non-empty 1-D sample array")
        if not np.all(np.isfinite(self.samples)):
            raise AudioFormatError("buffer contains non-finite samples")
        if self.sample_rate <= 0:
            raise AudioFormatError(f"bad sample rate {self.sample_rate}")

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return len(self.samples) / self.sample_rate


@dataclass
class FrameMatrix:
    """T x L matrix of windowed frames taken every `hop` samples."""

    frames: np.ndarray
    frame_len: int
    hop: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def _window(name: str, length: int) -> np.ndarray:
    """Analysis window (periodic convention, as used for STFT)."""
    n = np.arange(length)
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)
    if name == "hamming":
        return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / length)
    if name == "rect":
        return np.ones(length)
    raise ValueError(f"unknown window '{name}' (use hann, hamming, or rect)")


def frame_signal(buf: AudioBuffer, frame_len: int, hop: int,
                 window: str = "hann") -> FrameMatrix:
    """Slice a buffer into overlapping windowed frames.

    Frame t covers samples [t*hop, t*hop + frame_len); the tail that does
    not fill a whole frame is dropped (no zero padding), so the frame count
    is exactly floor((N - frame_len)/hop) + 1.
    """
    if hop < 1:
        raise ValueError("hop must be >= 1")
    n = len(buf.samples)
    if n < frame_len:
        raise BufferTooShortError(
            f"need at least {frame_len} samples, got {n}")
    view = np.lib.stride_tricks.sliding_window_view(buf.samples, frame_len)
    frames = view[::hop] * _window(window, frame_len)
    return FrameMatrix(frames=frames, frame_len=frame_len, hop=hop)


def resample(samples: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    """Resample with a Hann-windowed sinc kernel.

    Output length is round(N * rate_out / rate_in), which keeps duration
    within half an output sample of the input duration. Kernel rows are
    normalized to unit sum so a constant signal maps to itself.
    """
    x = np.asarray(samples, dtype=np.float64)
    if rate_in == rate_out:
        return x.copy()
    ratio = rate_out / rate_in
    n_out = max(1, int(round(len(x) * ratio)))
    cutoff = 0.5 * min(1.0, ratio)  # cycles per input sample
    half_width = _SINC_ZERO_CROSSINGS / (2.0 * cutoff)
    offsets = np.arange(int(np.ceil(2 * half_width)) + 1)
    out = np.empty(n_out)
    for start in range(0, n_out, 8192):
        idx_out = np.arange(start, min(start + 8192, n_out))
        t0 = idx_out / ratio
        left = np.ceil(t0 - half_width).astype(np.int64)
        idx = left[:, None] + offsets[None, :]
        t = idx - t0[:, None]
        taper = np.where(np.abs(t) <= half_width,
                         0.5 * (1.0 + np.cos(np.pi * t / half_width)), 0.0)
        kernel = 2.0 * cutoff * np.sinc(2.0 * cutoff * t) * taper
        kernel /= np.sum(kernel, axis=1, keepdims=True)
        valid = (idx >= 0) & (idx < len(x))
        vals = np.where(valid, x[np.clip(idx, 0, len(x) - 1)], 0.0)
        out[idx_out] = np.sum(vals * kernel, axis=1)
    return out


def _parse_wav(raw: bytes) -> tuple[np.ndarray, int]:
    """Decode a RIFF/WAVE blob to (float samples in [-1,1], rate).

    Supports 16-bit signed PCM and 32-bit IEEE float, mono or multi-channel
    (including the WAVE_FORMAT_EXTENSIBLE wrappers of both).
    """
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise AudioFormatError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None or data is None:
        raise AudioFormatError("missing fmt or data chunk")
    if len(fmt) < 16:
        raise AudioFormatError("fmt chunk too short")
    audio_format, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format == 0xFFFE and len(fmt) >= 26:
        # extensible: real format code is the first two bytes of the GUID
        (audio_format,) = struct.unpack_from("<H", fmt, 24)
    if channels < 1:
        raise AudioFormatError("zero channels")
    if audio_format == 1 and bits == 16:
        flat = np.frombuffer(data[:len(data) - len(data) % 2], dtype="<i2")
        flat = flat.astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        flat = np.frombuffer(data[:len(data) - len(data) % 4], dtype="<f4")
        flat = flat.astype(np.float64)
    else:
        raise AudioFormatError(
            f"unsupported encoding (format={audio_format}, bits={bits}); "
            "expected 16-bit PCM or 32-bit float")
    if flat.size == 0:
        raise EmptyAudioError("zero-length audio")
    usable = flat[:len(flat) - len(flat) % channels]
    mono = usable.reshape(-1, channels).mean(axis=1)
    return np.clip(mono, -1.0, 1.0), rate


def read_audio(path: str | Path) -> AudioBuffer:
    """Read a PCM WAV file as a mono 16 kHz buffer.

    Multi-channel inputs are averaged to mono; other sample rates are
    resampled by windowed sinc. Raises AudioFormatError for unsupported
    encodings and EmptyAudioError for zero-length audio.
    """
    raw = Path(path).read_bytes()
    mono, rate = _parse_wav(raw)
    if mono.size == 0:
        raise EmptyAudioError("zero-length audio")
    if rate != CANONICAL_RATE:
        mono = resample(mono, rate, CANONICAL_RATE)
        mono = np.clip(mono, -1.0, 1.0)
    return AudioBuffer(samples=mono, sample_rate=CANONICAL_RATE)


def write_wav(path: str | Path, buf: AudioBuffer) -> None:
    """Write a buffer as 16-bit PCM WAV (used by the corpus generator)."""
    pcm = np.clip(np.round(buf.samples * 32767.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, buf.sample_rate,
                                    buf.sample_rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(data))
    Path(path).write_bytes(header + data)
