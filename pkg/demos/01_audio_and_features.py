"""
Audio ingest and the front-end feature stack
============================================

Synthesizes one utterance, round-trips it through a WAV file, and walks
the feature extractors every later stage builds on: frames, log-mel,
MFCC, and the 97-dim spectral-shape vector used for liveness checks.
"""

import tempfile
from pathlib import Path

import numpy as np

from voiceauth.audio import frame_signal, read_audio, write_wav
from voiceauth.corpus import make_speakers, synth_utterance
from voiceauth.features import (VOID_GROUP_SLICES, log_mel, mfcc,
                                void_features)

# one synthetic speaker, one two-second command
profile = make_speakers(3, seed=0)[0]
rng = np.random.default_rng(0)
buf = synth_utterance(profile, rng, duration_s=2.0)
print(f"synthesized {buf.duration:.2f} s at {buf.sample_rate} Hz, "
      f"peak {np.max(np.abs(buf.samples)):.2f}")

# everything downstream reads the canonical on-disk form: 16 kHz mono WAV
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "command.wav"
    write_wav(path, buf)
    loaded = read_audio(path)
    print(f"WAV round trip: {len(loaded.samples)} samples, max abs error "
          f"{np.max(np.abs(loaded.samples - buf.samples)):.2e}")

# 2048-sample frames hopped by 256: the grid all features share
frames = frame_signal(loaded, 2048, 256)
print(f"frames: {frames.n_frames} x {frames.frame_len}")

# log-mel spectrogram: 80 bands, natural log, floor-clamped
lm = log_mel(loaded)
print(f"log-mel: {lm.values.shape}, range [{lm.values.min():.1f}, "
      f"{lm.values.max():.1f}] nats")

# MFCC: orthonormal DCT of each log-mel row, first 13 coefficients
coeffs = mfcc(loaded)
print(f"mfcc: {coeffs.values.shape}, c0 mean {coeffs.values[:, 0].mean():.2f}")

# the liveness feature vector: fixed 97-dim layout, grouped
v = void_features(loaded)
for name, sl in VOID_GROUP_SLICES.items():
    print(f"  void[{sl.start:2d}:{sl.stop:2d}] {name:10s} "
          f"first values {np.round(v[sl][:3], 3)}")
