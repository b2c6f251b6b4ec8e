"""Spoofing and liveness scoring, plus a parametric replay-channel simulator.

The simulator manufactures the attack class at desk scale: a re-recorded
signal picks up band limiting, loudspeaker saturation, an early reflection,
and additive noise. Two linear scorers consume different feature spaces:

* liveness: the 97-dim spectral-shape vector (`features.void_features`)
* spoofing: a 24-dim space of temporal moments (mean/std/skewness) over 8
  per-frame spectral descriptors: flux, 4-band flatness, two rolloff
  points, and the centroid ("specstats24")

Positive decision values mean live / genuine. External score files can
bypass either scorer for integration with higher-fidelity models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .audio import AudioBuffer
from .exceptions import (DimensionMismatchError, NotTrainedError,
                         VoiceAuthError)
from .features import FFT_SIZE, HOP_SIZE, VOID_DIM, power_frames, void_features
from .linear import train_margin

SPECSTATS_DIM = 24
_BANDPASS_TAPS = 151
_FLATNESS_BANDS_HZ = [(0, 1000), (1000, 2000), (2000, 4000), (4000, 8000)]

FEATURE_SPACES = {"void97": VOID_DIM, "specstats24": SPECSTATS_DIM}


@dataclass
class ReplayChannel:
    """Parametric model of a playback-and-rerecord channel."""

    band_lo_hz: float = 300.0
    band_hi_hz: float = 3400.0
    snr_db: float = 25.0
    clip_drive: float = 0.0     # 0 disables the soft clipper
    echo_delay_ms: float = 0.0  # 0 disables the echo tap
    echo_gain: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.band_lo_hz < self.band_hi_hz <= 8000.0:
            raise VoiceAuthError("need 0 <= lo < hi <= 8000 Hz")
        if not math.isfinite(self.snr_db) and self.snr_db != math.inf:
            raise VoiceAuthError("SNR must be finite or +inf")


IDENTITY_CHANNEL = ReplayChannel(band_lo_hz=0.0, band_hi_hz=8000.0,
                                 snr_db=math.inf)

# Telephone-band playback: the default negative class for liveness training.
REPLAY_CHANNEL = ReplayChannel(band_lo_hz=300.0, band_hi_hz=3400.0,
                               snr_db=25.0, clip_drive=2.0,
                               echo_delay_ms=12.0, echo_gain=0.25)

# Narrowband resynthesis artifacts: the negative class for spoof training.
SYNTH_CHANNEL = ReplayChannel(band_lo_hz=150.0, band_hi_hz=4000.0,
                              snr_db=35.0, clip_drive=4.0)


def _bandpass_kernel(lo_hz: float, hi_hz: float, rate: int,
                     taps: int = _BANDPASS_TAPS) -> np.ndarray:
    """Hamming-windowed sinc bandpass; exactly a unit impulse for 0..Nyquist."""
    n = np.arange(taps) - (taps - 1) / 2
    f_hi = hi_hz / rate
    f_lo = lo_hz / rate
    kernel = 2 * f_hi * np.sinc(2 * f_hi * n) - 2 * f_lo * np.sinc(2 * f_lo * n)
    window = 0.54 + 0.46 * np.cos(2 * np.pi * n / (taps - 1))
    return kernel * window


def simulate_replay(buf: AudioBuffer, channel: ReplayChannel,
                    seed: int = 0) -> AudioBuffer:
    """Pass a buffer through the channel: bandpass, soft clip, echo, noise.

    Output has the same length and rate as the input and is deterministic
    for a fixed seed. The identity configuration (full band, infinite SNR,
    no clip or echo) returns the input unchanged up to float rounding.
    """
    x = buf.samples
    if channel.band_lo_hz > 0.0 or channel.band_hi_hz < buf.sample_rate / 2:
        kernel = _bandpass_kernel(channel.band_lo_hz, channel.band_hi_hz,
                                  buf.sample_rate)
        x = np.convolve(x, kernel, mode="same")
    if channel.clip_drive > 0.0:
        x = np.tanh(channel.clip_drive * x) / math.tanh(channel.clip_drive)
    if channel.echo_gain != 0.0 and channel.echo_delay_ms > 0.0:
        delay = int(round(channel.echo_delay_ms * buf.sample_rate / 1000.0))
        if 0 < delay < len(x):
            echoed = x.copy()
            echoed[delay:] += channel.echo_gain * x[:-delay]
            x = echoed
    if channel.snr_db != math.inf:
        power = float(np.mean(x ** 2))
        noise_power = power / (10.0 ** (channel.snr_db / 10.0))
        rng = np.random.default_rng(seed)
        x = x + rng.normal(scale=math.sqrt(max(noise_power, 0.0)), size=len(x))
    return AudioBuffer(samples=x, sample_rate=buf.sample_rate)


def _skewness(v: np.ndarray) -> float:
    sd = v.std()
    if sd <= 0.0:
        return 0.0
    return float(np.mean(((v - v.mean()) / sd) ** 3))


def spectral_statistics(buf: AudioBuffer) -> np.ndarray:
    """24-dim spoofing feature vector ("specstats24").

    Eight per-frame descriptors summarized by mean, std, and skewness over
    frames, in that order per descriptor.
    """
    power = power_frames(buf, FFT_SIZE, HOP_SIZE)
    mag = np.sqrt(power)
    eps = 1e-12
    bin_hz = np.arange(power.shape[1]) * (buf.sample_rate / FFT_SIZE)

    flux = np.zeros(power.shape[0])
    flux[1:] = np.linalg.norm(np.diff(mag, axis=0), axis=1)

    descriptors = [flux]
    for lo, hi in _FLATNESS_BANDS_HZ:
        band = power[:, (bin_hz >= lo) & (bin_hz < hi)]
        geo = np.exp(np.mean(np.log(band + eps), axis=1))
        descriptors.append(geo / (band.mean(axis=1) + eps))
    total = power.sum(axis=1) + eps
    cum = np.cumsum(power, axis=1) / total[:, None]
    for q in (0.85, 0.95):
        roll_idx = np.argmax(cum >= q, axis=1)
        descriptors.append(bin_hz[roll_idx] / (buf.sample_rate / 2))
    centroid = (power @ bin_hz) / total / (buf.sample_rate / 2)
    descriptors.append(centroid)

    out = []
    for d in descriptors:
        out.extend([float(d.mean()), float(d.std()), _skewness(d)])
    vec = np.array(out)
    assert vec.shape == (SPECSTATS_DIM,)
    return vec


@dataclass
class BinaryScorer:
    """Linear decision function over a named feature space."""

    kind: str                     # "linear-svm" or "logistic"
    feature_space: str
    dim: int
    weights: np.ndarray | None = None
    bias: float = 0.0
    metadata: dict = field(default_factory=dict)

    def decision_value(self, features: np.ndarray) -> float:
        if self.weights is None:
            raise NotTrainedError(f"scorer over {self.feature_space} is untrained")
        features = np.asarray(features, dtype=np.float64)
        if features.shape != (self.dim,):
            raise DimensionMismatchError(
                f"expected {self.dim}-dim {self.feature_space} features, "
                f"got shape {features.shape}")
        return float(self.weights @ features + self.bias)


def train_scorer(features: Sequence[np.ndarray], labels: Sequence[int],
                 kind: str = "linear-svm", feature_space: str = "void97",
                 hyperparams: dict | None = None, seed: int = 0) -> BinaryScorer:
    """Train a scorer on labeled vectors; label 1 = genuine/live, 0 = attack.

    Known feature-space names ("void97", "specstats24") enforce their
    dimension; any other name records the training data's dimension.
    """
    if kind not in ("linear-svm", "logistic"):
        raise VoiceAuthError(f"unknown scorer kind '{kind}'")
    X = np.stack([np.asarray(f, dtype=np.float64) for f in features])
    expected = FEATURE_SPACES.get(feature_space, X.shape[1])
    if X.shape[1] != expected:
        raise DimensionMismatchError(
            f"{feature_space} expects dim {expected}, got {X.shape[1]}")
    y = np.where(np.asarray(labels) == 1, 1.0, -1.0)
    if len(set(y.tolist())) < 2:
        raise VoiceAuthError("training data must contain both classes")
    hp = {"l2": 1e-3, "epochs": 60, "lr": 0.1}
    hp.update(hyperparams or {})
    loss = "hinge" if kind == "linear-svm" else "logloss"
    w, b = train_margin(X, y, loss=loss, mode="sgd", seed=seed, **hp)
    return BinaryScorer(kind=kind, feature_space=feature_space,
                        dim=X.shape[1], weights=w, bias=b,
                        metadata={"seed": seed, "n_train": len(y)})


def liveness_score(scorer: BinaryScorer, buf: AudioBuffer, *,
                   utterance_id: str | None = None,
                   external: Mapping[str, float] | None = None) -> float:
    """Liveness decision value (positive means live).

    If an external score table is supplied and contains the utterance id,
    its value is returned verbatim, bypassing the scorer.
    """
    if external is not None and utterance_id in external:
        return float(external[utterance_id])
    if scorer.feature_space != "void97":
        raise DimensionMismatchError("liveness scorer must use void97 features")
    return scorer.decision_value(void_features(buf))


def spoof_score(scorer: BinaryScorer, buf: AudioBuffer, *,
                utterance_id: str | None = None,
                external: Mapping[str, float] | None = None) -> float:
    """Spoofing decision value (positive means genuine)."""
    if external is not None and utterance_id in external:
        return float(external[utterance_id])
    if scorer.feature_space != "specstats24":
        raise DimensionMismatchError("spoof scorer must use specstats24 features")
    return scorer.decision_value(spectral_statistics(buf))


def load_external_scores(path: str | Path) -> dict[str, float]:
    """Read `utterance_id score` pairs, one per line."""
    out: dict[str, float] = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise VoiceAuthError(f"line {ln}: expected 'utterance_id score'")
        out[parts[0]] = float(parts[1])
    return out


_SCORER_MAGIC = "voiceauth-scorer v1"


def save_scorer(scorer: BinaryScorer, path: str | Path) -> None:
    if scorer.weights is None:
        raise NotTrainedError("refusing to persist an untrained scorer")
    lines = [_SCORER_MAGIC,
             f"kind={scorer.kind}",
             f"feature_space={scorer.feature_space}",
             f"dim={scorer.dim}",
             f"bias={float(scorer.bias)!r}",
             " ".join(repr(float(v)) for v in scorer.weights)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_scorer(path: str | Path) -> BinaryScorer:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _SCORER_MAGIC:
        raise VoiceAuthError(f"not a scorer file: {path}")
    header = dict(line.split("=", 1) for line in lines[1:5])
    weights = np.array([float(v) for v in lines[5].split()])
    if weights.size != int(header["dim"]):
        raise DimensionMismatchError("scorer file dimension mismatch")
    return BinaryScorer(kind=header["kind"],
                        feature_space=header["feature_space"],
                        dim=int(header["dim"]), weights=weights,
                        bias=float(header["bias"]))
