"""Front-end acoustic features: log-mel spectrogram, MFCC, LPCC, and the
97-dimensional spectral-shape vector used for replay/liveness detection.

All features are computed from 2048-sample frames hopped by 256 at 16 kHz,
with a periodic Hann window. Silence is an error, not a NaN: an
authentication pipeline must fail loudly on degenerate input.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .audio import AudioBuffer, FrameMatrix, frame_signal
from .exceptions import NumericalError, ZeroEnergyError

FFT_SIZE = 2048
HOP_SIZE = 256
N_MELS = 80
MEL_LOW_HZ = 0.0
MEL_HIGH_HZ = 8000.0
LOG_FLOOR = 1e-10
N_MFCC = 13

# Layout of the 97-dim replay/liveness vector. group1: cumulative power over
# 47 equal sub-bands below ~3.9 kHz; group2: linearity of that curve
# (correlation + quadratic residual); group3: peak statistics above 3.9 kHz
# (32-bin location histogram + count/mean/std/max of magnitudes); group4:
# 12 LPCC of the frame-averaged signal.
VOID_DIM = 97
VOID_GROUP_SLICES = {
    "low_power": slice(0, 47),
    "linearity": slice(47, 49),
    "high_peaks": slice(49, 85),
    "lpcc": slice(85, 97),
}
_LOW_BAND_BINS = 500      # bins below 3906.25 Hz at fs=16k, nfft=2048
_N_SUBBANDS = 47
_PEAK_HIST_BINS = 32
_VOID_LPC_ORDER = 12


@dataclass
class LogMelMatrix:
    """T x 80 log-power mel spectrogram."""

    values: np.ndarray
    mel_lo: float = MEL_LOW_HZ
    mel_hi: float = MEL_HIGH_HZ


@dataclass
class MfccMatrix:
    """T x C cepstral matrix (orthonormal DCT-II of the log-mel rows)."""

    values: np.ndarray


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = FFT_SIZE,
                   sample_rate: int = 16000, lo_hz: float = MEL_LOW_HZ,
                   hi_hz: float = MEL_HIGH_HZ) -> np.ndarray:
    """Triangular filters on a mel-spaced grid, shape (n_mels, n_fft//2+1)."""
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(lo_hz), hz_to_mel(hi_hz),
                                     n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    lower = edges_hz[:-2][:, None]
    center = edges_hz[1:-1][:, None]
    upper = edges_hz[2:][:, None]
    rising = (bin_hz[None, :] - lower) / (center - lower)
    falling = (upper - bin_hz[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def power_frames(buf: AudioBuffer, frame_len: int = FFT_SIZE,
                 hop: int = HOP_SIZE) -> np.ndarray:
    """Per-frame power spectrum |DFT|^2, shape (T, frame_len//2+1)."""
    fm = frame_signal(buf, frame_len, hop, window="hann")
    return np.abs(np.fft.rfft(fm.frames, axis=1)) ** 2


def log_mel(buf: AudioBuffer) -> LogMelMatrix:
    """Log-power mel spectrogram (80 bins, 0-8 kHz, natural log).

    Energies are clamped at 1e-10 before the log, so digital silence maps
    to a constant log(1e-10) floor rather than -inf.
    """
    power = power_frames(buf)
    energies = power @ mel_filterbank().T
    return LogMelMatrix(values=np.log(np.maximum(energies, LOG_FLOOR)))


def mfcc(buf: AudioBuffer, n_coeffs: int = N_MFCC) -> MfccMatrix:
    """Mel-frequency cepstral coefficients (orthonormal DCT-II, coeffs 0..C-1)."""
    if n_coeffs > N_MELS:
        raise ValueError(f"n_coeffs must be <= {N_MELS}")
    lm = log_mel(buf)
    coeffs = dct(lm.values, type=2, norm="ortho", axis=1)[:, :n_coeffs]
    return MfccMatrix(values=coeffs)


def _autocorrelation(frame: np.ndarray, max_lag: int) -> np.ndarray:
    x = np.asarray(frame, dtype=np.float64)
    return np.array([np.dot(x[: len(x) - k], x[k:]) for k in range(max_lag + 1)])


def _levinson(r: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Levinson-Durbin recursion for the predictor x^[n] = sum a_j x[n-j].

    Returns (a[1..p], reflection coefficients k[1..p], final error power).
    """
    if r[0] <= 0.0:
        raise ZeroEnergyError("zero-energy frame: autocorrelation r[0] <= 0")
    a = np.zeros(order)
    refl = np.zeros(order)
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] - np.dot(a[: i - 1], r[i - 1:0:-1])
        k = acc / err
        refl[i - 1] = k
        new_a = a.copy()
        new_a[i - 1] = k
        new_a[: i - 1] = a[: i - 1] - k * a[: i - 1][::-1]
        a = new_a
        err *= 1.0 - k * k
        if err <= 0.0 or not np.isfinite(err):
            raise NumericalError(
                f"singular Levinson-Durbin recursion at order {i}")
    return a, refl, err


def _lpc_to_cepstrum(a: np.ndarray, n_out: int) -> np.ndarray:
    """Standard LPC-to-cepstrum recursion for the all-pole model 1/A(z)."""
    p = len(a)
    c = np.zeros(n_out + 1)
    for n in range(1, n_out + 1):
        acc = a[n - 1] if n <= p else 0.0
        for k in range(1, n):
            if n - k <= p:
                acc += (k / n) * c[k] * a[n - k - 1]
        c[n] = acc
    return c[1:]


def lpcc(frame: np.ndarray, order: int = _VOID_LPC_ORDER) -> np.ndarray:
    """Linear-prediction cepstral coefficients of one windowed frame.

    Autocorrelation method -> Levinson-Durbin LPC of the given order ->
    cepstrum recursion; returns `order` coefficients c[1..order].
    Raises ZeroEnergyError on silent frames and NumericalError if the
    recursion goes singular.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if order >= len(frame):
        raise ValueError("order must be smaller than the frame length")
    r = _autocorrelation(frame, order)
    a, _, _ = _levinson(r, order)
    return _lpc_to_cepstrum(a, order)


def levinson_error_powers(frame: np.ndarray, max_order: int) -> np.ndarray:
    """Prediction-error power after each order 1..max_order (diagnostic)."""
    r = _autocorrelation(np.asarray(frame, dtype=np.float64), max_order)
    if r[0] <= 0.0:
        raise ZeroEnergyError("zero-energy frame")
    errs = np.empty(max_order)
    a = np.zeros(max_order)
    err = r[0]
    for i in range(1, max_order + 1):
        acc = r[i] - np.dot(a[: i - 1], r[i - 1:0:-1])
        k = acc / err
        new_a = a.copy()
        new_a[i - 1] = k
        new_a[: i - 1] = a[: i - 1] - k * a[: i - 1][::-1]
        a = new_a
        err *= 1.0 - k * k
        errs[i - 1] = err
    return errs


def reflection_coefficients(frame: np.ndarray, order: int) -> np.ndarray:
    r = _autocorrelation(np.asarray(frame, dtype=np.float64), order)
    _, refl, _ = _levinson(r, order)
    return refl


def _subband_edges(n_bins: int, n_bands: int) -> np.ndarray:
    return np.floor(np.arange(n_bands + 1) * n_bins / n_bands).astype(int)


def void_features(buf: AudioBuffer) -> np.ndarray:
    """97-dim spectral-shape vector for replay/liveness scoring.

    Computed from the mean power spectrum over all frames of the utterance.
    Index layout is fixed (see VOID_GROUP_SLICES): [0,47) cumulative
    low-band power, [47,49) power-linearity degree, [49,85) high-band peak
    statistics, [85,97) LPCC of the frame-averaged autocorrelation.
    """
    power = power_frames(buf)
    mean_power = power.mean(axis=0)
    total = mean_power.sum()
    if total <= 0.0:
        raise ZeroEnergyError("silent signal: mean power spectrum is zero")
    spec = mean_power / total

    # group 1: cumulative normalized power across 47 equal sub-bands < 3.9 kHz
    edges = _subband_edges(_LOW_BAND_BINS, _N_SUBBANDS)
    band_power = np.array([spec[edges[i]:edges[i + 1]].sum()
                           for i in range(_N_SUBBANDS)])
    low_total = band_power.sum()
    if low_total > 0.0:
        cumulative = np.cumsum(band_power / low_total)
    else:
        cumulative = np.zeros(_N_SUBBANDS)

    # group 2: how close the cumulative curve is to a straight line
    ramp = np.arange(_N_SUBBANDS, dtype=np.float64)
    if np.std(cumulative) > 0.0:
        corr = float(np.corrcoef(cumulative, ramp)[0, 1])
    else:
        corr = 0.0
    quad = np.polynomial.polynomial.polyfit(ramp, cumulative, 2)
    residual = float(np.linalg.norm(
        cumulative - np.polynomial.polynomial.polyval(ramp, quad)))

    # group 3: peak statistics above 3.9 kHz
    high = spec[_LOW_BAND_BINS:]
    interior = high[1:-1]
    is_peak = (interior > high[:-2]) & (interior > high[2:])
    peak_pos = np.flatnonzero(is_peak) + 1
    peak_mag = high[peak_pos]
    hist = np.zeros(_PEAK_HIST_BINS)
    if peak_pos.size > 0:
        hist_counts, _ = np.histogram(peak_pos, bins=_PEAK_HIST_BINS,
                                      range=(0, len(high)))
        hist = hist_counts / peak_pos.size
        mag_stats = [float(peak_pos.size), float(peak_mag.mean()),
                     float(peak_mag.std()), float(peak_mag.max())]
    else:
        mag_stats = [0.0, 0.0, 0.0, 0.0]

    # group 4: LPCC of the average frame autocorrelation
    fm: FrameMatrix = frame_signal(buf, FFT_SIZE, HOP_SIZE, window="hann")
    lags = np.array([
        np.einsum("ij,ij->", fm.frames[:, : FFT_SIZE - k], fm.frames[:, k:])
        for k in range(_VOID_LPC_ORDER + 1)
    ]) / fm.n_frames
    a, _, _ = _levinson(lags, _VOID_LPC_ORDER)
    cep = _lpc_to_cepstrum(a, _VOID_LPC_ORDER)

    out = np.concatenate([cumulative, [corr, residual], hist, mag_stats, cep])
    assert out.shape == (VOID_DIM,)
    return out


def export_features_csv(values: np.ndarray, path: str | Path,
                        header: list[str] | None = None) -> None:
    """Dump a feature matrix as CSV, one row per frame, for external checks."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    lines = []
    if header is not None:
        if len(header) != values.shape[1]:
            raise ValueError("header length does not match feature dimension")
        lines.append(",".join(header))
    for row in values:
        lines.append(",".join(f"{v:.10g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
