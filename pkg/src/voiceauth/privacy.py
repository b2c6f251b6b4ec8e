"""Paralinguistic privacy filter: quantize frames against a learned codebook,
segment the discrete stream into word-like spans, and package the payload
that actually leaves the device.

The discrete representation keeps the linguistic skeleton of an utterance
(which sound occurs when) while shedding the continuous spectral detail
that carries speaker-specific traits. The payload contains codebook
indices and segment boundaries only: no samples, no spectra, no embeddings.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio import AudioBuffer
from .credentials import (CredentialKeyPair, b64url, b64url_decode,
                          canonical_json, sign_payload, verify_signature)
from .exceptions import DimensionMismatchError, VoiceAuthError
from .features import HOP_SIZE, mfcc

DEFAULT_K = 50
DEFAULT_MIN_SEGMENT_FRAMES = 2
_PAYLOAD_VERSION = 1
_BINARY_MAGIC = b"VAPP"


@dataclass
class Codebook:
    """k centroids in MFCC space with the training provenance."""

    centroids: np.ndarray
    codebook_id: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 2:
            raise VoiceAuthError("codebook needs at least 2 centroids")
        if not np.all(np.isfinite(self.centroids)):
            raise VoiceAuthError("codebook centroids must be finite")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass
class DiscreteUnitStream:
    """Per-frame codebook indices with optional word-like segmentation."""

    units: np.ndarray
    hop: int
    sample_rate: int
    k: int
    segments: list[tuple[int, int]] | None = None

    def __post_init__(self):
        self.units = np.asarray(self.units, dtype=np.int64)
        if np.any(self.units < 0) or np.any(self.units >= self.k):
            raise VoiceAuthError("unit indices must lie in [0, k)")
        if self.segments is not None:
            _check_tiling(self.segments, len(self.units))


def _check_tiling(segments: list[tuple[int, int]], n: int) -> None:
    expected = 0
    for start, end in segments:
        if start != expected or end <= start:
            raise VoiceAuthError("segments must tile the stream without gaps")
        expected = end
    if expected != n:
        raise VoiceAuthError("segments must cover the whole stream")


def _sq_distances(frames: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, (n, k), clipped at zero."""
    d2 = (np.sum(frames ** 2, axis=1)[:, None]
          - 2.0 * frames @ centroids.T
          + np.sum(centroids ** 2, axis=1)[None, :])
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(frames: np.ndarray, k: int, rng) -> np.ndarray:
    first = frames[rng.integers(len(frames))]
    centroids = [first]
    d2 = np.sum((frames - first) ** 2, axis=1)
    for _ in range(k - 1):
        total = d2.sum()
        if total <= 0:
            nxt = frames[rng.integers(len(frames))]
        else:
            nxt = frames[rng.choice(len(frames), p=d2 / total)]
        centroids.append(nxt)
        d2 = np.minimum(d2, np.sum((frames - nxt) ** 2, axis=1))
    return np.stack(centroids)


def train_codebook(frames: np.ndarray, k: int = DEFAULT_K, iters: int = 30,
                   seed: int = 0, codebook_id: str | None = None) -> Codebook:
    """k-means over pooled MFCC frames (k-means++ init, fixed iteration cap).

    Deterministic for a fixed seed. Clusters that empty out are re-seeded
    from the points currently farthest from their assigned centroid.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise VoiceAuthError("frames must be a 2-D matrix")
    if len(np.unique(frames, axis=0)) < k:
        raise VoiceAuthError(f"need at least k={k} distinct frames")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(frames, k, rng)
    for _ in range(iters):
        d2 = _sq_distances(frames, centroids)
        assign = np.argmin(d2, axis=1)
        nearest = d2[np.arange(len(frames)), assign]
        new_centroids = centroids.copy()
        for c in range(k):
            members = frames[assign == c]
            if len(members) > 0:
                new_centroids[c] = members.mean(axis=0)
            else:
                new_centroids[c] = frames[int(np.argmax(nearest))]
                nearest[int(np.argmax(nearest))] = 0.0
        if np.allclose(new_centroids, centroids):
            centroids = new_centroids
            break
        centroids = new_centroids
    cb_id = codebook_id or f"mfcc{frames.shape[1]}-k{k}-seed{seed}"
    return Codebook(centroids=centroids, codebook_id=cb_id,
                    metadata={"seed": seed, "iters": iters,
                              "n_frames": len(frames)})


def quantize_frames(frames: np.ndarray, cb: Codebook) -> np.ndarray:
    """Nearest-centroid index per frame row; ties break to the lowest index.

    argmin over exact per-pair squared distances (not the expanded matmul
    form, whose rounding could flip a tie).
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[1] != cb.dim:
        raise DimensionMismatchError(
            f"codebook expects dim {cb.dim}, got {frames.shape[1]}")
    units = np.empty(len(frames), dtype=np.int64)
    for start in range(0, len(frames), 2048):
        block = frames[start:start + 2048]
        d2 = ((block[:, None, :] - cb.centroids[None, :, :]) ** 2).sum(-1)
        units[start:start + len(block)] = np.argmin(d2, axis=1)
    return units


def cluster_features(buf: AudioBuffer, dim: int) -> np.ndarray:
    """Per-frame codebook-space features: mean-normalized MFCC.

    The per-utterance cepstral mean is subtracted before lookup. Stationary
    speaker coloration (tilt, timbre, channel) is an additive constant in
    the log-cepstral domain, so without this step it would bias cluster
    assignment rates and leak identity straight into unit histograms.
    """
    values = mfcc(buf, dim).values
    return values - values.mean(axis=0)


def quantize_stream(buf: AudioBuffer, cb: Codebook) -> DiscreteUnitStream:
    """Discretize a buffer: one codebook index per normalized MFCC frame."""
    units = quantize_frames(cluster_features(buf, cb.dim), cb)
    return DiscreteUnitStream(units=units, hop=HOP_SIZE,
                              sample_rate=buf.sample_rate, k=cb.k)


def segment_units(stream: DiscreteUnitStream,
                  min_dur: int = DEFAULT_MIN_SEGMENT_FRAMES) -> DiscreteUnitStream:
    """Segment at unit change points, then absorb sub-minimum spans.

    A boundary falls wherever consecutive indices differ. Spans shorter
    than `min_dur` are then merged away, shortest-neighbor-rule: among the
    short spans, the one with the longest neighbor goes first (leftmost on
    ties) and is absorbed into its longer neighbor (left neighbor on ties).
    """
    units = stream.units
    if len(units) == 0:
        raise VoiceAuthError("cannot segment an empty stream")
    boundaries = np.flatnonzero(np.diff(units) != 0) + 1
    segments = []
    start = 0
    for b in list(boundaries) + [len(units)]:
        segments.append((start, int(b)))
        start = int(b)

    def length(seg):
        return seg[1] - seg[0]

    while len(segments) > 1:
        short = [i for i, s in enumerate(segments) if length(s) < min_dur]
        if not short:
            break

        def neighbor_len(i):
            best = 0
            if i > 0:
                best = max(best, length(segments[i - 1]))
            if i < len(segments) - 1:
                best = max(best, length(segments[i + 1]))
            return best

        idx = max(short, key=lambda i: (neighbor_len(i), -i))
        left_len = length(segments[idx - 1]) if idx > 0 else -1
        right_len = length(segments[idx + 1]) if idx < len(segments) - 1 else -1
        if left_len >= right_len:
            merged = (segments[idx - 1][0], segments[idx][1])
            segments[idx - 1:idx + 1] = [merged]
        else:
            merged = (segments[idx][0], segments[idx + 1][1])
            segments[idx:idx + 2] = [merged]
    return replace(stream, segments=segments)


@dataclass
class PrivatePayload:
    """The only thing that leaves the device: units, segments, metadata."""

    version: int
    codebook_id: str
    hop: int
    rate: int
    k: int
    units: list[int]
    segments: list[tuple[int, int]]
    signature: bytes | None = None

    def body_dict(self) -> dict:
        return {"version": self.version, "codebook_id": self.codebook_id,
                "hop": self.hop, "rate": self.rate, "k": self.k,
                "units": list(map(int, self.units)),
                "segments": [[int(a), int(b)] for a, b in self.segments]}

    def signing_bytes(self) -> bytes:
        return canonical_json(self.body_dict())


def build_payload(stream: DiscreteUnitStream, codebook_id: str,
                  signer: CredentialKeyPair | None = None) -> PrivatePayload:
    """Package a segmented stream; optionally sign its canonical bytes."""
    if stream.segments is None:
        raise VoiceAuthError("segment the stream before building a payload")
    payload = PrivatePayload(version=_PAYLOAD_VERSION, codebook_id=codebook_id,
                             hop=stream.hop, rate=stream.sample_rate,
                             k=stream.k, units=stream.units.tolist(),
                             segments=list(stream.segments))
    if signer is not None:
        payload.signature = sign_payload(signer, payload.signing_bytes()).signature
    return payload


def verify_payload(payload: PrivatePayload, public_key: bytes) -> bool:
    """Relying-party check of a signed payload."""
    if payload.signature is None:
        return False
    return verify_signature(public_key, payload.signing_bytes(), None,
                            payload.signature)


# -- wire formats -----------------------------------------------------------

def payload_to_json(payload: PrivatePayload) -> str:
    body = payload.body_dict()
    if payload.signature is not None:
        body["sig"] = b64url(payload.signature)
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def payload_from_json(text: str) -> PrivatePayload:
    body = json.loads(text)
    sig = b64url_decode(body["sig"]) if "sig" in body else None
    return PrivatePayload(version=body["version"],
                          codebook_id=body["codebook_id"], hop=body["hop"],
                          rate=body["rate"], k=body["k"], units=body["units"],
                          segments=[tuple(s) for s in body["segments"]],
                          signature=sig)


def _write_varint(value: int, out: bytearray) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    value = 0
    shift = 0
    while True:
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7


def _pack_units(units: list[int], k: int) -> bytes:
    """Base-k big-integer packing: ceil(n*log2(k)) bits for n units."""
    acc = 0
    for u in reversed(units):
        acc = acc * k + u
    n_bytes = max(1, (acc.bit_length() + 7) // 8)
    return acc.to_bytes(n_bytes, "little")


def _unpack_units(blob: bytes, k: int, count: int) -> list[int]:
    acc = int.from_bytes(blob, "little")
    units = []
    for _ in range(count):
        acc, u = divmod(acc, k)
        units.append(u)
    return units


def payload_to_binary(payload: PrivatePayload) -> bytes:
    """Compact form: varint-framed header/segments, base-k packed units."""
    out = bytearray(_BINARY_MAGIC)
    cb = payload.codebook_id.encode()
    for value in (payload.version, payload.hop, payload.rate, payload.k,
                  len(cb)):
        _write_varint(value, out)
    out.extend(cb)
    _write_varint(len(payload.units), out)
    blob = _pack_units(payload.units, payload.k)
    _write_varint(len(blob), out)
    out.extend(blob)
    _write_varint(len(payload.segments), out)
    prev = 0
    for start, end in payload.segments:
        _write_varint(start - prev, out)
        _write_varint(end - start, out)
        prev = end
    sig = payload.signature or b""
    _write_varint(len(sig), out)
    out.extend(sig)
    return bytes(out)


def payload_from_binary(data: bytes) -> PrivatePayload:
    if data[:4] != _BINARY_MAGIC:
        raise VoiceAuthError("not a binary payload")
    pos = 4
    version, pos = _read_varint(data, pos)
    hop, pos = _read_varint(data, pos)
    rate, pos = _read_varint(data, pos)
    k, pos = _read_varint(data, pos)
    cb_len, pos = _read_varint(data, pos)
    codebook_id = data[pos:pos + cb_len].decode()
    pos += cb_len
    n_units, pos = _read_varint(data, pos)
    blob_len, pos = _read_varint(data, pos)
    units = _unpack_units(data[pos:pos + blob_len], k, n_units)
    pos += blob_len
    n_segs, pos = _read_varint(data, pos)
    segments = []
    cursor = 0
    for _ in range(n_segs):
        gap, pos = _read_varint(data, pos)
        length, pos = _read_varint(data, pos)
        start = cursor + gap
        segments.append((start, start + length))
        cursor = start + length
    sig_len, pos = _read_varint(data, pos)
    signature = data[pos:pos + sig_len] if sig_len else None
    return PrivatePayload(version=version, codebook_id=codebook_id, hop=hop,
                          rate=rate, k=k, units=units, segments=segments,
                          signature=signature)


def unit_bits_bound(n_units: int, k: int) -> float:
    """Information bound the packed unit blob respects: n*log2(k) bits."""
    return n_units * math.log2(k)


# -- codebook persistence ----------------------------------------------------

_CODEBOOK_MAGIC = "voiceauth-codebook v1"


def save_codebook(cb: Codebook, path: str | Path) -> None:
    lines = [_CODEBOOK_MAGIC,
             f"id={cb.codebook_id} k={cb.k} dim={cb.dim}"]
    for row in cb.centroids:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_codebook(path: str | Path) -> Codebook:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _CODEBOOK_MAGIC:
        raise VoiceAuthError(f"not a codebook file: {path}")
    header = dict(kv.split("=") for kv in lines[1].split())
    centroids = np.array([[float(v) for v in line.split()]
                          for line in lines[2:2 + int(header["k"])]])
    if centroids.shape != (int(header["k"]), int(header["dim"])):
        raise VoiceAuthError("codebook file is truncated")
    return Codebook(centroids=centroids, codebook_id=header["id"])
