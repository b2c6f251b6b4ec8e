"""Codebook training, discretization, segmentation, and the private payload."""

import json

import numpy as np
import pytest

from voiceauth.credentials import keypair_from_seed
from voiceauth.exceptions import DimensionMismatchError, VoiceAuthError
from voiceauth.privacy import (Codebook, DiscreteUnitStream, build_payload,
                               load_codebook, payload_from_binary,
                               payload_from_json, payload_to_binary,
                               payload_to_json, quantize_frames,
                               quantize_stream, save_codebook, segment_units,
                               train_codebook, unit_bits_bound,
                               verify_payload)


def _planted_clusters(k=6, per=40, dim=5, spread=0.05, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-3, 3, size=(k, dim))
    frames = np.vstack([c + rng.normal(scale=spread, size=(per, dim))
                        for c in centers])
    return centers, frames


def test_kmeans_recovers_planted_clusters():
    centers, frames = _planted_clusters()
    cb = train_codebook(frames, k=6, seed=0)
    # each planted center has a learned centroid within the cluster radius
    for c in centers:
        nearest = np.min(np.linalg.norm(cb.centroids - c, axis=1))
        assert nearest < 0.2
    # quantization error far below the inter-cluster gap
    d2 = ((frames[:, None, :] - cb.centroids[None, :, :]) ** 2).sum(-1)
    assert np.sqrt(d2.min(axis=1)).max() < 1.0


def test_kmeans_k1_requires_k2():
    _, frames = _planted_clusters()
    with pytest.raises(VoiceAuthError):
        Codebook(centroids=frames[:1], codebook_id="x")


def test_kmeans_centroid_mean_fixed_point():
    # k=2 on two tight blobs: centroids equal the blob means
    rng = np.random.default_rng(1)
    a = rng.normal(0.0, 0.01, size=(50, 3))
    b = rng.normal(10.0, 0.01, size=(50, 3))
    cb = train_codebook(np.vstack([a, b]), k=2, iters=50, seed=1)
    means = sorted([a.mean(axis=0).sum(), b.mean(axis=0).sum()])
    got = sorted(cb.centroids.sum(axis=1).tolist())
    assert np.allclose(means, got, atol=1e-3)


def test_kmeans_deterministic():
    _, frames = _planted_clusters(seed=3)
    a = train_codebook(frames, k=5, seed=4)
    b = train_codebook(frames, k=5, seed=4)
    assert np.array_equal(a.centroids, b.centroids)


def test_kmeans_needs_k_distinct_frames():
    frames = np.zeros((10, 4))
    with pytest.raises(VoiceAuthError):
        train_codebook(frames, k=3)


def test_quantize_centroids_identity():
    centers, frames = _planted_clusters(seed=5)
    cb = train_codebook(frames, k=6, seed=5)
    idx = quantize_frames(cb.centroids, cb)
    assert idx.tolist() == list(range(6))


def test_quantize_tie_breaks_low_index():
    cb = Codebook(centroids=np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0]]),
                  codebook_id="tie")
    # (1, 0) is equidistant from centroids 0 and 1
    assert quantize_frames(np.array([[1.0, 0.0]]), cb)[0] == 0


def test_quantize_dimension_mismatch():
    cb = Codebook(centroids=np.zeros((3, 4)) + np.arange(3)[:, None],
                  codebook_id="d")
    with pytest.raises(DimensionMismatchError):
        quantize_frames(np.zeros((2, 7)), cb)


def test_stream_unit_count_matches_frames(trained, corpus_split):
    _, heldout = corpus_split
    buf = heldout["spk01"][0].buffer
    stream = quantize_stream(buf, trained.codebook)
    expected = (len(buf.samples) - 2048) // 256 + 1
    assert len(stream.units) == expected
    assert np.all(stream.units < trained.codebook.k)


def test_one_second_55_units(trained, noise_buffer):
    stream = quantize_stream(noise_buffer, trained.codebook)
    assert len(stream.units) == 55


def test_segment_change_points():
    stream = DiscreteUnitStream(units=np.array([3, 3, 3, 5, 5]), hop=256,
                                sample_rate=16000, k=8)
    out = segment_units(stream, min_dur=1)
    assert out.segments == [(0, 3), (3, 5)]


def test_segment_constant_stream():
    stream = DiscreteUnitStream(units=np.full(30, 4), hop=256,
                                sample_rate=16000, k=8)
    out = segment_units(stream)
    assert out.segments == [(0, 30)]


def test_segment_min_duration_merge():
    stream = DiscreteUnitStream(units=np.array([3, 5, 3, 3]), hop=256,
                                sample_rate=16000, k=8)
    out = segment_units(stream, min_dur=2)
    assert out.segments == [(0, 4)]


def test_segments_tile_stream(trained, corpus_split):
    _, heldout = corpus_split
    stream = segment_units(quantize_stream(heldout["spk02"][0].buffer,
                                           trained.codebook))
    assert stream.segments[0][0] == 0
    assert stream.segments[-1][1] == len(stream.units)
    for (a, b), (c, d) in zip(stream.segments, stream.segments[1:]):
        assert b == c
        assert b > a


def test_payload_requires_segments(trained, noise_buffer):
    stream = quantize_stream(noise_buffer, trained.codebook)
    with pytest.raises(VoiceAuthError):
        build_payload(stream, trained.codebook.codebook_id)


def test_payload_json_round_trip(trained, noise_buffer):
    stream = segment_units(quantize_stream(noise_buffer, trained.codebook))
    payload = build_payload(stream, trained.codebook.codebook_id)
    back = payload_from_json(payload_to_json(payload))
    assert back.units == payload.units
    assert [tuple(s) for s in back.segments] == payload.segments
    assert back.codebook_id == payload.codebook_id
    assert back.hop == 256 and back.rate == 16000


def test_payload_binary_round_trip(trained, corpus_split):
    _, heldout = corpus_split
    stream = segment_units(quantize_stream(heldout["spk03"][1].buffer,
                                           trained.codebook))
    payload = build_payload(stream, trained.codebook.codebook_id)
    blob = payload_to_binary(payload)
    back = payload_from_binary(blob)
    assert back.units == payload.units
    assert [tuple(s) for s in back.segments] == payload.segments


def test_payload_signature_round_trip(trained, noise_buffer):
    kp = keypair_from_seed(bytes(range(32)), "svc", unlocked=True)
    stream = segment_units(quantize_stream(noise_buffer, trained.codebook))
    payload = build_payload(stream, trained.codebook.codebook_id, signer=kp)
    assert verify_payload(payload, kp.public_key)
    # tamper one unit in transit
    tampered = payload_from_json(payload_to_json(payload))
    tampered.units[0] = (tampered.units[0] + 1) % trained.codebook.k
    assert not verify_payload(tampered, kp.public_key)


def test_payload_schema_has_no_biometrics(trained, noise_buffer):
    stream = segment_units(quantize_stream(noise_buffer, trained.codebook))
    payload = build_payload(stream, trained.codebook.codebook_id)
    body = json.loads(payload_to_json(payload))
    assert set(body) <= {"version", "codebook_id", "hop", "rate", "k",
                         "units", "segments", "sig"}
    assert all(isinstance(u, int) for u in body["units"])
    for field in ("samples", "audio", "embedding", "features", "mfcc"):
        assert field not in body


def test_rate_bound(trained, corpus_split):
    from voiceauth.privacy import _pack_units

    _, heldout = corpus_split
    buf = heldout["spk05"][0].buffer
    stream = segment_units(quantize_stream(buf, trained.codebook))
    payload = build_payload(stream, trained.codebook.codebook_id)
    blob = payload_to_binary(payload)
    # coded units respect the information bound (plus one byte of rounding)
    unit_blob = _pack_units(payload.units, payload.k)
    bound_bits = unit_bits_bound(len(payload.units), payload.k)
    assert len(unit_blob) * 8 <= bound_bits + 8
    # the whole payload is the unit coding plus a bounded header/segment part
    header_bits = (len(blob) - len(unit_blob)) * 8
    assert len(blob) * 8 <= bound_bits + header_bits + 8
    # and at least 100x below the raw 16-bit PCM bitrate
    raw_bits = len(buf.samples) * 16
    assert len(blob) * 8 * 100 <= raw_bits


def test_codebook_round_trip(trained, tmp_path):
    save_codebook(trained.codebook, tmp_path / "cb.txt")
    loaded = load_codebook(tmp_path / "cb.txt")
    assert loaded.codebook_id == trained.codebook.codebook_id
    assert np.array_equal(loaded.centroids, trained.codebook.centroids)


def test_stream_invariants():
    with pytest.raises(VoiceAuthError):
        DiscreteUnitStream(units=np.array([0, 9]), hop=256,
                           sample_rate=16000, k=5)
    with pytest.raises(VoiceAuthError):
        DiscreteUnitStream(units=np.array([0, 1]), hop=256, sample_rate=16000,
                           k=5, segments=[(0, 1)])  # does not tile
