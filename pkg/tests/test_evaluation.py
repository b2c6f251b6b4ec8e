"""Detection metrics, cross-validation, ZEBRA, WER/RTF, probes, benchmarks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reference_impls import full_matrix_edit_distance, oracle_roc

from voiceauth.evaluation import (EvalReport, attribute_probe,
                                  benchmark_latency, calibrate_llrs,
                                  classification_metrics, kfold, levenshtein,
                                  roc_eer_auc, rtf, transcripts_report, wer,
                                  write_roc_points, zebra)
from voiceauth.exceptions import VoiceAuthError


def test_roc_perfect_separation():
    r = roc_eer_auc([0.9, 0.8], [0.1, 0.2])
    assert r.eer == 0.0
    assert r.auc == 1.0
    assert r.eer_threshold == 0.5


def test_roc_identical_multisets():
    r = roc_eer_auc([0.3, 0.7], [0.3, 0.7])
    assert r.eer == 0.5
    assert r.auc == 0.5


def test_roc_empty_is_error():
    with pytest.raises(VoiceAuthError):
        roc_eer_auc([], [0.1])


def test_roc_matches_oracle_on_random_sets():
    rng = np.random.default_rng(0)
    for trial in range(60):
        n_pos = int(rng.integers(1, 80))
        n_neg = int(rng.integers(1, 80))
        # round to force ties across the two sets
        pos = np.round(rng.normal(0.4, 1.0, n_pos), 1)
        neg = np.round(rng.normal(0.0, 1.0, n_neg), 1)
        r = roc_eer_auc(pos, neg)
        eer, thr, auc = oracle_roc(pos, neg)
        assert r.eer == eer
        assert r.eer_threshold == thr
        assert r.auc == auc


def test_roc_monotone_operating_points():
    rng = np.random.default_rng(1)
    r = roc_eer_auc(rng.normal(1, 1, 50), rng.normal(0, 1, 50))
    assert np.all(np.diff(r.far) <= 0)
    assert np.all(np.diff(r.frr) >= 0)
    assert 0.0 <= r.eer <= 1.0
    assert 0.0 <= r.auc <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=1, max_size=30),
       st.lists(st.integers(-50, 50), min_size=1, max_size=30),
       st.sampled_from([lambda x: 2 * x + 1, lambda x: x / 3 - 7,
                        lambda x: x ** 3]))
def test_auc_eer_invariant_to_monotone_transform(pos, neg, fn):
    # integer scores keep the transforms exactly strictly monotone in floats
    base = roc_eer_auc(pos, neg)
    mapped = roc_eer_auc([fn(p) for p in pos], [fn(n) for n in neg])
    assert mapped.auc == pytest.approx(base.auc, abs=1e-12)
    assert mapped.eer == pytest.approx(base.eer, abs=1e-12)


def test_classification_all_correct():
    m = classification_metrics([1, 0, 1], [1, 0, 1])
    assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)
    assert not m.degenerate


def test_classification_all_positive_on_balanced():
    m = classification_metrics([1, 1, 1, 1], [1, 1, 0, 0])
    assert m.accuracy == 0.5
    assert m.recall == 1.0
    assert m.precision == 0.5
    assert m.f1 == pytest.approx(2 / 3)


def test_classification_no_positive_predictions_flagged():
    m = classification_metrics([0, 0], [1, 0])
    assert m.precision == 0.0
    assert m.degenerate


def test_classification_length_mismatch():
    with pytest.raises(VoiceAuthError):
        classification_metrics([1], [1, 0])


def test_kfold_trivially_separable():
    X = np.vstack([np.zeros((10, 2)), np.ones((10, 2))])
    y = np.array([0] * 10 + [1] * 10)

    def trainer(tx, ty):
        return lambda samples: (samples[:, 0] > 0.5).astype(int)

    s = kfold(X, y, 5, trainer, seed=0)
    assert s.means["accuracy"] == 1.0
    assert s.stds["accuracy"] == 0.0


def test_kfold_deterministic_assignment():
    from voiceauth.evaluation import stratified_folds
    labels = np.array([0, 1] * 15)
    a = stratified_folds(labels, 5, seed=3)
    b = stratified_folds(labels, 5, seed=3)
    c = stratified_folds(labels, 5, seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert any(not np.array_equal(x, y) for x, y in zip(a, c))


def test_kfold_leave_one_out_matches_oracle():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(10, 2))
    X[:5] += 2.0
    y = np.array([1] * 5 + [0] * 5)

    def trainer(tx, ty):
        mean1 = tx[ty == 1].mean(axis=0)
        mean0 = tx[ty == 0].mean(axis=0)
        return lambda s: (np.linalg.norm(s - mean1, axis=1)
                          < np.linalg.norm(s - mean0, axis=1)).astype(int)

    s = kfold(X, y, 10, trainer, seed=0)
    # direct LOO: each point predicted from the other nine
    correct = 0
    for i in range(10):
        keep = [j for j in range(10) if j != i]
        model = trainer(X[keep], y[keep])
        correct += int(model(X[i:i + 1])[0] == y[i])
    assert s.means["accuracy"] == pytest.approx(correct / 10)


def test_kfold_class_missing_error():
    X = np.zeros((4, 1))
    y = np.array([0, 0, 0, 1])
    with pytest.raises(VoiceAuthError):
        kfold(X, y, 4, lambda tx, ty: (lambda s: np.zeros(len(s))), seed=0)


def test_zebra_zero_evidence_fixed_point():
    z = zebra([0.0, 0.0, 0.0], [0.0, 0.0])
    assert z.d_ece == 0.0
    assert z.worst_llr == 0.0
    assert z.tag == "A"


def test_zebra_worst_case_is_max_abs():
    z = zebra([2.5, 0.0], [0.0, -1.0])
    assert z.worst_llr == 2.5


def test_zebra_tags_step_at_decades():
    import math
    for log10_l, tag in [(0.5, "B"), (1.5, "C"), (2.5, "D"), (3.5, "E"),
                         (4.5, "F")]:
        z = zebra([log10_l * math.log(10)], [0.0])
        assert z.tag == tag


def test_zebra_empty_error():
    with pytest.raises(VoiceAuthError):
        zebra([], [0.0])


def test_calibrated_llrs_weak_scores_small():
    rng = np.random.default_rng(6)
    mated = rng.normal(0.02, 0.1, 200)
    nonmated = rng.normal(0.0, 0.1, 200)
    m, n = calibrate_llrs(mated, nonmated)
    assert np.max(np.abs(np.concatenate([m, n]))) < 2.0


def test_wer_identical():
    assert wer("a b c", "a b c") == 0.0


def test_wer_empty_hypothesis():
    assert wer("a b c d e", "") == 1.0


def test_wer_single_substitution():
    assert wer("a b c", "a x c") == pytest.approx(1 / 3)


def test_wer_empty_reference_error():
    with pytest.raises(VoiceAuthError):
        wer("", "a")


def test_wer_matches_full_matrix_dp():
    rng = np.random.default_rng(7)
    vocab = ["alpha", "beta", "gamma", "delta", "eps"]
    for _ in range(50):
        ref = [vocab[i] for i in rng.integers(0, 5, rng.integers(1, 12))]
        hyp = [vocab[i] for i in rng.integers(0, 5, rng.integers(0, 12))]
        assert wer(ref, hyp) == full_matrix_edit_distance(ref, hyp) / len(ref)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from("abc"), max_size=8),
       st.lists(st.sampled_from("abc"), max_size=8),
       st.lists(st.sampled_from("abc"), max_size=8))
def test_levenshtein_triangle_inequality(a, b, c):
    assert levenshtein(a, b) <= levenshtein(a, c) + levenshtein(c, b)


def test_rtf():
    assert rtf(0.5, 1.0) == 0.5
    assert rtf(2.0, 2.0) == 1.0
    with pytest.raises(VoiceAuthError):
        rtf(1.0, 0.0)


def test_transcripts_report_shape(tmp_path):
    (tmp_path / "ref.txt").write_text("set an alarm\ncall home\n")
    (tmp_path / "hyp_raw.txt").write_text("set an alarm\ncall home\n")
    (tmp_path / "hyp_priv.txt").write_text("set the alarm\ncall home\n")
    cases = [
        {"condition": "raw", "service": "local", "ref_path": str(tmp_path / "ref.txt"),
         "hyp_path": str(tmp_path / "hyp_raw.txt"), "processing_seconds": 2.2,
         "audio_seconds": 1.0},
        {"condition": "private", "service": "local", "ref_path": str(tmp_path / "ref.txt"),
         "hyp_path": str(tmp_path / "hyp_priv.txt"), "processing_seconds": 2.06,
         "audio_seconds": 1.0},
    ]
    report = transcripts_report(cases)
    assert report.columns == ["condition", "service", "wer", "rtf"]
    assert report.rows[0] == ["raw", "local", "0.0000", "2.2"]
    assert report.rows[1][0] == "private"
    assert float(report.rows[1][2]) == pytest.approx(1 / 5)


def test_attribute_probe_random_labels_near_chance():
    rng = np.random.default_rng(8)
    raw = rng.normal(size=(100, 6))
    priv = rng.normal(size=(100, 6))
    labels = list(rng.integers(0, 4, size=100))
    res = attribute_probe(raw, priv, labels, seed=0)
    assert res.chance == 0.25
    assert abs(res.accuracy_raw - 0.25) <= 0.15
    assert abs(res.accuracy_private - 0.25) <= 0.15


def test_attribute_probe_informative_raw():
    rng = np.random.default_rng(9)
    labels = np.repeat(np.arange(4), 25)
    raw = rng.normal(size=(100, 4)) + np.eye(4)[labels] * 4.0
    priv = rng.normal(size=(100, 4))
    res = attribute_probe(raw, priv, list(labels), seed=0)
    assert res.accuracy_raw >= 0.9
    assert res.accuracy_private <= 0.5


def test_report_writers(tmp_path):
    report = EvalReport(name="t", columns=["a", "b"], rows=[[1, 2], [3, 4]],
                        metadata={"seed": 0})
    report.to_csv(tmp_path / "r.csv")
    report.to_json(tmp_path / "r.json")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "a,b"
    import json
    payload = json.loads((tmp_path / "r.json").read_text())
    assert payload["rows"] == [[1, 2], [3, 4]]


def test_roc_points_dump(tmp_path):
    r = roc_eer_auc([0.8, 0.9], [0.1, 0.2])
    write_roc_points(r, tmp_path / "det.csv")
    lines = (tmp_path / "det.csv").read_text().splitlines()
    assert lines[0] == "threshold,FAR,FRR"
    assert len(lines) == len(r.thresholds) + 1


def test_benchmark_latency_schema(trained, corpus_split):
    from voiceauth.antispoof import spectral_statistics
    from voiceauth.features import mfcc, void_features
    from voiceauth.identity import embed
    from voiceauth.privacy import quantize_stream, segment_units

    _, heldout = corpus_split
    buffers = [heldout["spk00"][0].buffer, heldout["spk01"][0].buffer]
    stages = {
        "SV": {"extraction": lambda b: mfcc(b),
               "testing": lambda b: embed(trained.embedder, b)},
        "SD": {"extraction": spectral_statistics,
               "testing": lambda b: trained.spoof_scorer.decision_value(
                   spectral_statistics(b))},
        "LA": {"extraction": void_features,
               "testing": lambda b: trained.liveness_scorer.decision_value(
                   void_features(b))},
        "PP": {"extraction": lambda b: mfcc(b),
               "testing": lambda b: segment_units(
                   quantize_stream(b, trained.codebook))},
    }
    report = benchmark_latency(stages, buffers, repeats=1)
    modules = {row[0] for row in report.rows}
    assert modules == {"SV", "SD", "LA", "PP"}
    phases = {row[1] for row in report.rows}
    assert phases == {"extraction", "testing"}
    assert all(row[2] >= 0 for row in report.rows)
    assert report.metadata["peak_alloc_bytes"] > 0
