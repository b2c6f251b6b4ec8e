"""Synthetic speaker corpus and end-to-end training harness.

Speakers are modeled as formant-filtered harmonic stacks: a shared
inventory of phoneme-like formant configurations, voiced at a per-speaker
pitch with a per-speaker spectral tilt and vocal-tract length factor.
Utterances are random phoneme sequences, so linguistic content is
independent of speaker identity by construction: pooled spectral
statistics separate speakers while per-frame cluster histograms should not.

The harness trains every model of the pipeline from such a corpus and
builds the fused-score dataset by cross-producting identity trials with
attack-condition trials.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .antispoof import (REPLAY_CHANNEL, SYNTH_CHANNEL, BinaryScorer,
                        simulate_replay, spectral_statistics, train_scorer)
from .audio import CANONICAL_RATE, AudioBuffer
from .corpus_phonemes import PHONEME_FORMANTS
from .evaluation import CvSummary, roc_eer_auc
from .exceptions import VoiceAuthError
from .features import N_MFCC, void_features
from .fusion import (FusionModel, Pipeline, ScoreVector, train_fusion)
from .identity import (Embedder, EnrollmentTemplate, calibrate_threshold,
                       cosine_score, embed, enroll, train_embedder)
from .privacy import Codebook, cluster_features, train_codebook

DEFAULT_SPEAKERS = 10
DEFAULT_UTTERANCES = 12
ENROLL_SAMPLES = 4
_SEGMENT_MS = (110, 200)
_SEGMENTS_PER_UTT = (20, 30)
_F0_RANGE_HZ = (138.0, 182.0)
_NOISE_FLOOR = 0.005


@dataclass
class SpeakerProfile:
    speaker_id: str
    f0_hz: float
    tilt_db_oct: float
    formant_scale: float
    band_gains_db: np.ndarray  # stationary timbre color at _TIMBRE_ANCHORS_HZ


@dataclass
class Utterance:
    utterance_id: str
    speaker_id: str
    buffer: AudioBuffer
    condition: str = "clean"


_TIMBRE_ANCHORS_HZ = np.array([250.0, 400.0, 600.0, 900.0, 1300.0, 1900.0,
                               2800.0, 4000.0, 5500.0, 7000.0])


def make_speakers(n: int, seed: int) -> list[SpeakerProfile]:
    """Deterministic speaker population.

    Identity lives only in stationary traits: spectral tilt, vocal-tract
    scale, and a band-gain timbre vector. Pitch is drawn per utterance
    from one shared range, so it carries no identity at all; stationary
    traits average out of nothing and survive temporal pooling, while any
    single frame is dominated by which phoneme it belongs to.
    """
    rng = np.random.default_rng(seed)
    tilts = np.linspace(-4.0, 3.0, n) * rng.uniform(0.9, 1.1, size=n)
    rng.shuffle(tilts)
    scales = rng.uniform(0.98, 1.02, size=n)
    timbres = rng.uniform(-8.0, 8.0, size=(n, len(_TIMBRE_ANCHORS_HZ)))
    return [SpeakerProfile(speaker_id=f"spk{i:02d}",
                           f0_hz=float(np.mean(_F0_RANGE_HZ)),
                           tilt_db_oct=float(tilts[i]),
                           formant_scale=float(scales[i]),
                           band_gains_db=timbres[i])
            for i in range(n)]


def _formant_gain(freqs: np.ndarray, formants: tuple[float, ...],
                  scale: float) -> np.ndarray:
    gain = np.full_like(freqs, 0.02)
    for f_center in formants:
        fc = f_center * scale
        bw = 90.0 + 0.06 * fc
        gain = gain + 1.0 / (1.0 + ((freqs - fc) / bw) ** 2)
    return gain


def _tilt_gain(freqs: np.ndarray, tilt_db_oct: float) -> np.ndarray:
    octaves = np.log2(np.maximum(freqs, 1.0) / 200.0)
    return 10.0 ** (tilt_db_oct * octaves / 20.0)


def _timbre_gain(freqs: np.ndarray, band_gains_db: np.ndarray) -> np.ndarray:
    gains_db = np.interp(np.log(np.maximum(freqs, 1.0)),
                         np.log(_TIMBRE_ANCHORS_HZ), band_gains_db)
    return 10.0 ** (gains_db / 20.0)


def synth_utterance(profile: SpeakerProfile, rng: np.random.Generator,
                    duration_s: float | None = None,
                    rate: int = CANONICAL_RATE) -> AudioBuffer:
    """One utterance: a random sequence of voiced phoneme-like segments."""
    if duration_s is None:
        n_segments = int(rng.integers(*_SEGMENTS_PER_UTT))
        seg_ms = rng.uniform(*_SEGMENT_MS, size=n_segments)
    else:
        seg_ms = []
        remaining = duration_s * 1000.0
        while remaining > 0:
            d = float(rng.uniform(*_SEGMENT_MS))
            seg_ms.append(min(d, remaining))
            remaining -= d
        seg_ms = np.array(seg_ms)
    # Pitch carries no identity: a shared narrow base range per utterance,
    # with wide per-segment excursions. Per-frame cluster lookups see the
    # full excursion spread; temporal pooling averages it back to the base.
    f0_base = float(rng.uniform(*_F0_RANGE_HZ))
    pieces = []
    for ms in seg_ms:
        n = int(round(ms * rate / 1000.0))
        t = np.arange(n) / rate
        base = PHONEME_FORMANTS[int(rng.integers(len(PHONEME_FORMANTS)))]
        phoneme = tuple(f * float(rng.normal(1.0, 0.05)) for f in base)
        f0 = f0_base * float(rng.uniform(0.82, 1.18))
        n_harmonics = int(7000.0 // f0)
        h = np.arange(1, n_harmonics + 1)
        freqs = h * f0
        amps = (_formant_gain(freqs, phoneme, profile.formant_scale)
                * _tilt_gain(freqs, profile.tilt_db_oct)
                * _timbre_gain(freqs, profile.band_gains_db) / np.sqrt(h))
        phases = rng.uniform(0, 2 * np.pi, size=n_harmonics)
        seg = np.sin(2 * np.pi * freqs[:, None] * t[None, :]
                     + phases[:, None])
        seg = amps @ seg
        ramp = min(int(0.012 * rate), n // 2)
        envelope = np.ones(n)
        envelope[:ramp] = 0.5 * (1 - np.cos(np.pi * np.arange(ramp) / ramp))
        envelope[-ramp:] = envelope[:ramp][::-1]
        pieces.append(seg * envelope * float(rng.uniform(0.85, 1.0)))
    signal = np.concatenate(pieces)
    signal = signal / (np.max(np.abs(signal)) + 1e-12) * 0.45
    signal = signal + rng.normal(scale=_NOISE_FLOOR, size=len(signal))
    return AudioBuffer(samples=np.clip(signal, -1.0, 1.0), sample_rate=rate)


def generate_corpus(n_speakers: int = DEFAULT_SPEAKERS,
                    n_utterances: int = DEFAULT_UTTERANCES,
                    seed: int = 0) -> dict[str, list[Utterance]]:
    """Clean utterances per speaker, deterministic for a given seed."""
    speakers = make_speakers(n_speakers, seed)
    corpus: dict[str, list[Utterance]] = {}
    for s_idx, profile in enumerate(speakers):
        rng = np.random.default_rng(seed * 100_003 + s_idx)
        corpus[profile.speaker_id] = [
            Utterance(utterance_id=f"{profile.speaker_id}-u{u:02d}",
                      speaker_id=profile.speaker_id,
                      buffer=synth_utterance(profile, rng))
            for u in range(n_utterances)
        ]
    return corpus


def replay_copy(utt: Utterance, seed: int = 0) -> Utterance:
    """Replay-channel copy of an utterance (physical attack stand-in)."""
    buf = simulate_replay(utt.buffer, REPLAY_CHANNEL,
                          seed=seed + hash(utt.utterance_id) % 100_000)
    return Utterance(utterance_id=utt.utterance_id + "-replay",
                     speaker_id=utt.speaker_id, buffer=buf,
                     condition="replay")


def synth_copy(utt: Utterance, seed: int = 0) -> Utterance:
    """Resynthesis-artifact copy (logical/spoofing attack stand-in)."""
    buf = simulate_replay(utt.buffer, SYNTH_CHANNEL,
                          seed=seed + hash(utt.utterance_id) % 100_000)
    return Utterance(utterance_id=utt.utterance_id + "-synth",
                     speaker_id=utt.speaker_id, buffer=buf,
                     condition="synth")


@dataclass
class TrainedSystem:
    """All artifacts of one training run plus the held-out trial sets."""

    embedder: Embedder
    templates: dict[str, EnrollmentTemplate]
    spoof_scorer: BinaryScorer
    liveness_scorer: BinaryScorer
    fusion_model: FusionModel
    fusion_cv: CvSummary
    codebook: Codebook
    target_user: str
    heldout: dict[str, list[Utterance]] = field(default_factory=dict)
    # context-only diagnostics: per-predictor EER measured on training trials
    module_eers: dict[str, float] = field(default_factory=dict)

    def pipeline(self, user_id: str | None = None) -> Pipeline:
        user = user_id or self.target_user
        return Pipeline(embedder=self.embedder, template=self.templates[user],
                        spoof_scorer=self.spoof_scorer,
                        liveness_scorer=self.liveness_scorer,
                        fusion_model=self.fusion_model)


def split_corpus(corpus: dict[str, list[Utterance]],
                 train_fraction: float = 0.6
                 ) -> tuple[dict[str, list[Utterance]], dict[str, list[Utterance]]]:
    train: dict[str, list[Utterance]] = {}
    heldout: dict[str, list[Utterance]] = {}
    for spk, utts in corpus.items():
        cut = max(3, int(round(len(utts) * train_fraction)))
        train[spk] = utts[:cut]
        heldout[spk] = utts[cut:]
    return train, heldout


def build_score_dataset(train: dict[str, list[Utterance]],
                        embedder: Embedder,
                        template: EnrollmentTemplate,
                        spoof_scorer: BinaryScorer,
                        liveness_scorer: BinaryScorer,
                        target_user: str, seed: int = 0,
                        max_combinations: int = 10_000,
                        negative_ratio: float = 2.0
                        ) -> tuple[list[ScoreVector], list[int]]:
    """Cross-product identity trials with condition trials.

    Identity trials score every utterance against the target template
    (skipping the target's enrollment utterances, which formed the template);
    condition trials score clean, replayed, and resynthesized copies
    through the spoofing and liveness models. Label 1 means target speaker
    AND a clean condition. The cross product is wildly imbalanced, so
    non-authentic combinations are subsampled to `negative_ratio` times
    the authentic count, then everything is capped at `max_combinations`;
    both draws are deterministic per seed.
    """
    from .antispoof import liveness_score, spoof_score

    id_trials = []
    for spk, utts in train.items():
        usable = utts[ENROLL_SAMPLES:] if spk == target_user else utts
        for utt in usable:
            score = cosine_score(template, embed(embedder, utt.buffer))
            id_trials.append((score, spk == target_user))
    cond_trials = []
    for spk, utts in train.items():
        for utt in utts:
            for variant in (utt, replay_copy(utt, seed), synth_copy(utt, seed)):
                cond_trials.append((
                    spoof_score(spoof_scorer, variant.buffer),
                    liveness_score(liveness_scorer, variant.buffer),
                    variant.condition == "clean"))
    positives = []
    negatives = []
    for s_id, is_target in id_trials:
        for s_spoof, s_live, is_clean in cond_trials:
            v = ScoreVector(s_id=s_id, s_spoof=s_spoof, s_live=s_live)
            (positives if is_target and is_clean else negatives).append(v)
    rng = np.random.default_rng(seed)
    n_neg = min(len(negatives), int(round(negative_ratio * len(positives))))
    keep = rng.choice(len(negatives), size=n_neg, replace=False)
    keep.sort()
    negatives = [negatives[i] for i in keep]
    vectors = positives + negatives
    labels = [1] * len(positives) + [0] * len(negatives)
    if len(vectors) > max_combinations:
        keep = rng.choice(len(vectors), size=max_combinations, replace=False)
        keep.sort()
        vectors = [vectors[i] for i in keep]
        labels = [labels[i] for i in keep]
    return vectors, labels


def unit_histogram_trials(utterances: dict[str, list[Utterance]],
                          codebook: Codebook
                          ) -> tuple[list[float], list[float], np.ndarray, list[str]]:
    """Speaker-verification trials over discretized unit histograms.

    Scores every utterance histogram against per-speaker mean histograms by
    cosine similarity; the mated trial uses a leave-one-out mean so an
    utterance never matches against itself. Returns (mated, nonmated,
    histogram matrix, labels) for the anonymity and probe evaluations.
    """
    from .privacy import quantize_stream

    hists, labels = [], []
    for spk, utts in utterances.items():
        for utt in utts:
            stream = quantize_stream(utt.buffer, codebook)
            hist = np.bincount(stream.units, minlength=codebook.k)
            hists.append(hist / len(stream.units))
            labels.append(spk)
    hists = np.stack(hists)
    speakers = sorted(set(labels))
    sums = {s: hists[[i for i, l in enumerate(labels) if l == s]].sum(axis=0)
            for s in speakers}
    counts = {s: labels.count(s) for s in speakers}

    def cosine(a, b):
        return float(a @ b / ((np.linalg.norm(a) + 1e-12)
                              * (np.linalg.norm(b) + 1e-12)))

    mated, nonmated = [], []
    for hist, label in zip(hists, labels):
        for s in speakers:
            if s == label:
                if counts[s] < 2:
                    continue
                ref = (sums[s] - hist) / (counts[s] - 1)
                mated.append(cosine(hist, ref))
            else:
                nonmated.append(cosine(hist, sums[s] / counts[s]))
    return mated, nonmated, hists, labels


def train_system(corpus: dict[str, list[Utterance]], target_user: str,
                 seed: int = 0, fusion_kind: str = "logistic",
                 codebook_k: int = 50) -> TrainedSystem:
    """Train every pipeline artifact from a clean corpus."""
    if target_user not in corpus:
        raise VoiceAuthError(f"unknown target user '{target_user}'")
    train, heldout = split_corpus(corpus)

    buffers = {spk: [u.buffer for u in utts] for spk, utts in train.items()}
    embedder = train_embedder(buffers, seed=seed)

    templates = {spk: enroll(embedder, buffers[spk][:ENROLL_SAMPLES], spk)
                 for spk in train}
    target_scores = [cosine_score(templates[target_user],
                                  embed(embedder, u.buffer))
                     for u in train[target_user][ENROLL_SAMPLES:]]
    nontarget_scores = [cosine_score(templates[target_user],
                                     embed(embedder, u.buffer))
                        for spk, utts in train.items() if spk != target_user
                        for u in utts[:2]]
    if target_scores and nontarget_scores:
        templates[target_user].threshold = calibrate_threshold(
            target_scores, nontarget_scores)

    live_feats, live_labels = [], []
    spoof_feats, spoof_labels = [], []
    for spk, utts in train.items():
        for utt in utts:
            live_feats.append(void_features(utt.buffer))
            live_labels.append(1)
            live_feats.append(void_features(replay_copy(utt, seed).buffer))
            live_labels.append(0)
            spoof_feats.append(spectral_statistics(utt.buffer))
            spoof_labels.append(1)
            spoof_feats.append(spectral_statistics(synth_copy(utt, seed).buffer))
            spoof_labels.append(0)
    liveness_scorer = train_scorer(live_feats, live_labels, kind="linear-svm",
                                   feature_space="void97", seed=seed)
    spoof_scorer = train_scorer(spoof_feats, spoof_labels, kind="linear-svm",
                                feature_space="specstats24", seed=seed)

    # context-only per-predictor operating points on the training trials
    eers = {}
    if target_scores and nontarget_scores:
        eers["identity"] = roc_eer_auc(target_scores, nontarget_scores).eer
    live_vals = [liveness_scorer.decision_value(f) for f in live_feats]
    eers["liveness"] = roc_eer_auc(
        [v for v, l in zip(live_vals, live_labels) if l == 1],
        [v for v, l in zip(live_vals, live_labels) if l == 0]).eer
    spoof_vals = [spoof_scorer.decision_value(f) for f in spoof_feats]
    eers["spoofing"] = roc_eer_auc(
        [v for v, l in zip(spoof_vals, spoof_labels) if l == 1],
        [v for v, l in zip(spoof_vals, spoof_labels) if l == 0]).eer

    vectors, labels = build_score_dataset(
        train, embedder, templates[target_user], spoof_scorer,
        liveness_scorer, target_user, seed=seed)
    fusion_model, fusion_cv = train_fusion(vectors, labels, model=fusion_kind,
                                           seed=seed)

    frames = np.vstack([cluster_features(u.buffer, N_MFCC)
                        for utts in train.values() for u in utts])
    codebook = train_codebook(frames, k=codebook_k, seed=seed)

    return TrainedSystem(embedder=embedder, templates=templates,
                         spoof_scorer=spoof_scorer,
                         liveness_scorer=liveness_scorer,
                         fusion_model=fusion_model, fusion_cv=fusion_cv,
                         codebook=codebook, target_user=target_user,
                         heldout=heldout, module_eers=eers)
