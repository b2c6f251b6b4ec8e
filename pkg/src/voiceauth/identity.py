"""Speaker identity: unit-norm embeddings, enrollment templates, cosine scoring.

The embedder is a desk-scale stand-in for a deep speaker encoder: MFCC
frames are pooled to per-utterance mean+std statistics and projected by a
linear map trained with a triplet objective (same-speaker pairs pulled
together, different-speaker pairs pushed apart by a margin). An import path
for externally computed embeddings keeps higher-fidelity encoders pluggable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .audio import AudioBuffer
from .evaluation import roc_eer_auc
from .exceptions import NumericalError, VoiceAuthError
from .features import N_MFCC, mfcc

EMBED_DIM = 64
_NORM_EPS = 1e-12


@dataclass
class IdentityEmbedding:
    """Unit-norm speaker vector."""

    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        norm = np.linalg.norm(self.vector)
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-6:
            raise VoiceAuthError(f"embedding must be unit-norm, got |v|={norm}")


@dataclass
class EnrollmentTemplate:
    """Stored per-user template: renormalized mean of enrollment embeddings."""

    user_id: str
    mean_embedding: IdentityEmbedding
    threshold: float | None = None
    n_samples: int = 0

    def __post_init__(self):
        if self.n_samples < 3:
            raise VoiceAuthError("enrollment requires at least 3 samples")
        if self.threshold is not None and not -1.0 <= self.threshold <= 1.0:
            raise VoiceAuthError("threshold must lie in [-1, 1]")


@dataclass
class Embedder:
    """Linear projection from pooled MFCC statistics to the embedding space."""

    weights: np.ndarray          # (dim, 2*n_coeffs)
    input_mean: np.ndarray
    input_std: np.ndarray
    n_coeffs: int = N_MFCC
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


def _pooled_stats(buf: AudioBuffer, n_coeffs: int) -> np.ndarray:
    """Temporal mean+std pooling of MFCC, a 2*n_coeffs vector."""
    values = mfcc(buf, n_coeffs).values
    return np.concatenate([values.mean(axis=0), values.std(axis=0)])


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm < _NORM_EPS:
        raise NumericalError("cannot normalize a (near-)zero vector")
    return vec / norm


def _project(embedder: Embedder, stats: np.ndarray) -> np.ndarray:
    z = embedder.weights @ ((stats - embedder.input_mean) / embedder.input_std)
    return _normalize(z)


def _triplet_grad(weights: np.ndarray, anchor: np.ndarray, pos: np.ndarray,
                  neg: np.ndarray, margin: float) -> tuple[float, np.ndarray]:
    """Loss and weight gradient for one triplet of standardized inputs.

    Distance is squared Euclidean between unit-normalized projections, so
    the hinge is max(0, 2 e_a.e_n - 2 e_a.e_p + margin).
    """
    def fwd(x):
        z = weights @ x
        n = np.linalg.norm(z)
        if n < _NORM_EPS:
            raise NumericalError("projection collapsed to zero during training")
        return z, z / n, n

    _, ea, na = fwd(anchor)
    _, ep, npos = fwd(pos)
    _, en, nneg = fwd(neg)
    loss = 2.0 * float(ea @ en) - 2.0 * float(ea @ ep) + margin
    if loss <= 0.0:
        return 0.0, np.zeros_like(weights)
    d_ea = 2.0 * (en - ep)
    d_ep = -2.0 * ea
    d_en = 2.0 * ea

    def back(d_e, e, n, x):
        d_z = (d_e - e * float(e @ d_e)) / n
        return np.outer(d_z, x)

    grad = (back(d_ea, ea, na, anchor) + back(d_ep, ep, npos, pos)
            + back(d_en, en, nneg, neg))
    return loss, grad


def train_embedder(corpus: Mapping[str, Sequence[AudioBuffer]],
                   margin: float = 0.4, epochs: int = 150, seed: int = 0,
                   dim: int = EMBED_DIM, n_coeffs: int = N_MFCC,
                   lr: float = 0.05) -> Embedder:
    """Train the projection on a labeled corpus by triplet SGD.

    Deterministic for a fixed seed: triplet sampling, initialization, and
    visit order all come from one seeded generator.
    """
    speakers = [s for s in corpus if len(corpus[s]) >= 2]
    if len(speakers) < 2:
        raise VoiceAuthError("need at least 2 speakers with 2+ utterances each")
    stats = {s: [_pooled_stats(b, n_coeffs) for b in corpus[s]] for s in speakers}
    all_stats = np.vstack([v for s in speakers for v in stats[s]])
    mu = all_stats.mean(axis=0)
    sd = np.where(all_stats.std(axis=0) > 0, all_stats.std(axis=0), 1.0)
    std_stats = {s: [(v - mu) / sd for v in stats[s]] for s in speakers}

    rng = np.random.default_rng(seed)
    weights = rng.normal(scale=1.0 / np.sqrt(2 * n_coeffs), size=(dim, 2 * n_coeffs))
    for epoch in range(epochs):
        step_lr = lr / (1.0 + 0.02 * epoch)
        for s_idx in rng.permutation(len(speakers)):
            spk = speakers[s_idx]
            utts = std_stats[spk]
            a_i, p_i = rng.choice(len(utts), size=2, replace=False)
            other = speakers[int(rng.integers(len(speakers) - 1))]
            if other == spk:
                other = speakers[-1]
            neg = std_stats[other][int(rng.integers(len(std_stats[other])))]
            loss, grad = _triplet_grad(weights, utts[a_i], utts[p_i], neg, margin)
            if not np.isfinite(loss):
                raise NumericalError("non-finite triplet loss")
            if loss > 0.0:
                weights -= step_lr * grad
    return Embedder(weights=weights, input_mean=mu, input_std=sd,
                    n_coeffs=n_coeffs,
                    metadata={"seed": seed, "epochs": epochs, "margin": margin})


def embed(embedder: Embedder, buf: AudioBuffer) -> IdentityEmbedding:
    """Map a buffer to a unit-norm identity embedding."""
    stats = _pooled_stats(buf, embedder.n_coeffs)
    return IdentityEmbedding(vector=_project(embedder, stats))


def enroll(embedder: Embedder, samples: Sequence[AudioBuffer],
           user_id: str) -> EnrollmentTemplate:
    """Enroll a user from >= 3 samples: renormalized mean embedding."""
    if len(samples) < 3:
        raise VoiceAuthError("enrollment requires at least 3 samples")
    vecs = np.stack([embed(embedder, b).vector for b in samples])
    mean = _normalize(vecs.mean(axis=0))
    return EnrollmentTemplate(user_id=user_id,
                              mean_embedding=IdentityEmbedding(vector=mean),
                              n_samples=len(samples))


def cosine_score(template: EnrollmentTemplate, test: IdentityEmbedding) -> float:
    """Cosine similarity of two unit vectors (their dot product)."""
    return float(np.clip(template.mean_embedding.vector @ test.vector, -1.0, 1.0))


def calibrate_threshold(scores_target: Sequence[float],
                        scores_nontarget: Sequence[float]) -> float:
    """Threshold at the equal-error operating point (accept iff score > T).

    Perfectly separated score lists leave a flat zero-error region; the
    midpoint of that region is returned.
    """
    return roc_eer_auc(scores_target, scores_nontarget).eer_threshold


# -- persistence ------------------------------------------------------------

_EMBEDDER_MAGIC = "voiceauth-embedder v1"


def save_embedder(embedder: Embedder, path: str | Path) -> None:
    lines = [_EMBEDDER_MAGIC,
             f"dim={embedder.dim} in_dim={embedder.weights.shape[1]} "
             f"n_coeffs={embedder.n_coeffs}",
             " ".join(repr(float(v)) for v in embedder.input_mean),
             " ".join(repr(float(v)) for v in embedder.input_std)]
    for row in embedder.weights:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_embedder(path: str | Path) -> Embedder:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _EMBEDDER_MAGIC:
        raise VoiceAuthError(f"not an embedder file: {path}")
    header = dict(kv.split("=") for kv in lines[1].split())
    dim, in_dim = int(header["dim"]), int(header["in_dim"])
    mean = np.array([float(v) for v in lines[2].split()])
    std = np.array([float(v) for v in lines[3].split()])
    weights = np.array([[float(v) for v in line.split()]
                        for line in lines[4:4 + dim]])
    if weights.shape != (dim, in_dim) or mean.size != in_dim:
        raise VoiceAuthError("embedder file is truncated or inconsistent")
    return Embedder(weights=weights, input_mean=mean, input_std=std,
                    n_coeffs=int(header["n_coeffs"]))


def save_templates(templates: Mapping[str, EnrollmentTemplate],
                   path: str | Path) -> None:
    """Local template store (device-side only; never transmitted)."""
    import json

    payload = {"version": 1, "users": {
        uid: {"embedding": t.mean_embedding.vector.tolist(),
              "threshold": t.threshold, "n_samples": t.n_samples}
        for uid, t in templates.items()}}
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_templates(path: str | Path) -> dict[str, EnrollmentTemplate]:
    import json

    payload = json.loads(Path(path).read_text())
    if payload.get("version") != 1:
        raise VoiceAuthError(f"unsupported template store: {path}")
    out = {}
    for uid, entry in payload["users"].items():
        out[uid] = EnrollmentTemplate(
            user_id=uid,
            mean_embedding=IdentityEmbedding(vector=np.array(entry["embedding"])),
            threshold=entry["threshold"], n_samples=entry["n_samples"])
    return out


def load_external_embeddings(path: str | Path) -> dict[str, IdentityEmbedding]:
    """Import embeddings computed by an external encoder.

    Format: one embedding per line, `utterance_id v1 v2 ... vd`. Vectors
    are renormalized on load to satisfy the unit-norm contract.
    """
    out: dict[str, IdentityEmbedding] = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 2:
            raise VoiceAuthError(f"line {ln}: expected 'id v1 ... vd'")
        vec = _normalize(np.array([float(v) for v in parts[1:]]))
        out[parts[0]] = IdentityEmbedding(vector=vec)
    return out
