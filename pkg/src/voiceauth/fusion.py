"""Score normalization and fusion into the final authenticity decision.

Three predictors (identity, spoofing, liveness) emit heterogeneous raw
scores; a normalization step learned on training data brings them to a
common scale, and a small binary classifier fuses them into one score.
Accept means: claimed identity AND genuine AND live.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .antispoof import BinaryScorer, liveness_score, spoof_score
from .audio import AudioBuffer
from .evaluation import CvSummary, EvalReport, kfold
from .exceptions import NotTrainedError, StageError, VoiceAuthError
from .identity import Embedder, EnrollmentTemplate, cosine_score, embed
from .linear import train_margin

FUSION_KINDS = ("logistic", "linear-svm", "knn", "sgd-logistic")
_KNN_K = 5


@dataclass
class ScoreVector:
    """The (identity, spoofing, liveness) score triple."""

    s_id: float
    s_spoof: float
    s_live: float

    def __post_init__(self):
        if not all(np.isfinite([self.s_id, self.s_spoof, self.s_live])):
            raise VoiceAuthError("score vector contains non-finite values")

    def as_array(self) -> np.ndarray:
        return np.array([self.s_id, self.s_spoof, self.s_live])


@dataclass
class NormalizationStats:
    """Per-component scaling learned on training scores only."""

    method: str                        # "min-max" or "z-score"
    lo: np.ndarray | None = None       # mins or means
    hi: np.ndarray | None = None       # maxs or stds

    @classmethod
    def fit(cls, vectors: np.ndarray, method: str = "min-max") -> "NormalizationStats":
        vectors = np.asarray(vectors, dtype=np.float64)
        if method == "min-max":
            return cls(method, vectors.min(axis=0), vectors.max(axis=0))
        if method == "z-score":
            return cls(method, vectors.mean(axis=0), vectors.std(axis=0))
        raise VoiceAuthError(f"unknown normalization '{method}'")

    def apply(self, values: np.ndarray) -> np.ndarray:
        if self.lo is None:
            raise NotTrainedError("normalization stats not fitted")
        values = np.asarray(values, dtype=np.float64)
        if self.method == "min-max":
            span = self.hi - self.lo
            out = np.where(span > 0, (values - self.lo) / np.where(span > 0, span, 1.0), 0.5)
            return np.clip(out, 0.0, 1.0)
        out = np.where(self.hi > 0, (values - self.lo) / np.where(self.hi > 0, self.hi, 1.0), 0.0)
        return out


def normalize_scores(v: ScoreVector, stats: NormalizationStats) -> ScoreVector:
    """Scale a raw score triple to the fused model's input range.

    min-max maps onto [0, 1] (clamped); z-score standardizes. Degenerate
    components (max == min, or std == 0) map to 0.5 and 0.0 respectively.
    """
    s = stats.apply(v.as_array())
    return ScoreVector(s_id=float(s[0]), s_spoof=float(s[1]), s_live=float(s[2]))


@dataclass
class FusionModel:
    """Trained fusion classifier plus its normalization stats and threshold."""

    kind: str
    stats: NormalizationStats
    weights: np.ndarray | None = None      # linear kinds
    bias: float = 0.0
    train_points: np.ndarray | None = None  # knn
    train_labels: np.ndarray | None = None
    knn_k: int = _KNN_K
    threshold: float = 0.5
    metadata: dict = field(default_factory=dict)

    def score(self, v: ScoreVector) -> float:
        """Fused authenticity score for one normalized-on-the-fly triple."""
        x = self.stats.apply(v.as_array())
        if self.kind in ("logistic", "sgd-logistic"):
            return float(1.0 / (1.0 + np.exp(-(self.weights @ x + self.bias))))
        if self.kind == "linear-svm":
            return float(self.weights @ x + self.bias)
        if self.kind == "knn":
            if self.train_points is None:
                raise NotTrainedError("kNN fusion model has no training points")
            d = np.linalg.norm(self.train_points - x, axis=1)
            k = min(self.knn_k, len(d))
            nearest = np.argsort(d, kind="stable")[:k]
            return float(np.mean(self.train_labels[nearest]))
        raise VoiceAuthError(f"unknown fusion kind '{self.kind}'")

    def predict(self, v: ScoreVector) -> bool:
        return self.score(v) > self.threshold


def _fit_fusion(vectors: np.ndarray, labels: np.ndarray, kind: str,
                norm_method: str, seed: int, knn_k: int = _KNN_K) -> FusionModel:
    stats = NormalizationStats.fit(vectors, norm_method)
    X = stats.apply(vectors)
    y = np.where(labels == 1, 1.0, -1.0)
    if kind == "linear-svm":
        w, b = train_margin(X, y, loss="hinge", mode="batch", lr=0.5,
                            epochs=100, l2=1e-4, seed=seed)
        return FusionModel(kind, stats, weights=w, bias=b, threshold=0.0)
    if kind == "logistic":
        w, b = train_margin(X, y, loss="logloss", mode="batch", lr=0.5,
                            epochs=100, l2=1e-4, seed=seed)
        return FusionModel(kind, stats, weights=w, bias=b, threshold=0.5)
    if kind == "sgd-logistic":
        w, b = train_margin(X, y, loss="logloss", mode="sgd", seed=seed)
        return FusionModel(kind, stats, weights=w, bias=b, threshold=0.5)
    if kind == "knn":
        return FusionModel(kind, stats, train_points=X,
                           train_labels=(labels == 1).astype(float),
                           knn_k=knn_k, threshold=0.5)
    raise VoiceAuthError(f"unknown fusion kind '{kind}'")


def train_fusion(vectors: Sequence[ScoreVector], labels: Sequence[int],
                 model: str = "logistic", k_folds: int = 5,
                 seed: int = 0, norm_method: str = "min-max",
                 knn_k: int = _KNN_K) -> tuple[FusionModel, CvSummary]:
    """Cross-validate and train a fusion model.

    Label 1 marks the authentic class (target speaker, genuine, live).
    Normalization stats are fitted inside each training fold, never on
    validation data; the returned model is refitted on everything.
    """
    X = np.stack([v.as_array() for v in vectors])
    y = np.asarray(labels)
    if len(set(y.tolist())) < 2:
        raise VoiceAuthError("fusion training needs both classes")

    def trainer(train_X: np.ndarray, train_y: np.ndarray):
        fold_model = _fit_fusion(train_X, train_y, model, norm_method, seed,
                                 knn_k)

        def predict(samples: np.ndarray) -> np.ndarray:
            return np.array([
                int(fold_model.predict(ScoreVector(*row))) for row in samples])

        return predict

    summary = kfold(X, y, k_folds, trainer, seed=seed)
    final = _fit_fusion(X, y, model, norm_method, seed, knn_k)
    final.metadata = {"seed": seed, "k_folds": k_folds, "n_train": len(y),
                      "cv_accuracy_mean": summary.means["accuracy"]}
    return final, summary


def fusion_report(summaries: Mapping[str, CvSummary]) -> EvalReport:
    """Cross-validation table, one row per model kind, mean (std) per metric."""
    report = EvalReport(
        name="fusion_cross_validation",
        columns=["model", "accuracy", "accuracy_std", "precision",
                 "precision_std", "recall", "recall_std", "f1", "f1_std"])
    for kind, s in summaries.items():
        report.rows.append([
            kind,
            f"{s.means['accuracy']:.4f}", f"{s.stds['accuracy']:.4f}",
            f"{s.means['precision']:.4f}", f"{s.stds['precision']:.4f}",
            f"{s.means['recall']:.4f}", f"{s.stds['recall']:.4f}",
            f"{s.means['f1']:.4f}", f"{s.stds['f1']:.4f}"])
    return report


@dataclass
class AuthDecision:
    """Final verdict with every sub-score kept for audit."""

    voiceid_score: float
    accept: bool
    raw: ScoreVector
    normalized: ScoreVector
    model_kind: str


@dataclass
class Pipeline:
    """Everything needed to authenticate one buffer."""

    embedder: Embedder
    template: EnrollmentTemplate
    spoof_scorer: BinaryScorer
    liveness_scorer: BinaryScorer
    fusion_model: FusionModel


def authenticate(pipeline: Pipeline, buf: AudioBuffer) -> AuthDecision:
    """Run all three predictors, normalize, fuse, decide.

    Any stage failure aborts with a StageError naming the stage; no partial
    decision is ever produced.
    """
    try:
        test = embed(pipeline.embedder, buf)
        s_id = cosine_score(pipeline.template, test)
    except Exception as exc:  # noqa: BLE001 - rewrapped with stage context
        raise StageError("identity", exc) from exc
    try:
        s_spoof = spoof_score(pipeline.spoof_scorer, buf)
    except Exception as exc:  # noqa: BLE001
        raise StageError("spoofing", exc) from exc
    try:
        s_live = liveness_score(pipeline.liveness_scorer, buf)
    except Exception as exc:  # noqa: BLE001
        raise StageError("liveness", exc) from exc
    raw = ScoreVector(s_id=s_id, s_spoof=s_spoof, s_live=s_live)
    try:
        normalized = normalize_scores(raw, pipeline.fusion_model.stats)
        score = pipeline.fusion_model.score(raw)
        accept = score > pipeline.fusion_model.threshold
    except Exception as exc:  # noqa: BLE001
        raise StageError("fusion", exc) from exc
    return AuthDecision(voiceid_score=score, accept=accept, raw=raw,
                        normalized=normalized,
                        model_kind=pipeline.fusion_model.kind)


# -- persistence ------------------------------------------------------------

def save_fusion_model(model: FusionModel, path: str | Path) -> None:
    payload = {
        "format": "voiceauth-fusion",
        "version": 1,
        "kind": model.kind,
        "threshold": model.threshold,
        "stats": {
            "method": model.stats.method,
            "lo": None if model.stats.lo is None else model.stats.lo.tolist(),
            "hi": None if model.stats.hi is None else model.stats.hi.tolist(),
        },
        "weights": None if model.weights is None else model.weights.tolist(),
        "bias": model.bias,
        "train_points": (None if model.train_points is None
                         else model.train_points.tolist()),
        "train_labels": (None if model.train_labels is None
                         else model.train_labels.tolist()),
        "knn_k": model.knn_k,
        "metadata": model.metadata,
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_fusion_model(path: str | Path) -> FusionModel:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != "voiceauth-fusion" or payload.get("version") != 1:
        raise VoiceAuthError(f"not a fusion model file: {path}")
    stats = NormalizationStats(
        method=payload["stats"]["method"],
        lo=None if payload["stats"]["lo"] is None else np.array(payload["stats"]["lo"]),
        hi=None if payload["stats"]["hi"] is None else np.array(payload["stats"]["hi"]))
    return FusionModel(
        kind=payload["kind"], stats=stats,
        weights=None if payload["weights"] is None else np.array(payload["weights"]),
        bias=payload["bias"],
        train_points=(None if payload["train_points"] is None
                      else np.array(payload["train_points"])),
        train_labels=(None if payload["train_labels"] is None
                      else np.array(payload["train_labels"])),
        knn_k=payload.get("knn_k", _KNN_K),
        threshold=payload["threshold"], metadata=payload.get("metadata", {}))
