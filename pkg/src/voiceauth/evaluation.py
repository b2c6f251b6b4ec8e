"""Detection metrics, cross-validation, anonymity scoring, and benchmarks.

Conventions used throughout:

* Detectors accept iff score > threshold.
* FAR(T) = fraction of negative scores above T; FRR(T) = fraction of
  positive scores at or below T. Swept over all distinct scores plus one
  virtual threshold below the minimum (accept-everything end).
* EER is read at the FAR = FRR crossing. If the crossing lies on a flat
  zero-difference region the threshold is the midpoint of that region;
  otherwise both EER and threshold are linearly interpolated between the
  two bracketing operating points.
* AUC is the trapezoid area under the ROC, computed from integer counts so
  it is bit-exact against pairwise counting (ties get half credit).
"""

from __future__ import annotations

import csv
import json
import math
import sys
import time
import tracemalloc
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .exceptions import VoiceAuthError

# ZEBRA anonymity grid: empirical cross-entropy evaluated on 2001 prior
# log-odds points in [-10, 10]; category tags cut on the base-10 magnitude
# of the worst-case log-likelihood ratio.
ZEBRA_GRID_POINTS = 2001
ZEBRA_PRIOR_RANGE = (-10.0, 10.0)
ZEBRA_TAG_EDGES = [(1.0, "B"), (2.0, "C"), (3.0, "D"), (4.0, "E")]


@dataclass
class RocResult:
    """Operating points plus the scalar summaries read off them."""

    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    auc: float
    eer: float
    eer_threshold: float


@dataclass
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: bool = False  # a zero-denominator rate was reported as 0


@dataclass
class CvSummary:
    """Per-metric (mean, sample std) over k folds, plus the raw fold table."""

    means: dict[str, float]
    stds: dict[str, float]
    folds: list[ClassificationMetrics]


@dataclass
class ZebraResult:
    d_ece: float
    worst_llr: float      # max |LLR| in the input's log units (natural log)
    log10_worst: float
    tag: str


@dataclass
class ProbeResult:
    """Attribute-inference accuracies on paired feature sets."""

    accuracy_raw: float
    accuracy_private: float
    chance: float

    @property
    def raw_over_chance(self) -> float:
        return self.accuracy_raw - self.chance

    @property
    def private_over_chance(self) -> float:
        return self.accuracy_private - self.chance


@dataclass
class EvalReport:
    """A named table of results with enough metadata to rerun it."""

    name: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            writer.writerows(self.rows)

    def to_json(self, path: str | Path) -> None:
        payload = {"name": self.name, "columns": self.columns,
                   "rows": self.rows, "metadata": self.metadata}
        Path(path).write_text(json.dumps(payload, indent=2, default=str) + "\n")


def roc_eer_auc(pos_scores: Sequence[float],
                neg_scores: Sequence[float]) -> RocResult:
    """Sweep all distinct scores as thresholds; return ROC, EER, and AUC."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise VoiceAuthError("both score lists must be non-empty")

    distinct = np.unique(np.concatenate([pos, neg]))
    thresholds = np.concatenate([[distinct[0] - 1.0], distinct])
    pos_sorted = np.sort(pos)
    neg_sorted = np.sort(neg)
    far = (neg.size - np.searchsorted(neg_sorted, thresholds, side="right")) / neg.size
    frr = np.searchsorted(pos_sorted, thresholds, side="right") / pos.size

    diff = far - frr
    zero = np.flatnonzero(diff == 0.0)
    if zero.size > 0:
        j = zero[0]
        after = np.flatnonzero(diff < 0.0)
        k = after[0]  # guaranteed: diff ends at -1
        eer = float(far[j])
        eer_threshold = float((thresholds[j] + thresholds[k]) / 2.0)
    else:
        i = np.flatnonzero(diff > 0.0)[-1]
        alpha = diff[i] / (diff[i] - diff[i + 1])
        eer = float(far[i] + alpha * (far[i + 1] - far[i]))
        eer_threshold = float(thresholds[i]
                              + alpha * (thresholds[i + 1] - thresholds[i]))

    # AUC by trapezoid over integer counts: exact, ties get half credit.
    tp = pos.size - np.searchsorted(pos_sorted, thresholds, side="right")
    fp = neg.size - np.searchsorted(neg_sorted, thresholds, side="right")
    tp = np.concatenate([[0], tp[::-1]])   # threshold descending from +inf
    fp = np.concatenate([[0], fp[::-1]])
    numerator = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    auc = numerator / (2 * pos.size * neg.size)

    return RocResult(thresholds=thresholds, far=far, frr=frr,
                     auc=auc, eer=eer, eer_threshold=eer_threshold)


def write_roc_points(result: RocResult, path: str | Path) -> None:
    """Dump plot-ready operating points, one `threshold,FAR,FRR` per line."""
    lines = ["threshold,FAR,FRR"]
    for t, fa, fr in zip(result.thresholds, result.far, result.frr):
        lines.append(f"{t:.10g},{fa:.10g},{fr:.10g}")
    Path(path).write_text("\n".join(lines) + "\n")


def classification_metrics(predictions: Sequence, labels: Sequence,
                           positive=1) -> ClassificationMetrics:
    """Confusion-matrix metrics; zero-denominator rates come back as 0, flagged."""
    if len(predictions) != len(labels):
        raise VoiceAuthError("predictions and labels must have equal length")
    pred = np.asarray([p == positive for p in predictions])
    true = np.asarray([y == positive for y in labels])
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    accuracy = float(np.mean(pred == true))
    degenerate = False
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision, degenerate = 0.0, True
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1, degenerate = 0.0, True
    return ClassificationMetrics(accuracy, precision, recall, f1, degenerate)


def stratified_folds(labels: Sequence, k: int, seed: int) -> list[np.ndarray]:
    """Deterministic stratified fold assignment; returns k index arrays.

    Round-robin continues across classes, so every fold is non-empty
    whenever k <= n (including leave-one-out).
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in sorted(set(labels.tolist()), key=repr):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        for pos, i in enumerate(idx):
            folds[(offset + pos) % k].append(int(i))
        offset += len(idx)
    return [np.array(sorted(f), dtype=int) for f in folds]


def kfold(data: np.ndarray, labels: Sequence, k: int,
          trainer: Callable[[np.ndarray, np.ndarray], Callable],
          seed: int = 0, positive=1) -> CvSummary:
    """Stratified k-fold cross-validation.

    `trainer(train_X, train_y)` must return a callable mapping a sample
    matrix to predicted labels. Normalization or any other fitting must
    happen inside the trainer so validation folds are never touched.
    """
    data = np.asarray(data)
    labels = np.asarray(labels)
    if k < 2 or k > len(labels):
        raise VoiceAuthError(f"k={k} not in [2, n={len(labels)}]")
    folds = stratified_folds(labels, k, seed)
    classes = set(labels.tolist())
    results = []
    for f in range(k):
        val_idx = folds[f]
        train_idx = np.array(sorted(set(range(len(labels))) - set(val_idx.tolist())))
        if set(labels[train_idx].tolist()) != classes:
            raise VoiceAuthError(
                f"fold {f}: a class is absent from the training split")
        model = trainer(data[train_idx], labels[train_idx])
        preds = model(data[val_idx])
        results.append(classification_metrics(preds, labels[val_idx], positive))
    names = ["accuracy", "precision", "recall", "f1"]
    table = {n: np.array([getattr(r, n) for r in results]) for n in names}
    means = {n: float(v.mean()) for n, v in table.items()}
    stds = {n: float(v.std(ddof=1)) if k > 1 else 0.0 for n, v in table.items()}
    return CvSummary(means=means, stds=stds, folds=results)


def _ece_curve(mated: np.ndarray, nonmated: np.ndarray,
               prior_logodds: np.ndarray) -> np.ndarray:
    """Empirical cross-entropy of LLRs over a grid of prior log-odds (bits)."""
    p_tar = 1.0 / (1.0 + np.exp(-prior_logodds))
    ln2 = math.log(2.0)
    mated_cost = np.logaddexp(0.0, -(mated[None, :] + prior_logodds[:, None])).mean(axis=1)
    non_cost = np.logaddexp(0.0, nonmated[None, :] + prior_logodds[:, None]).mean(axis=1)
    return (p_tar * mated_cost + (1.0 - p_tar) * non_cost) / ln2


def zebra(mated_llrs: Sequence[float],
          nonmated_llrs: Sequence[float]) -> ZebraResult:
    """Anonymity tuple: (average divergence from zero evidence, worst LLR, tag).

    Inputs are natural-log likelihood ratios of the same-identity vs
    different-identity hypotheses. The divergence term is the mean absolute
    gap between the empirical cross-entropy curve and the curve an oracle
    with zero evidence (all LLRs = 0) would produce. Tag A means exactly
    zero evidence; B-F step up at decades of the worst-case base-10 LLR.
    """
    mated = np.asarray(mated_llrs, dtype=np.float64)
    nonmated = np.asarray(nonmated_llrs, dtype=np.float64)
    if mated.size == 0 or nonmated.size == 0:
        raise VoiceAuthError("both LLR sets must be non-empty")
    grid = np.linspace(*ZEBRA_PRIOR_RANGE, ZEBRA_GRID_POINTS)
    empirical = _ece_curve(mated, nonmated, grid)
    # same shapes and operations as the empirical curve, so an all-zero
    # input yields a bit-exact divergence of 0
    zero_evidence = _ece_curve(np.zeros_like(mated), np.zeros_like(nonmated),
                               grid)
    d_ece = float(np.mean(np.abs(empirical - zero_evidence)))
    worst = float(max(np.max(np.abs(mated)), np.max(np.abs(nonmated))))
    log10_worst = worst / math.log(10.0)
    if worst == 0.0:
        tag = "A"
    else:
        tag = "F"
        for edge, name in ZEBRA_TAG_EDGES:
            if log10_worst <= edge:
                tag = name
                break
    return ZebraResult(d_ece=d_ece, worst_llr=worst,
                       log10_worst=log10_worst, tag=tag)


def calibrate_llrs(mated_scores: Sequence[float],
                   nonmated_scores: Sequence[float],
                   iters: int = 2000, lr: float = 0.5
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Pooled logistic calibration of raw scores into LLRs.

    Fits P(mated | s) = sigmoid(a*s + b) by gradient descent, then removes
    the empirical prior log-odds so the outputs are proper LLRs.
    """
    mated = np.asarray(mated_scores, dtype=np.float64)
    nonmated = np.asarray(nonmated_scores, dtype=np.float64)
    s = np.concatenate([mated, nonmated])
    y = np.concatenate([np.ones(mated.size), np.zeros(nonmated.size)])
    mu, sd = s.mean(), s.std() + 1e-12
    z = (s - mu) / sd
    a, b = 0.0, 0.0
    for _ in range(iters):
        p = 1.0 / (1.0 + np.exp(-(a * z + b)))
        grad_a = np.mean((p - y) * z)
        grad_b = np.mean((p - y))
        a -= lr * grad_a
        b -= lr * grad_b
    prior = math.log(mated.size / nonmated.size)
    llr = a * (s - mu) / sd + b - prior
    return llr[: mated.size], llr[mated.size:]


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Edit distance with unit substitution/insertion/deletion costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, xa in enumerate(a, start=1):
        cur = [i]
        for j, xb in enumerate(b, start=1):
            cost = 0 if xa == xb else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def wer(reference: Sequence[str] | str, hypothesis: Sequence[str] | str) -> float:
    """Word error rate: word-level edit distance over reference length."""
    ref = reference.split() if isinstance(reference, str) else list(reference)
    hyp = hypothesis.split() if isinstance(hypothesis, str) else list(hypothesis)
    if len(ref) == 0:
        raise VoiceAuthError("reference transcript must be non-empty")
    return levenshtein(ref, hyp) / len(ref)


def rtf(processing_seconds: float, audio_seconds: float) -> float:
    """Real-time factor: processing time over audio duration (lower is better)."""
    if audio_seconds <= 0:
        raise VoiceAuthError("audio duration must be positive")
    return processing_seconds / audio_seconds


def transcripts_report(cases: Sequence[dict]) -> EvalReport:
    """Build a WER/RTF table from transcript files.

    Each case is a dict with keys: condition, service, ref_path, hyp_path,
    and optionally processing_seconds + audio_seconds for the RTF column.
    Reference and hypothesis files hold one utterance per line, aligned.
    """
    report = EvalReport(name="transcription_utility",
                        columns=["condition", "service", "wer", "rtf"])
    for case in cases:
        refs = Path(case["ref_path"]).read_text().splitlines()
        hyps = Path(case["hyp_path"]).read_text().splitlines()
        if len(refs) != len(hyps):
            raise VoiceAuthError("reference/hypothesis line counts differ")
        total_err = 0
        total_words = 0
        for r, h in zip(refs, hyps):
            rw = r.split()
            if not rw:
                raise VoiceAuthError("empty reference line")
            total_err += levenshtein(rw, h.split())
            total_words += len(rw)
        ratio = ""
        if case.get("processing_seconds") is not None:
            ratio = f"{rtf(case['processing_seconds'], case['audio_seconds']):.4g}"
        report.rows.append([case["condition"], case["service"],
                            f"{total_err / total_words:.4f}", ratio])
    return report


def attribute_probe(features_raw: np.ndarray, features_private: np.ndarray,
                    labels: Sequence, seed: int = 0, k: int = 5) -> ProbeResult:
    """Attribute-inference attack on paired feature sets.

    Trains the same one-vs-rest linear classifier on both representations
    with identical stratified folds and reports cross-validated accuracy
    next to the uniform-guessing chance rate.
    """
    from .linear import train_one_vs_rest  # local import avoids a cycle

    raw = np.asarray(features_raw, dtype=np.float64)
    priv = np.asarray(features_private, dtype=np.float64)
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()), key=repr)
    if len(classes) < 2:
        raise VoiceAuthError("attribute probe needs at least two classes")
    if raw.shape[0] != priv.shape[0] or raw.shape[0] != len(labels):
        raise VoiceAuthError("feature sets and labels must be aligned")
    folds = stratified_folds(labels, k, seed)

    def cv_accuracy(X: np.ndarray) -> float:
        correct = 0
        for f in range(k):
            val_idx = folds[f]
            train_idx = np.array(sorted(set(range(len(labels)))
                                        - set(val_idx.tolist())))
            model = train_one_vs_rest(X[train_idx], labels[train_idx], seed=seed)
            correct += int(np.sum(model(X[val_idx]) == labels[val_idx]))
        return correct / len(labels)

    return ProbeResult(accuracy_raw=cv_accuracy(raw),
                       accuracy_private=cv_accuracy(priv),
                       chance=1.0 / len(classes))


def benchmark_latency(stages: dict[str, dict[str, Callable]],
                      buffers: Sequence, repeats: int = 3,
                      model_sizes: dict[str, int] | None = None) -> EvalReport:
    """Median wall time per stage/phase plus a peak-allocation estimate.

    `stages` maps module name (e.g. "SV", "SD", "LA", "PP") to a dict with
    "extraction" and "testing" callables, each taking one audio buffer.
    Memory is tracemalloc peak allocation over one full pass, deliberately
    not OS-resident size, for portability.
    """
    rows = []
    for module, phases in stages.items():
        for phase in ("extraction", "testing"):
            fn = phases[phase]
            times = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                for buf in buffers:
                    fn(buf)
                times.append((time.perf_counter() - t0) / len(buffers))
            rows.append([module, phase, float(np.median(times))])
    tracemalloc.start()
    for module, phases in stages.items():
        for phase in ("extraction", "testing"):
            for buf in buffers:
                phases[phase](buf)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    report = EvalReport(
        name="latency_benchmark",
        columns=["module", "phase", "median_seconds_per_utt"],
        rows=rows,
        metadata={
            "python": sys.version.split()[0],
            "platform": sys.platform,
            "n_utterances": len(buffers),
            "repeats": repeats,
            "peak_alloc_bytes": peak,
            "model_sizes_bytes": model_sizes or {},
        },
    )
    return report
