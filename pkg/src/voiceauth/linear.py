"""Small deterministic linear classifiers trained by gradient descent.

Shared by the spoofing/liveness scorers, the fusion model, and the
attribute-inference probe. Inputs are standardized internally during
training and the affine transform is folded back into the returned
weights, so a trained model is always a plain `w . x + b`.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .exceptions import VoiceAuthError


def _standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray,
                                         np.ndarray]:
    """Z-score columns; (near-)constant columns are zeroed out entirely.

    A column whose spread is at float-noise level relative to its mean
    carries no information, and standardizing it would amplify rounding
    noise to unit variance; folding the affine transform back would then
    produce astronomically large, cancellation-prone weights.
    """
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    constant = sd <= 1e-9 * (np.abs(mu) + 1.0)
    sd = np.where(constant, 1.0, sd)
    Z = (X - mu) / sd
    Z[:, constant] = 0.0
    return Z, mu, sd, constant


def _fold_affine(w: np.ndarray, b: float, mu: np.ndarray, sd: np.ndarray,
                 constant: np.ndarray) -> tuple[np.ndarray, float]:
    """Rewrite w.((x-mu)/sd)+b as w_eff.x + b_eff."""
    w_eff = np.where(constant, 0.0, w / sd)
    return w_eff, float(b - np.dot(w_eff, mu))


def train_margin(X: np.ndarray, y: np.ndarray, loss: str = "hinge",
                 mode: str = "sgd", l2: float = 1e-3, epochs: int = 60,
                 lr: float = 0.1, seed: int = 0) -> tuple[np.ndarray, float]:
    """Train a binary linear scorer; labels must be +1/-1.

    loss "hinge" gives a linear SVM, "logloss" logistic regression; mode
    "sgd" visits samples in a seeded shuffle, "batch" does full-gradient
    steps. Returns (weights, bias) in the original feature space.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise VoiceAuthError("X must be 2-D and aligned with y")
    if not set(np.unique(y)) <= {-1.0, 1.0} or len(set(y)) < 2:
        raise VoiceAuthError("labels must contain both +1 and -1")
    if loss not in ("hinge", "logloss"):
        raise VoiceAuthError(f"unknown loss '{loss}'")
    Z, mu, sd, constant = _standardize(X)
    n, d = Z.shape
    w = np.zeros(d)
    b = 0.0
    rng = np.random.default_rng(seed)
    if mode == "batch":
        for step in range(epochs * 10):
            margin = y * (Z @ w + b)
            if loss == "hinge":
                active = margin < 1.0
                grad_w = l2 * w - (y[active, None] * Z[active]).sum(axis=0) / n
                grad_b = -y[active].sum() / n
            else:
                p = 1.0 / (1.0 + np.exp(margin))
                grad_w = l2 * w - ((y * p)[:, None] * Z).sum(axis=0) / n
                grad_b = -(y * p).sum() / n
            w -= lr * grad_w
            b -= lr * grad_b
    elif mode == "sgd":
        for epoch in range(epochs):
            order = rng.permutation(n)
            step_lr = lr / (1.0 + 0.1 * epoch)
            for i in order:
                margin = y[i] * (Z[i] @ w + b)
                if loss == "hinge":
                    g = -y[i] if margin < 1.0 else 0.0
                else:
                    g = -y[i] / (1.0 + np.exp(margin))
                w -= step_lr * (l2 * w + g * Z[i])
                b -= step_lr * g
    else:
        raise VoiceAuthError(f"unknown mode '{mode}'")
    if not (np.all(np.isfinite(w)) and np.isfinite(b)):
        raise VoiceAuthError("training diverged to non-finite weights")
    return _fold_affine(w, b, mu, sd, constant)


def train_one_vs_rest(X: np.ndarray, labels: Sequence, seed: int = 0,
                      epochs: int = 80) -> Callable[[np.ndarray], np.ndarray]:
    """Multiclass classifier: one logistic scorer per class, argmax decision."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()), key=repr)
    weights = []
    for cls in classes:
        y = np.where(labels == cls, 1.0, -1.0)
        w, b = train_margin(X, y, loss="logloss", mode="batch",
                            l2=1e-3, epochs=epochs, lr=0.5, seed=seed)
        weights.append((w, b))
    W = np.stack([w for w, _ in weights])
    B = np.array([b for _, b in weights])
    cls_arr = np.array(classes)

    def predict(samples: np.ndarray) -> np.ndarray:
        margins = np.atleast_2d(samples) @ W.T + B
        return cls_arr[np.argmax(margins, axis=1)]

    return predict
