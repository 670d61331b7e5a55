"""Multinomial logistic regression over standardized embeddings.

Gradient descent on the mean cross-entropy with an L2 penalty; the step
size comes from the smoothness bound of the softmax loss, so training is
deterministic (zero initialization, no randomness) and stops either at the
iteration cap or when the gradient norm drops below tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingleClassDegenerate

DEFAULT_L2 = 1.0
DEFAULT_MAX_ITER = 500
DEFAULT_TOL = 1e-6


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


@dataclass
class CommitteeClassifier:
    """Trained model exposing per-class probabilities that sum to one."""

    classes: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    weights: np.ndarray  # (dim, n_classes)
    bias: np.ndarray     # (n_classes,)
    n_iter: int = 0
    grad_norm: float = float("inf")
    converged: bool = False
    train_accuracy: float = field(default=0.0)

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return _softmax(self._standardize(x) @ self.weights + self.bias)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(self.predict_proba(x), axis=1)]

    def confidence(self, x: np.ndarray) -> np.ndarray:
        return self.predict_proba(x).max(axis=1)


def train_committee_classifier(
    features: np.ndarray,
    labels: np.ndarray,
    l2: float = DEFAULT_L2,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> CommitteeClassifier:
    """Fit the committee's second classifier on labeled embeddings.

    ``labels`` are opaque class identifiers; at least two distinct values
    are required, otherwise the committee has nothing to disagree about and
    SingleClassDegenerate is raised for the engine to fall back on.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("features must be (n, dim) aligned with labels")
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClassDegenerate(f"need >= 2 distinct classes, got {classes.size}")

    n, dim = x.shape
    n_classes = classes.size
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    xs = (x - mean) / scale

    onehot = np.zeros((n, n_classes))
    class_index = {c: i for i, c in enumerate(classes.tolist())}
    onehot[np.arange(n), [class_index[c] for c in y.tolist()]] = 1.0

    weights = np.zeros((dim, n_classes))
    bias = np.zeros(n_classes)

    # smoothness bound of mean softmax cross-entropy plus the L2 term
    sigma_max = np.linalg.svd(np.hstack([xs, np.ones((n, 1))]), compute_uv=False)[0]
    lipschitz = 0.5 * sigma_max**2 / n + l2 / n
    step = 1.0 / lipschitz

    grad_norm = float("inf")
    it = 0
    for it in range(1, max_iter + 1):
        probs = _softmax(xs @ weights + bias)
        err = (probs - onehot) / n
        grad_w = xs.T @ err + (l2 / n) * weights
        grad_b = err.sum(axis=0)
        grad_norm = float(np.sqrt((grad_w**2).sum() + (grad_b**2).sum()))
        if grad_norm < tol:
            break
        weights -= step * grad_w
        bias -= step * grad_b

    model = CommitteeClassifier(
        classes=classes,
        mean=mean,
        scale=scale,
        weights=weights,
        bias=bias,
        n_iter=it,
        grad_norm=grad_norm,
        converged=grad_norm < tol,
    )
    model.train_accuracy = float((model.predict(x) == y).mean())
    return model
