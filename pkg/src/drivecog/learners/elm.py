"""Single-hidden-layer extreme learning machine with triangular-basis units."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def tribas(z):
    """Triangular basis max(0, 1 - |z|)."""
    return np.maximum(0.0, 1.0 - np.abs(z))


class SingleClassError(ValueError):
    pass


@dataclass(frozen=True)
class ElmModel:
    input_weights: np.ndarray   # (L, k)
    biases: np.ndarray          # (L,)
    output_weights: np.ndarray  # (L, 2)
    seed: int
    ridge: float

    @property
    def n_hidden(self):
        return self.biases.shape[0]

    def hidden(self, x):
        return tribas(np.asarray(x, dtype=float) @ self.input_weights.T + self.biases)


def one_hot(y, n_classes=2):
    y = np.asarray(y, dtype=int)
    out = np.zeros((y.size, n_classes))
    out[np.arange(y.size), y] = 1.0
    return out


def ridge_solve(h, t, ridge):
    """argmin_B ||H B - T||^2 + ridge ||B||^2 via the stacked least-squares system."""
    L = h.shape[1]
    a = np.vstack([h, np.sqrt(ridge) * np.eye(L)]) if ridge > 0 else h
    b = np.vstack([t, np.zeros((L, t.shape[1]))]) if ridge > 0 else t
    beta, *_ = np.linalg.lstsq(a, b, rcond=None)
    return beta


def elm_train(x, y, n_hidden=500, seed=0, ridge=1e-6):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    if x.ndim != 2 or x.shape[0] != y.size or x.shape[0] < 2:
        raise ValueError(f"need (n >= 2, k) features with n labels; got {x.shape}, {y.shape}")
    if np.unique(y).size < 2:
        raise SingleClassError("training set contains a single class")
    rng = np.random.default_rng(seed)
    w = rng.uniform(-1.0, 1.0, size=(n_hidden, x.shape[1]))
    b = rng.uniform(-1.0, 1.0, size=n_hidden)
    h = tribas(x @ w.T + b)
    beta = ridge_solve(h, one_hot(y), ridge)
    return ElmModel(w, b, beta, int(seed), float(ridge))


def elm_scores(model, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.input_weights.shape[1]:
        raise ValueError(f"dimension mismatch: model expects {model.input_weights.shape[1]}, "
                         f"got {x.shape[1]}")
    return model.hidden(x) @ model.output_weights


def elm_predict(model, x):
    """Class labels and (n, 2) scores; ties go to class 0."""
    s = elm_scores(model, x)
    return (s[:, 1] > s[:, 0]).astype(int), s
