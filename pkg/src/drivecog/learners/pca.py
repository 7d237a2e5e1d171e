"""Principal component projection fitted by SVD of the centred training data."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


class RankError(ValueError):
    pass


def fingerprint(x):
    """Short hash identifying a training matrix."""
    x = np.ascontiguousarray(x, dtype=float)
    h = hashlib.sha256(str(x.shape).encode() + x.tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    total_variance: float
    fitted_on: str = ""

    @property
    def k(self):
        return self.components.shape[0]

    @property
    def explained_variance_ratio(self):
        if self.total_variance == 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance


def pca_fit(x, k, rtol=1e-10):
    """Top-``k`` principal directions of an (n, d) training matrix.

    Raises :class:`RankError` when the centred data has fewer than ``k``
    non-negligible singular values.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"need an (n >= 2, d) matrix, got shape {x.shape}")
    n, d = x.shape
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    rank = int(np.sum(s > rtol * max(s[0] if s.size else 0.0, 1e-300)))
    if k < 1 or k > min(n, d) or (k > rank and k != d):
        raise RankError(f"cannot keep {k} components: achievable rank is {rank} "
                        f"(n={n}, d={d})")
    # deterministic sign: largest-magnitude loading of each component positive
    comps = vt[:k].copy()
    flip = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    comps *= np.where(flip == 0, 1.0, flip)[:, None]
    var = s ** 2 / (n - 1)
    return PcaModel(mean, comps, var[:k], float(var.sum()), fingerprint(x))


def pca_transform(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.mean.shape[0]:
        raise ValueError(f"dimension mismatch: model expects {model.mean.shape[0]}, "
                         f"got {x.shape[-1]}")
    return (x - model.mean) @ model.components.T


def pca_inverse(model, z):
    return np.asarray(z, dtype=float) @ model.components + model.mean
