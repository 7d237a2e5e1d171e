"""Histogram estimates of entropy, mutual information and conditional entropy.

All quantities are in bits.  The channel-pair features use the 91 unordered
pairs (i < j) of the canonical channel order; by default each feature is
``H(ch_j | ch_i)``, the uncertainty left in the later channel once the
earlier one is known.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .preproc import InsufficientSamplesError, UnusableTrialError
from .session import CHANNELS

log = logging.getLogger(__name__)

MIN_SAMPLES = 32
PAIRS = tuple(combinations(range(len(CHANNELS)), 2))


class DegenerateChannelError(ValueError):
    """A channel has zero range inside the analysis window."""


class DegenerateChannelWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DiscretizationSpec:
    n_bins: int = 8

    def __post_init__(self):
        if int(self.n_bins) != self.n_bins or self.n_bins < 2:
            raise ValueError(f"n_bins must be an integer >= 2, got {self.n_bins}")

    def edges(self, x):
        lo, hi = float(np.min(x)), float(np.max(x))
        if not hi > lo:
            raise DegenerateChannelError("constant input channel (zero range)")
        e = np.linspace(lo, hi, self.n_bins + 1)
        if np.any(np.diff(e) <= 0):
            raise DegenerateChannelError("channel range too small to bin")
        return e


def digitize(x, spec):
    """Equal-width bin codes in [0, n_bins) over the range of ``x``."""
    x = np.asarray(x, dtype=float)
    lo, hi = spec.edges(x)[[0, -1]]
    codes = np.floor((x - lo) / (hi - lo) * spec.n_bins).astype(np.int64)
    return np.clip(codes, 0, spec.n_bins - 1)


def _check_pair(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    return x, y


def joint_histogram(x, y, spec=DiscretizationSpec()):
    """Joint probability table p[i, j] = P(x in bin i, y in bin j)."""
    x, y = _check_pair(x, y)
    n = spec.n_bins
    counts = np.bincount(digitize(x, spec) * n + digitize(y, spec), minlength=n * n)
    return counts.reshape(n, n) / x.size


def entropy(p):
    """Shannon entropy -sum p log2 p, with 0 log 0 taken as 0."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("probability table has negative entries")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probability table sums to {p.sum()!r}, not 1")
    nz = p[p > 0]
    return float(max(0.0, -np.sum(nz * np.log2(nz))))


def table_information(pxy):
    """Return (H(X), H(Y), I(X;Y)) of a joint table; I = H(X) + H(Y) - H(X,Y)."""
    pxy = np.asarray(pxy, dtype=float)
    hx = entropy(pxy.sum(axis=1))
    hy = entropy(pxy.sum(axis=0))
    hxy = entropy(pxy)
    return hx, hy, max(0.0, hx + hy - hxy)


def mutual_information(x, y, spec=DiscretizationSpec()):
    return table_information(joint_histogram(x, y, spec))[2]


def conditional_entropy(x, y, spec=DiscretizationSpec()):
    """H(Y | X) = H(Y) - I(X;Y)."""
    _, hy, mi = table_information(joint_histogram(x, y, spec))
    return max(0.0, hy - mi)


def _pair_values(codes, i, j, n_bins, mode):
    n = n_bins
    counts = np.bincount(codes[:, i] * n + codes[:, j], minlength=n * n)
    hx, hy, mi = table_information(counts.reshape(n, n) / codes.shape[0])
    return mi if mode == "mi" else max(0.0, hy - mi)


def pairwise_features(clean, spec=DiscretizationSpec(), mode="conditional"):
    """91 channel-pair features of a masked trial.

    ``mode="conditional"`` gives H(ch_j | ch_i) for i < j; ``mode="mi"`` gives
    the symmetric I(ch_i; ch_j).  Masked samples are skipped.  A pair
    involving a constant channel is set to log2(n_bins) with a warning.
    """
    if mode not in ("conditional", "mi"):
        raise ValueError(f"mode must be 'conditional' or 'mi', got {mode!r}")
    if not clean.usable:
        raise UnusableTrialError(f"trial {clean.trial.trial_id} is unusable "
                         f"(rejection ratio {clean.rejection_ratio:.2f})")
    x = clean.kept_samples
    if x.shape[0] < MIN_SAMPLES:
        raise InsufficientSamplesError(
            f"need at least {MIN_SAMPLES} unmasked samples, got {x.shape[0]}")
    n_ch = x.shape[1]
    codes = np.zeros(x.shape, dtype=np.int64)
    degenerate = set()
    for c in range(n_ch):
        try:
            codes[:, c] = digitize(x[:, c], spec)
        except DegenerateChannelError:
            degenerate.add(c)
    if degenerate:
        names = [CHANNELS[c] for c in sorted(degenerate)]
        warnings.warn(f"trial {clean.trial.trial_id}: degenerate channels {names}; "
                      f"their pair features set to log2({spec.n_bins})",
                      DegenerateChannelWarning, stacklevel=2)
    out = np.empty(len(PAIRS))
    for k, (i, j) in enumerate(PAIRS):
        if i in degenerate or j in degenerate:
            out[k] = np.log2(spec.n_bins)
        else:
            out[k] = _pair_values(codes, i, j, spec.n_bins, mode)
    return out


def pair_names(mode="conditional"):
    if mode == "mi":
        return [f"mi:{CHANNELS[i]};{CHANNELS[j]}" for i, j in PAIRS]
    return [f"cond_entropy:{CHANNELS[j]}|{CHANNELS[i]}" for i, j in PAIRS]
