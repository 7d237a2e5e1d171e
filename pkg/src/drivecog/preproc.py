"""Band-pass filtering, robust artifact masking and interval segmentation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .session import EegTrial

log = logging.getLogger(__name__)

MAD_TO_SIGMA = 1.4826


class TrialTooShortError(ValueError):
    pass


class UnusableTrialError(ValueError):
    """More than half of the trial was masked as artifact."""


class InsufficientSamplesError(ValueError):
    """Too few unmasked samples left for an estimate."""


@dataclass(frozen=True)
class FilterSpec:
    low_hz: float = 4.0
    high_hz: float = 45.0
    order: int = 4

    def validate(self, sample_rate):
        if not 0 < self.low_hz < self.high_hz < sample_rate / 2:
            raise ValueError(
                f"band edges must satisfy 0 < {self.low_hz} < {self.high_hz} < {sample_rate / 2}")
        if self.order < 2 or self.order % 2:
            raise ValueError(f"band-pass order must be even and >= 2, got {self.order}")

    def sos(self, sample_rate):
        self.validate(sample_rate)
        # butter() doubles the prototype order for band-pass designs.
        return signal.butter(self.order // 2, [self.low_hz, self.high_hz], btype="bandpass",
                             fs=sample_rate, output="sos")

    def response(self, freqs, sample_rate):
        """Magnitude of the zero-phase (forward-backward) response."""
        _, h = signal.sosfreqz(self.sos(sample_rate), worN=np.atleast_1d(freqs), fs=sample_rate)
        return np.abs(h) ** 2


def _filter_array(x, spec, sample_rate):
    x = np.asarray(x, dtype=float)
    if x.shape[0] <= 6 * spec.order:
        raise TrialTooShortError(
            f"{x.shape[0]} samples too short for order-{spec.order} filtering "
            f"(need > {6 * spec.order})")
    return signal.sosfiltfilt(spec.sos(sample_rate), x, axis=0,
                              padtype="even", padlen=3 * spec.order)


def bandpass_filter(trial, spec=FilterSpec()):
    """Zero-phase band-pass of every channel; output length equals input length."""
    return trial.replace_samples(_filter_array(trial.samples, spec, trial.sample_rate))


@dataclass(frozen=True)
class CleanTrial:
    trial: EegTrial
    rejected_mask: np.ndarray

    def __post_init__(self):
        m = np.array(self.rejected_mask, dtype=bool)
        m.setflags(write=False)
        object.__setattr__(self, "rejected_mask", m)
        if m.shape != (self.trial.n_samples,):
            raise ValueError("mask length must equal the number of samples")

    @property
    def samples(self):
        return self.trial.samples

    @property
    def rejection_ratio(self):
        return float(self.rejected_mask.mean())

    @property
    def usable(self):
        return self.rejection_ratio <= 0.5

    @property
    def kept_samples(self):
        return self.trial.samples[~self.rejected_mask]

    @classmethod
    def unmasked(cls, trial):
        return cls(trial, np.zeros(trial.n_samples, dtype=bool))


def robust_z(samples):
    """Per-channel |x - median| / (1.4826 MAD).

    A channel with zero MAD is treated as saturated: every sample scores inf.
    """
    x = np.asarray(samples, dtype=float)
    med = np.median(x, axis=0)
    mad = np.median(np.abs(x - med), axis=0) * MAD_TO_SIGMA
    z = np.full(x.shape, np.inf)
    ok = mad > 0
    z[:, ok] = np.abs(x[:, ok] - med[ok]) / mad[ok]
    return z


def reject_artifacts(trial, z_thresh=5.0, guard=2, strict=True):
    """Mask samples whose robust z-score exceeds ``z_thresh`` on any channel.

    Each flagged sample is widened by ``guard`` samples on either side.
    Raises :class:`UnusableTrialError` when more than half the trial is
    masked, unless ``strict`` is false.
    """
    flagged = np.any(robust_z(trial.samples) > z_thresh, axis=1)
    if guard > 0 and flagged.any():
        flagged = ndimage.binary_dilation(flagged, iterations=guard)
    clean = CleanTrial(trial, flagged)
    if strict and not clean.usable:
        raise UnusableTrialError(
            f"trial {trial.trial_id}: rejection ratio {clean.rejection_ratio:.2f} > 0.5")
    if clean.rejection_ratio > 0:
        log.debug("trial %s: masked %.3f of samples", trial.trial_id, clean.rejection_ratio)
    return clean


def segment_intervals(trial, interval_s):
    """Split a trial into contiguous, non-overlapping segments of ``interval_s``."""
    exact = interval_s * trial.sample_rate
    seg_len = int(round(exact))
    if seg_len < 1 or abs(exact - seg_len) > 1e-6 or trial.n_samples % seg_len:
        raise ValueError(f"interval {interval_s} s does not divide the "
                         f"{trial.duration_s} s trial")
    n_seg = trial.n_samples // seg_len
    return [
        EegTrial(trial.subject_id, f"{trial.trial_id}#{k}",
                 trial.samples[k * seg_len:(k + 1) * seg_len], seg_len / trial.sample_rate,
                 trial.sample_rate)
        for k in range(n_seg)
    ]


def segment_clean(clean, interval_s):
    """Segment a masked trial, carrying each segment's slice of the mask."""
    parts = segment_intervals(clean.trial, interval_s)
    n = parts[0].n_samples
    return [CleanTrial(p, clean.rejected_mask[k * n:(k + 1) * n]) for k, p in enumerate(parts)]
