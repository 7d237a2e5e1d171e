"""Seeded synthetic sessions standing in for human-subject recordings.

Every trial draws a scalar latent ``z = class_separation * (y - 1/2) + N(0, 1)``
that drives three class signals:

* occipital alpha amplitude (O1, O2 strongly, P7, P8 weakly) scales with exp(z),
* the frontal channel pairs mix in a shared broadband source with weight
  rho = sigmoid(z) (variance-preserving, so only their correlation changes),
* the eyebrows rise relative to the eyes in proportion to z.

With ``signal="level"`` these effects are constant over the trial.  With
``signal="drift"`` they ramp linearly from -z to +z across the trial, so
whole-trial averages carry no class information and only the temporal
trend does.  Subjects differ by random alpha gain and frequency, channel
gains, face shape and face-box size.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .session import (CHANNELS, HAZARD_DURATION_S, N_LANDMARKS, SAMPLE_RATE, TASK_LABELS,
                      EegTrial, LandmarkFrame, LandmarkTrack, load_manifest, write_manifest,
                      LANDMARK_HEADER, MANIFEST_FORMAT, MANIFEST_VERSION)

FPS = 10
HIGH_SEPARATION = 6.0
MID_SEPARATION = 2.0

ALPHA_GAIN = 0.35
COUPLING_GAIN = 1.0
BROW_GAIN = 0.012

# normalized face template (x, y in face-box units), see face.LANDMARK_NAMES
_TEMPLATE = np.array(
    [[0.20, 0.30], [0.25, 0.27], [0.31, 0.26], [0.37, 0.27], [0.43, 0.29],    # brow r
     [0.57, 0.29], [0.63, 0.27], [0.69, 0.26], [0.75, 0.27], [0.80, 0.30],    # brow l
     [0.50, 0.38], [0.50, 0.45], [0.50, 0.52], [0.50, 0.58],                  # bridge
     [0.43, 0.62], [0.46, 0.63], [0.50, 0.64], [0.54, 0.63], [0.57, 0.62],    # base
     [0.27, 0.40], [0.31, 0.38], [0.36, 0.38], [0.40, 0.40], [0.36, 0.42], [0.31, 0.42],
     [0.60, 0.40], [0.64, 0.38], [0.69, 0.38], [0.73, 0.40], [0.69, 0.42], [0.64, 0.42],
     [0.37, 0.75], [0.41, 0.72], [0.46, 0.71], [0.50, 0.72], [0.54, 0.71], [0.59, 0.72],
     [0.63, 0.75], [0.59, 0.79], [0.54, 0.81], [0.50, 0.81], [0.46, 0.81], [0.41, 0.79],
     [0.40, 0.75], [0.46, 0.74], [0.54, 0.74], [0.60, 0.75], [0.54, 0.77], [0.46, 0.77]])
_BROWS = np.arange(10)

_FRONTAL_PAIRS = (("AF3", "AF4"), ("F3", "F4"), ("F7", "F8"), ("FC5", "FC6"))
_OCCIPITAL = {"O1": 1.0, "O2": 1.0, "P7": 0.4, "P8": 0.4}


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 12
    trials_per_subject: int = 15
    task: str = "attention"
    class_separation: float = HIGH_SEPARATION
    seed: int = 0
    duration_s: float | None = None
    signal: str = "level"
    invalid_frame_rate: float = 0.02

    def __post_init__(self):
        if self.n_subjects < 2:
            raise ValueError("need at least 2 subjects")
        if self.trials_per_subject < 1:
            raise ValueError("need at least 1 trial per subject")
        if self.task not in TASK_LABELS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.class_separation < 0:
            raise ValueError("class_separation must be >= 0")
        if self.signal not in ("level", "drift"):
            raise ValueError("signal must be 'level' or 'drift'")
        if self.task == "hazard" and self.duration_s not in (None, HAZARD_DURATION_S):
            raise ValueError(f"hazard trials last exactly {HAZARD_DURATION_S} s")
        if self.duration_s is not None and self.duration_s < 1.0:
            raise ValueError("duration_s must be >= 1.0")


@dataclass(frozen=True)
class SynthTrial:
    subject_id: str
    trial_id: str
    label: str
    latent: float
    eeg: EegTrial
    landmarks: LandmarkTrack


def _quantize(a, decimals=3):
    """Round through the decimal text form so written files reload bit-exactly.

    Returns the text of every element (flat list) and the parsed values.
    """
    a = np.asarray(a, dtype=float)
    fmt = f"%.{decimals}f"
    text = [fmt % x for x in a.ravel().tolist()]
    return text, np.array(list(map(float, text))).reshape(a.shape)


def _pink_noise(rng, n, n_ch):
    spec = np.fft.rfft(rng.standard_normal((n, n_ch)), axis=0)
    f = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
    shape = np.where(f > 0, 1.0 / np.sqrt(np.maximum(f, 1.0)), 0.0)
    x = np.fft.irfft(spec * shape[:, None], n=n, axis=0)
    return x / x.std(axis=0, keepdims=True)


def _broadband(rng, n, lo=4.0, hi=30.0):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
    spec[(f < lo) | (f > hi)] = 0.0
    x = np.fft.irfft(spec, n=n)
    return x / (x.std() + 1e-12)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _subject_params(rng):
    return {
        "alpha_gain": float(np.exp(rng.normal(0.0, 0.2))),
        "alpha_freq": float(rng.uniform(9.0, 11.0)),
        "channel_gain": np.exp(rng.normal(0.0, 0.1, len(CHANNELS))),
        "face_shape": rng.normal(0.0, 0.008, _TEMPLATE.shape),
        "box_size": float(rng.uniform(180.0, 260.0)),
        "box_origin": rng.uniform([300.0, 80.0], [700.0, 140.0]),
    }


def _eeg(rng, subj, z, duration_s, signal):
    n = int(round(duration_s * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    ramp = np.linspace(-1.0, 1.0, n) if signal == "drift" else np.ones(n)
    zt = z * ramp
    x = 6.0 * _pink_noise(rng, n, len(CHANNELS))
    for freq, amp in ((6.0, 2.0), (subj["alpha_freq"], 2.5), (20.0, 1.5)):
        ph = rng.uniform(0, 2 * np.pi, len(CHANNELS))
        x += amp * np.sin(2 * np.pi * freq * t[:, None] + ph)
    alpha = np.sin(2 * np.pi * (subj["alpha_freq"] + rng.normal(0, 0.2)) * t
                   + rng.uniform(0, 2 * np.pi))
    amp = 6.0 * subj["alpha_gain"] * np.exp(ALPHA_GAIN * zt)
    for ch, w in _OCCIPITAL.items():
        x[:, CHANNELS.index(ch)] += w * amp * alpha
    # variance-preserving mix: the class changes the correlation, not the power
    rho = _sigmoid(COUPLING_GAIN * zt)
    for a, b in _FRONTAL_PAIRS:
        s = _broadband(rng, n)
        for ch in (CHANNELS.index(a), CHANNELS.index(b)):
            x[:, ch] = np.sqrt(1.0 - rho) * x[:, ch] + np.sqrt(rho) * x[:, ch].std() * s
    return x * subj["channel_gain"]


def _landmarks(rng, subj, z, duration_s, signal, invalid_rate):
    n = int(np.floor(duration_s * FPS))
    u = np.linspace(-1.0, 1.0, n) if signal == "drift" else np.ones(n)
    base = _TEMPLATE + subj["face_shape"]
    frames = []
    for k in range(n):
        size = subj["box_size"] * (1.0 + rng.normal(0, 0.01))
        origin = subj["box_origin"] + rng.normal(0, 2.0, 2)
        pts = base + rng.normal(0.0, 0.003, base.shape)
        pts[_BROWS, 1] -= BROW_GAIN * z * u[k]
        valid = rng.random() >= invalid_rate
        frames.append(LandmarkFrame(k / FPS, (origin[0], origin[1], size, size),
                                    origin + pts * size, valid))
    return frames


def _labels(rng, n, task):
    names = TASK_LABELS[task]
    return [names[c] for c in rng.permutation([i % 2 for i in range(n)])]


def synth_session(cfg):
    """Generate all trials in memory, quantized exactly as they are written to disk."""
    root = np.random.SeedSequence(cfg.seed)
    subj_seqs = root.spawn(cfg.n_subjects)
    out = []
    for s_idx, sseq in enumerate(subj_seqs):
        sid = f"S{s_idx + 1:02d}"
        srng = np.random.default_rng(sseq.spawn(1)[0])
        subj = _subject_params(srng)
        labels = _labels(srng, cfg.trials_per_subject, cfg.task)
        for t_idx, tseq in enumerate(sseq.spawn(cfg.trials_per_subject)):
            rng = np.random.default_rng(tseq)
            tid = f"{sid}-T{t_idx:03d}"
            y = TASK_LABELS[cfg.task].index(labels[t_idx])
            z = cfg.class_separation * (y - 0.5) + rng.normal()
            if cfg.task == "hazard":
                dur = HAZARD_DURATION_S
            elif cfg.duration_s is not None:
                dur = float(cfg.duration_s)
            else:
                dur = float(rng.integers(14, 106))
            _, eeg = _quantize(_eeg(rng, subj, z, dur, cfg.signal))
            raw = _landmarks(rng, subj, z, dur, cfg.signal, cfg.invalid_frame_rate)
            _, table = _quantize(_landmark_rows(raw))
            frames = [LandmarkFrame(float(r[0]), tuple(map(float, r[1:5])),
                                    r[5:].reshape(N_LANDMARKS, 2), f.valid)
                      for r, f in zip(table, raw)]
            out.append(SynthTrial(sid, tid, labels[t_idx], float(z),
                                  EegTrial(sid, tid, eeg, dur), LandmarkTrack(frames)))
    return out


def _landmark_rows(frames):
    """(n_frames, 1 + 4 + 98) table: timestamp, face box, flattened points."""
    return np.array([np.concatenate([[f.timestamp_s], f.face_box, np.ravel(f.points)])
                     for f in frames]).reshape(len(frames), 5 + 2 * N_LANDMARKS)


def _csv_rows(text, n_cols):
    return [",".join(text[k:k + n_cols]) for k in range(0, len(text), n_cols)]


def _eeg_text(samples):
    text, _ = _quantize(samples)
    return ",".join(CHANNELS) + "\n" + "\n".join(_csv_rows(text, len(CHANNELS))) + "\n"


def _landmark_text(track):
    n_cols = 5 + 2 * N_LANDMARKS
    text, _ = _quantize(_landmark_rows(track.frames))
    rows = [",".join(LANDMARK_HEADER)]
    for r, f in zip(_csv_rows(text, n_cols), track.frames):
        ts, rest = r.split(",", 1)
        rows.append(f"{ts},{'1' if f.valid else '0'},{rest}")
    return "\n".join(rows) + "\n"


def synth_dataset(cfg, out_dir):
    """Write EEG CSVs, landmark CSVs, ``manifest.json`` and ``synth_truth.json``.

    Returns the loaded, validated manifest.  Output is byte-identical for a
    fixed configuration.
    """
    out = Path(out_dir)
    (out / "eeg").mkdir(parents=True, exist_ok=True)
    (out / "face").mkdir(parents=True, exist_ok=True)
    trials = synth_session(cfg)
    entries, truth = [], {}
    for tr in trials:
        eeg_rel = f"eeg/{tr.trial_id}.csv"
        lm_rel = f"face/{tr.trial_id}.csv"
        (out / eeg_rel).write_text(_eeg_text(tr.eeg.samples), encoding="ascii")
        (out / lm_rel).write_text(_landmark_text(tr.landmarks), encoding="ascii")
        entries.append({"subject_id": tr.subject_id, "trial_id": tr.trial_id,
                        "eeg_path": eeg_rel, "landmarks_path": lm_rel,
                        "embeddings_path": None, "label": tr.label,
                        "duration_s": tr.eeg.duration_s})
        truth[tr.trial_id] = tr.latent
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "task": cfg.task,
        "sample_rate": SAMPLE_RATE,
        "dataset_seed": int(cfg.seed),
        "subjects": sorted({t.subject_id for t in trials}),
        "trials": entries,
    }
    write_manifest(manifest, out / "manifest.json")
    (out / "synth_truth.json").write_text(
        json.dumps({"config": asdict(cfg), "latent": truth}, indent=2, sort_keys=True) + "\n")
    return load_manifest(out / "manifest.json")


def load_truth(out_dir):
    return json.loads((Path(out_dir) / "synth_truth.json").read_text())
