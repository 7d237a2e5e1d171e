"""Dataset schema: channel layout, trials, landmark tracks and session manifests.

A session manifest is a UTF-8 JSON file::

    {
      "format": "drivecog-manifest",
      "version": 1,
      "task": "attention" | "hazard",
      "sample_rate": 128,
      "dataset_seed": 7,              # optional, null for recorded data
      "subjects": ["S01", ...],
      "trials": [
        {"subject_id": "S01", "trial_id": "S01-T00",
         "eeg_path": "eeg/S01-T00.csv", "landmarks_path": "face/S01-T00.csv",
         "embeddings_path": null, "label": "high", "duration_s": 4.0},
        ...
      ]
    }

Paths are relative to the manifest's directory.  Labels are ``low``/``high``
for the attention task and ``non_hazardous``/``hazardous`` for the hazard
task; they map to classes 0/1 in that order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SAMPLE_RATE = 128
N_LANDMARKS = 49
MIN_FACE_SIZE = 50.0
HAZARD_DURATION_S = 2.0

CHANNELS = ("AF3", "AF4", "F3", "F4", "F7", "F8", "FC5", "FC6",
            "P7", "P8", "T7", "T8", "O1", "O2")

# Azimuthal-equidistant projection of the spherical 10-20 positions
# (polar angle from Cz, azimuth), radius = polar angle / 100 deg.
# x points to the right ear, y to the nose.
_POSITIONS_2D = {
    "AF3": (-0.312738, 0.670668),
    "AF4": (0.312738, 0.670668),
    "F3": (-0.377592, 0.466288),
    "F4": (0.377592, 0.466288),
    "F7": (-0.744296, 0.540762),
    "F8": (0.744296, 0.540762),
    "FC5": (-0.672178, 0.258025),
    "FC6": (0.672178, 0.258025),
    "P7": (-0.744296, -0.540762),
    "P8": (0.744296, -0.540762),
    "T7": (-0.92, 0.0),
    "T8": (0.92, 0.0),
    "O1": (-0.284296, -0.874972),
    "O2": (0.284296, -0.874972),
}

TASK_LABELS = {
    "attention": ("low", "high"),
    "hazard": ("non_hazardous", "hazardous"),
}

MANIFEST_FORMAT = "drivecog-manifest"
MANIFEST_VERSION = 1


class ManifestError(ValueError):
    """Schema or content error in a manifest or one of the files it references."""

    def __init__(self, message, trial_id=None, field=None):
        self.trial_id = trial_id
        self.field = field
        where = []
        if trial_id is not None:
            where.append(f"trial {trial_id!r}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelLayout:
    names: tuple
    positions_2d: np.ndarray

    def __post_init__(self):
        pos = _frozen(self.positions_2d)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "positions_2d", pos)
        if self.names != CHANNELS:
            raise ValueError(f"channel names must be {CHANNELS}, got {self.names}")
        if pos.shape != (len(CHANNELS), 2):
            raise ValueError(f"positions must be (14, 2), got {pos.shape}")
        if np.any(np.sum(pos ** 2, axis=1) > 1.0):
            raise ValueError("electrode positions must lie inside the unit head disk")
        d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
        if np.any(d[np.triu_indices(len(CHANNELS), 1)] == 0.0):
            raise ValueError("electrode positions must be pairwise distinct")

    def index(self, name):
        return self.names.index(name)


def default_layout():
    return ChannelLayout(CHANNELS, [_POSITIONS_2D[c] for c in CHANNELS])


@dataclass(frozen=True)
class EegTrial:
    """Immutable multichannel EEG recording, samples in microvolts.

    ``samples`` has shape (n_samples, 14) in canonical channel order.
    """

    subject_id: str
    trial_id: str
    samples: np.ndarray
    duration_s: float
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        s = _frozen(self.samples)
        object.__setattr__(self, "samples", s)
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"sample_rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")
        if s.ndim != 2 or s.shape[1] != len(CHANNELS):
            raise ValueError(f"samples must be (n, 14), got {s.shape}")
        if s.shape[0] != round(self.duration_s * self.sample_rate):
            raise ValueError(
                f"{s.shape[0]} samples do not match duration {self.duration_s} s "
                f"at {self.sample_rate} Hz")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples contain non-finite values")

    @property
    def n_samples(self):
        return self.samples.shape[0]

    def replace_samples(self, samples, duration_s=None):
        return EegTrial(self.subject_id, self.trial_id, samples,
                        self.duration_s if duration_s is None else duration_s,
                        self.sample_rate)


@dataclass(frozen=True)
class LandmarkFrame:
    timestamp_s: float
    face_box: tuple
    points: np.ndarray
    valid: bool = True

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points))
        object.__setattr__(self, "face_box", tuple(float(v) for v in self.face_box))
        if self.valid:
            if self.points.shape != (N_LANDMARKS, 2):
                raise ValueError(f"valid frame needs 49 points, got {self.points.shape}")
            _, _, w, h = self.face_box
            if w < MIN_FACE_SIZE or h < MIN_FACE_SIZE:
                raise ValueError(f"face box {w}x{h} below {MIN_FACE_SIZE:g}x{MIN_FACE_SIZE:g}")
            if not np.all(np.isfinite(self.points)):
                raise ValueError("landmarks contain non-finite values")


@dataclass(frozen=True)
class LandmarkTrack:
    frames: tuple

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        ts = [f.timestamp_s for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("landmark timestamps must be strictly increasing")

    @property
    def valid_frames(self):
        return [f for f in self.frames if f.valid]

    def between(self, t0, t1):
        """Frames with ``t0 <= timestamp < t1``."""
        return LandmarkTrack([f for f in self.frames if t0 <= f.timestamp_s < t1])


@dataclass(frozen=True)
class TrialLabel:
    task: str
    value: str

    def __post_init__(self):
        if self.task not in TASK_LABELS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.value not in TASK_LABELS[self.task]:
            raise ValueError(
                f"label {self.value!r} invalid for task {self.task!r}; "
                f"expected one of {TASK_LABELS[self.task]}")

    @property
    def cls(self):
        return TASK_LABELS[self.task].index(self.value)


@dataclass(frozen=True)
class TrialEntry:
    subject_id: str
    trial_id: str
    eeg_path: Path
    landmarks_path: Path
    label: TrialLabel
    duration_s: float
    embeddings_path: Path | None = None


@dataclass(frozen=True)
class SessionManifest:
    task: str
    subjects: tuple
    trials: tuple
    root: Path
    dataset_seed: int | None = None
    path: Path | None = None

    def trials_for(self, subject_id):
        return [t for t in self.trials if t.subject_id == subject_id]

    def trial_counts(self):
        counts = {s: 0 for s in self.subjects}
        for t in self.trials:
            counts[t.subject_id] += 1
        return counts

    def entry(self, trial_id):
        for t in self.trials:
            if t.trial_id == trial_id:
                return t
        raise KeyError(trial_id)


# ---------------------------------------------------------------------------
# Manifest I/O

_TRIAL_FIELDS = ("subject_id", "trial_id", "eeg_path", "landmarks_path", "label", "duration_s")


def _parse_trial(raw, task, root, subjects):
    tid = raw.get("trial_id") if isinstance(raw, dict) else None
    if not isinstance(raw, dict):
        raise ManifestError("trial entry must be an object")
    for f in _TRIAL_FIELDS:
        if f not in raw:
            raise ManifestError("missing required field", tid, f)
    if not isinstance(tid, str) or not tid:
        raise ManifestError("trial_id must be a non-empty string", tid, "trial_id")
    sid = raw["subject_id"]
    if not isinstance(sid, str) or not sid:
        raise ManifestError("subject_id must be a non-empty string", tid, "subject_id")
    if sid not in subjects:
        raise ManifestError(f"subject {sid!r} not declared in subjects", tid, "subject_id")
    try:
        label = TrialLabel(task, raw["label"])
    except ValueError as exc:
        raise ManifestError(str(exc), tid, "label") from None
    dur = raw["duration_s"]
    if not isinstance(dur, (int, float)) or isinstance(dur, bool) or not math.isfinite(dur):
        raise ManifestError("duration_s must be a finite number", tid, "duration_s")
    dur = float(dur)
    if dur < 1.0:
        raise ManifestError(f"duration {dur} s below the 1.0 s minimum", tid, "duration_s")
    if task == "hazard" and dur != HAZARD_DURATION_S:
        raise ManifestError(
            f"hazard trials must last exactly {HAZARD_DURATION_S} s, got {dur}", tid, "duration_s")
    paths = {}
    for f in ("eeg_path", "landmarks_path", "embeddings_path"):
        p = raw.get(f)
        if p is None:
            if f == "embeddings_path":
                paths[f] = None
                continue
            raise ManifestError("path must be a string", tid, f)
        if not isinstance(p, str):
            raise ManifestError("path must be a string", tid, f)
        full = root / p
        if not full.is_file():
            raise ManifestError(f"file not found: {full}", tid, f)
        paths[f] = full
    return TrialEntry(sid, tid, paths["eeg_path"], paths["landmarks_path"], label, dur,
                      paths["embeddings_path"])


def parse_manifest(data, root, path=None, check_files=True):
    """Validate a decoded manifest dictionary.

    With ``check_files`` every referenced EEG and landmark file is parsed
    eagerly, so a manifest that loads is fully usable.
    """
    root = Path(root)
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a JSON object")
    if data.get("format", MANIFEST_FORMAT) != MANIFEST_FORMAT:
        raise ManifestError(f"unknown format {data.get('format')!r}", field="format")
    task = data.get("task")
    if task not in TASK_LABELS:
        raise ManifestError(f"task must be one of {sorted(TASK_LABELS)}", field="task")
    if data.get("sample_rate", SAMPLE_RATE) != SAMPLE_RATE:
        raise ManifestError(f"sample_rate must be {SAMPLE_RATE}", field="sample_rate")
    subjects = data.get("subjects")
    if not isinstance(subjects, list) or not subjects:
        raise ManifestError("subjects must be a non-empty list", field="subjects")
    if any(not isinstance(s, str) or not s for s in subjects):
        raise ManifestError("subject ids must be non-empty strings", field="subjects")
    if len(set(subjects)) != len(subjects):
        raise ManifestError("duplicate subject id", field="subjects")
    raw_trials = data.get("trials")
    if not isinstance(raw_trials, list) or not raw_trials:
        raise ManifestError("trials must be a non-empty list", field="trials")
    seed = data.get("dataset_seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise ManifestError("dataset_seed must be an integer or null", field="dataset_seed")

    trials, seen = [], set()
    for raw in raw_trials:
        entry = _parse_trial(raw, task, root, set(subjects))
        if entry.trial_id in seen:
            raise ManifestError("duplicate trial_id", entry.trial_id, "trial_id")
        seen.add(entry.trial_id)
        trials.append(entry)

    manifest = SessionManifest(task, tuple(subjects), tuple(trials), root, seed, path)
    if check_files:
        for entry in trials:
            load_eeg_trial(entry)
            load_landmarks(entry)
    return manifest


def load_manifest(path, check_files=True):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from None
    return parse_manifest(data, path.parent, path=path, check_files=check_files)


def manifest_to_dict(manifest):
    def rel(p):
        return None if p is None else Path(p).relative_to(manifest.root).as_posix()

    return {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "task": manifest.task,
        "sample_rate": SAMPLE_RATE,
        "dataset_seed": manifest.dataset_seed,
        "subjects": list(manifest.subjects),
        "trials": [
            {
                "subject_id": t.subject_id,
                "trial_id": t.trial_id,
                "eeg_path": rel(t.eeg_path),
                "landmarks_path": rel(t.landmarks_path),
                "embeddings_path": rel(t.embeddings_path),
                "label": t.label.value,
                "duration_s": t.duration_s,
            }
            for t in manifest.trials
        ],
    }


def write_manifest(manifest_dict, path):
    Path(path).write_text(json.dumps(manifest_dict, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# EEG files

def write_eeg_csv(samples, path, decimals=3):
    """Write (n, 14) samples in canonical column order."""
    fmt = f"%.{decimals}f"
    lines = [",".join(CHANNELS)]
    for row in np.asarray(samples):
        lines.append(",".join(fmt % v for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_eeg_trial(entry):
    """Read the EEG CSV of a manifest entry into canonical channel order."""
    tid = entry.trial_id
    try:
        with open(entry.eeg_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ManifestError(f"cannot read EEG file: {exc}", tid, "eeg_path") from None
    if not rows:
        raise ManifestError("empty EEG file", tid, "eeg_path")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in CHANNELS if c not in header]
    extra = [h for h in header if h not in CHANNELS]
    if missing or extra or len(header) != len(CHANNELS):
        raise ManifestError(
            f"wrong channel set: missing {missing}, unexpected {extra}", tid, "eeg_path")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ManifestError(f"unparseable sample: {exc}", tid, "eeg_path") from None
    if data.ndim != 2 or data.shape[1] != len(CHANNELS):
        raise ManifestError("ragged EEG rows", tid, "eeg_path")
    if not np.all(np.isfinite(data)):
        bad = int(np.argwhere(~np.isfinite(data))[0, 0])
        raise ManifestError(f"non-finite sample at row {bad}", tid, "eeg_path")
    expected = round(entry.duration_s * SAMPLE_RATE)
    if data.shape[0] != expected:
        raise ManifestError(
            f"{data.shape[0]} samples, expected {expected} for {entry.duration_s} s",
            tid, "eeg_path")
    order = [header.index(c) for c in CHANNELS]
    return EegTrial(entry.subject_id, tid, data[:, order], entry.duration_s)


# ---------------------------------------------------------------------------
# Landmark files

LANDMARK_HEADER = (["timestamp_s", "valid", "box_x", "box_y", "box_w", "box_h"]
                   + [f"{a}{i}" for i in range(N_LANDMARKS) for a in ("x", "y")])


def write_landmarks_csv(track, path, decimals=3):
    fmt = f"%.{decimals}f"
    lines = [",".join(LANDMARK_HEADER)]
    for f in track.frames:
        vals = [fmt % f.timestamp_s, "1" if f.valid else "0"]
        vals += [fmt % v for v in f.face_box]
        pts = f.points if f.points.shape == (N_LANDMARKS, 2) else np.zeros((N_LANDMARKS, 2))
        vals += [fmt % v for v in pts.ravel()]
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_landmarks(entry):
    tid = entry.trial_id
    try:
        with open(entry.landmarks_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ManifestError(f"cannot read landmark file: {exc}", tid, "landmarks_path") from None
    if not rows or [h.strip() for h in rows[0]] != LANDMARK_HEADER:
        raise ManifestError("landmark header mismatch", tid, "landmarks_path")
    frames = []
    for i, r in enumerate(rows[1:]):
        if not r:
            continue
        try:
            v = [float(x) for x in r]
        except ValueError as exc:
            raise ManifestError(f"row {i}: {exc}", tid, "landmarks_path") from None
        if len(v) != len(LANDMARK_HEADER):
            raise ManifestError(f"row {i}: expected {len(LANDMARK_HEADER)} columns",
                                tid, "landmarks_path")
        valid = v[1] != 0.0
        try:
            frames.append(LandmarkFrame(v[0], tuple(v[2:6]),
                                        np.array(v[6:]).reshape(N_LANDMARKS, 2), valid))
        except ValueError as exc:
            raise ManifestError(f"row {i}: {exc}", tid, "landmarks_path") from None
    try:
        return LandmarkTrack(frames)
    except ValueError as exc:
        raise ManifestError(str(exc), tid, "landmarks_path") from None
