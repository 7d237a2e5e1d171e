"""Per-trial feature assembly for the attention (flat) and hazard (trend) tasks.

EEG block: 91 channel-pair entropy features followed by the 4096-dim
embedding of the trial's RGB scalp map.  Face block: 90 landmark-geometry
statistics followed by 3 x 4096 embedding statistics (mean, p95, std) over
the face crops.  The fused block is EEG then face.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import face, info
from .config import PipelineConfig
from .embeddings import (EMBED_DIM, FileEmbedder, PseudoEmbedder, embed_trial_frames)
from .face import FeatureMissingError
from .preproc import (InsufficientSamplesError, UnusableTrialError, bandpass_filter,
                      reject_artifacts, segment_clean)
from .session import load_eeg_trial, load_landmarks
from .topomap import BandSpec, band_power_map, scalp_image

log = logging.getLogger(__name__)

MODALITIES = ("eeg", "face", "fused")
EEG_DIM = len(info.PAIRS) + EMBED_DIM
FACE_DIM = 3 * len(face.CATALOG) + 3 * EMBED_DIM

# trial-level problems that drop the trial from a modality instead of aborting
_SKIPPABLE = (UnusableTrialError, InsufficientSamplesError, FeatureMissingError)


def make_provider(cfg):
    if cfg.provider == "file":
        if not cfg.embeddings_path:
            raise ValueError("provider 'file' needs embeddings_path")
        return FileEmbedder.load(cfg.embeddings_path)
    return PseudoEmbedder(cfg.provider_seed)


def _trial_provider(entry, provider):
    """A trial's own embedding file overrides the shared provider."""
    if entry is not None and entry.embeddings_path is not None:
        return FileEmbedder.load(entry.embeddings_path)
    return provider


def feature_names(modality, cfg=PipelineConfig()):
    eeg = info.pair_names(cfg.pair_mode) + [f"eeg_embed:{k}" for k in range(EMBED_DIM)]
    fc = face.feature_names() + [f"face_embed:{s}:{k}" for s in face.STAT_NAMES
                                 for k in range(EMBED_DIM)]
    return {"eeg": eeg, "face": fc, "fused": eeg + fc}[modality]


def feature_catalog(modality, cfg=PipelineConfig()):
    return {
        "modality": modality,
        "dim": len(feature_names(modality, cfg)),
        "face_catalog_version": face.CATALOG_VERSION,
        "pair_mode": cfg.pair_mode,
        "n_bins": cfg.n_bins,
        "names": feature_names(modality, cfg),
    }


# ---------------------------------------------------------------------------
# Single-window extractors

def clean_eeg(trial, cfg):
    return reject_artifacts(bandpass_filter(trial, cfg.filter_spec), cfg.z_thresh)


def eeg_window_features(clean, cfg, provider, key):
    pairs = info.pairwise_features(clean, cfg.discretization, cfg.pair_mode)
    powers = band_power_map(clean, BandSpec(), nperseg=min(128, clean.trial.n_samples))
    image = scalp_image(powers)
    emb = provider.embed(image.pixels, key=key)
    return np.concatenate([pairs, emb])


def face_window_features(frames, provider, key_prefix):
    valid = [(k, f) for k, f in frames if f.valid]
    geo = face.trial_statistics(face.track_frame_features([f for _, f in valid]))
    images = face.face_rasters([f for _, f in valid])
    keys = [f"{key_prefix}/{k}" for k, _ in valid]
    if isinstance(provider, PseudoEmbedder):
        emb = embed_trial_frames(images, provider)
    else:
        emb = embed_trial_frames(images, provider, keys=keys)
    return np.concatenate([geo, emb])


# ---------------------------------------------------------------------------
# Feature sets

@dataclass
class FeatureSet:
    """Rows of per-trial features with their bookkeeping."""

    modality: str
    values: np.ndarray
    trial_ids: list
    subject_ids: list
    labels: np.ndarray
    excluded: dict = field(default_factory=dict)
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")

    def __len__(self):
        return len(self.trial_ids)

    @staticmethod
    def _npz(path):
        path = Path(path)
        return path if path.suffix == ".npz" else path.with_name(path.name + ".npz")

    def save(self, path):
        path = self._npz(path)
        np.savez(path, values=self.values, labels=self.labels,
                 trial_ids=np.array(self.trial_ids), subject_ids=np.array(self.subject_ids))
        meta = {"modality": self.modality, "excluded": self.excluded,
                "provenance": self.provenance}
        path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path):
        path = cls._npz(path)
        with np.load(path) as z:
            values, labels = z["values"], z["labels"]
            tids, sids = [str(t) for t in z["trial_ids"]], [str(s) for s in z["subject_ids"]]
        meta = json.loads(path.with_suffix(".meta.json").read_text())
        return cls(meta["modality"], values, tids, sids, labels, meta["excluded"],
                   meta["provenance"])


def fuse_feature_sets(eeg, face_set):
    """Concatenate EEG and face rows (EEG block first) for trials present in both."""
    if eeg.modality != "eeg" or face_set.modality != "face":
        raise ValueError("fuse_feature_sets expects an eeg set and a face set")
    pos = {t: k for k, t in enumerate(face_set.trial_ids)}
    keep = [k for k, t in enumerate(eeg.trial_ids) if t in pos]
    excluded = dict(eeg.excluded)
    excluded.update(face_set.excluded)
    for t in eeg.trial_ids:
        if t not in pos and t not in excluded:
            excluded[t] = "face: missing"
    for t in face_set.trial_ids:
        if t not in set(eeg.trial_ids) and t not in excluded:
            excluded[t] = "eeg: missing"
    if not keep:
        raise ValueError("no trials common to both modalities")
    values = np.concatenate([eeg.values[keep],
                             face_set.values[[pos[eeg.trial_ids[k]] for k in keep]]], axis=-1)
    prov = [list(p) for p in eeg.provenance]
    prov += [list(p) for p in face_set.provenance if list(p) not in prov]
    return FeatureSet("fused", values, [eeg.trial_ids[k] for k in keep],
                      [eeg.subject_ids[k] for k in keep], eeg.labels[keep],
                      dict(sorted(excluded.items())), prov)


def _provenance(cfg, provider):
    return [["mi-features", f"{cfg.pair_mode}/bins={cfg.n_bins}"],
            ["eeg-preproc", f"bp={cfg.low_hz}-{cfg.high_hz}/order={cfg.filter_order}"
                            f"/z={cfg.z_thresh}"],
            ["face-geometry", face.CATALOG_VERSION],
            ["embeddings", getattr(provider, "provider_id", type(provider).__name__)]]


def _assemble(blocks, manifest, modality, excluded, cfg, provider):
    rows, tids, sids, labels = [], [], [], []
    for entry in manifest.trials:
        tid = entry.trial_id
        if tid in excluded:
            continue
        if modality == "fused":
            rows.append(np.concatenate([blocks["eeg"][tid], blocks["face"][tid]], axis=-1))
        else:
            rows.append(blocks[modality][tid])
        tids.append(tid)
        sids.append(entry.subject_id)
        labels.append(entry.label.cls)
    if not rows:
        raise ValueError(f"no usable trials for modality {modality!r}")
    return FeatureSet(modality, np.stack(rows), tids, sids, labels, excluded,
                      _provenance(cfg, provider))


def _extract(manifest, modality, cfg, provider, per_trial):
    if modality not in MODALITIES:
        raise ValueError(f"modality must be one of {MODALITIES}")
    provider = provider if provider is not None else make_provider(cfg)
    needed = ("eeg", "face") if modality == "fused" else (modality,)
    blocks = {m: {} for m in needed}
    excluded = {}
    for entry in manifest.trials:
        prov = _trial_provider(entry, provider)
        for m in needed:
            try:
                blocks[m][entry.trial_id] = per_trial(entry, m, prov)
            except _SKIPPABLE as exc:
                excluded[entry.trial_id] = f"{m}: {exc}"
                log.warning("excluding trial %s from %s: %s", entry.trial_id, modality, exc)
                break
    return _assemble(blocks, manifest, modality, excluded, cfg, provider)


def assemble_attention_features(manifest, modality, provider=None, cfg=PipelineConfig()):
    """One flat feature row per trial (whole-trial windows)."""

    def per_trial(entry, m, prov):
        if m == "eeg":
            clean = clean_eeg(load_eeg_trial(entry), cfg)
            return eeg_window_features(clean, cfg, prov, f"{entry.trial_id}/eeg")
        track = load_landmarks(entry)
        return face_window_features(list(enumerate(track.frames)), prov,
                                    f"{entry.trial_id}/face")

    return _extract(manifest, modality, cfg, provider, per_trial)


def assemble_hazard_sequences(manifest, modality, interval_s=None, provider=None,
                              cfg=PipelineConfig()):
    """Per-interval feature rows: ``values`` has shape (n_trials, N, dim).

    The reduction to 60 dimensions happens inside each cross-validation fold
    (see :func:`drivecog.evaluation.reduce_sequences`).
    """
    interval_s = cfg.interval_s if interval_s is None else interval_s
    if manifest.task == "hazard" and any(t.duration_s != 2.0 for t in manifest.trials):
        raise ValueError("hazard trials must all last 2.0 s")

    def per_trial(entry, m, prov):
        if m == "eeg":
            clean = clean_eeg(load_eeg_trial(entry), cfg)
            parts = segment_clean(clean, interval_s)
            return np.stack([eeg_window_features(p, cfg, prov, f"{entry.trial_id}/eeg/{k}")
                             for k, p in enumerate(parts)])
        track = load_landmarks(entry)
        n_steps = int(round(entry.duration_s / interval_s))
        if abs(n_steps * interval_s - entry.duration_s) > 1e-9:
            raise ValueError(f"interval {interval_s} s does not divide {entry.duration_s} s")
        indexed = list(enumerate(track.frames))
        steps = []
        for k in range(n_steps):
            t0, t1 = k * interval_s, (k + 1) * interval_s
            window = [(i, f) for i, f in indexed if t0 <= f.timestamp_s < t1]
            steps.append(face_window_features(window, prov, f"{entry.trial_id}/face"))
        return np.stack(steps)

    return _extract(manifest, modality, cfg, provider, per_trial)
