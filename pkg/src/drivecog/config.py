"""Pipeline configuration and its fingerprint."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .info import DiscretizationSpec
from .learners.lstm import SgdmConfig
from .preproc import FilterSpec


@dataclass(frozen=True)
class PipelineConfig:
    # preprocessing
    low_hz: float = 4.0
    high_hz: float = 45.0
    filter_order: int = 4
    z_thresh: float = 5.0
    # channel-pair features: "conditional" (H(ch_j | ch_i)) or "mi"
    n_bins: int = 8
    pair_mode: str = "conditional"
    # embeddings: "pseudo" or "file"
    provider: str = "pseudo"
    provider_seed: int = 0
    embeddings_path: str | None = None
    # flat path
    pca_dim: int = 30
    elm_hidden: int = 500
    elm_ridge: float = 1e-6
    # trend path
    interval_s: float = 0.5
    seq_pca_dim: int = 60
    lstm_hidden: tuple = (200, 100)
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 60
    batch_size: int = 8
    clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lstm_hidden", tuple(int(h) for h in self.lstm_hidden))
        if self.pair_mode not in ("conditional", "mi"):
            raise ValueError(f"pair_mode must be 'conditional' or 'mi', got {self.pair_mode!r}")
        if self.provider not in ("pseudo", "file"):
            raise ValueError(f"provider must be 'pseudo' or 'file', got {self.provider!r}")

    @property
    def filter_spec(self):
        return FilterSpec(self.low_hz, self.high_hz, self.filter_order)

    @property
    def discretization(self):
        return DiscretizationSpec(self.n_bins)

    def sgdm(self, seed=None):
        return SgdmConfig(self.learning_rate, self.momentum, self.epochs, self.batch_size,
                          self.clip_norm, self.seed if seed is None else seed)

    def to_dict(self):
        d = asdict(self)
        d["lstm_hidden"] = list(self.lstm_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def update(self, **overrides):
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def canonical(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self):
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:16]
