"""Leave-one-subject-out evaluation of the flat (ELM) and trend (LSTM) pipelines.

Every fitted quantity -- normalization ranges, PCA bases, classifier
weights -- is computed from the training fold only.  Each fold carries a
fingerprint of its train/test trial lists so contamination introduced after
fold construction is detected before training.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .learners import (ElmModel, LstmModel, PcaModel, elm_predict, elm_train, lstm_init,
                       lstm_predict, lstm_train, pca_fit, pca_transform)
from .learners.io import read_model_file, write_model_file

# Reported in the source study on human recordings; shown for orientation
# only -- synthetic accuracies are not comparable to these.
PAPER_REFERENCE = {
    "attention": {"eeg": 93.33, "face": 81.67, "fused": 92.78},
    "hazard": {"eeg": 88.41, "face": 82.93, "fused": 90.24},
    "hazard_trend": {"fused": 96.34},
}

RESULTS_FORMAT = "drivecog-loso"
RESULTS_VERSION = 1


class LeakageError(RuntimeError):
    """A fold's training data contains test-subject trials or was altered."""


# ---------------------------------------------------------------------------
# Normalization

@dataclass(frozen=True)
class Normalizer:
    low: np.ndarray
    high: np.ndarray

    @classmethod
    def fit(cls, train):
        train = np.asarray(train, dtype=float)
        if train.shape[0] == 0:
            raise ValueError("cannot fit normalization on an empty training set")
        return cls(train.min(axis=0), train.max(axis=0))

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        span = self.high - self.low
        safe = np.where(span > 0, span, 1.0)
        out = 2.0 * (x - self.low) / safe - 1.0
        out = np.where(span > 0, out, 0.0)
        return np.clip(out, -1.0, 1.0)


def normalize_features(train, apply_to=None):
    """Map each dimension's training [min, max] to [-1, 1].

    Constant training dimensions map to 0 and values outside the training
    range are clipped.  Returns the normalized ``apply_to`` (or ``train``).
    """
    norm = Normalizer.fit(train)
    return norm.apply(train if apply_to is None else apply_to)


# ---------------------------------------------------------------------------
# Folds

def _fold_fingerprint(train_ids, test_ids):
    h = hashlib.sha256()
    h.update("\n".join(train_ids).encode("utf-8"))
    h.update(b"\x00")
    h.update("\n".join(test_ids).encode("utf-8"))
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class Fold:
    test_subject: str
    train_index: tuple
    test_index: tuple
    train_trials: tuple
    test_trials: tuple
    fingerprint: str


def make_folds(trial_ids, subject_ids):
    """One fold per subject, in sorted subject order."""
    subject_ids = list(subject_ids)
    trial_ids = list(trial_ids)
    subjects = sorted(set(subject_ids))
    if len(subjects) < 2:
        raise ValueError(f"leave-one-subject-out needs >= 2 subjects, got {len(subjects)}")
    folds = []
    for s in subjects:
        tr = tuple(i for i, x in enumerate(subject_ids) if x != s)
        te = tuple(i for i, x in enumerate(subject_ids) if x == s)
        tr_ids = tuple(trial_ids[i] for i in tr)
        te_ids = tuple(trial_ids[i] for i in te)
        folds.append(Fold(s, tr, te, tr_ids, te_ids, _fold_fingerprint(tr_ids, te_ids)))
    return folds


def check_fold(fold, trial_ids, subject_ids):
    """Raise :class:`LeakageError` unless the fold is clean and unaltered."""
    train_subjects = {subject_ids[i] for i in fold.train_index}
    test_subjects = {subject_ids[i] for i in fold.test_index}
    shared = sorted(train_subjects & test_subjects)
    if shared:
        raise LeakageError(f"fold {fold.test_subject}: subjects {shared} appear in both "
                           "training and test data")
    tr_ids = tuple(trial_ids[i] for i in fold.train_index)
    te_ids = tuple(trial_ids[i] for i in fold.test_index)
    if set(tr_ids) & set(te_ids):
        raise LeakageError(f"fold {fold.test_subject}: trials shared between train and test")
    if (tr_ids, te_ids) != (fold.train_trials, fold.test_trials) or \
            _fold_fingerprint(tr_ids, te_ids) != fold.fingerprint:
        raise LeakageError(f"fold {fold.test_subject}: train/test lists do not match "
                           "the fold fingerprint")


def fold_seeds(seed, n):
    """Independent per-fold seeds derived from one run seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


# ---------------------------------------------------------------------------
# Trainable pipelines

@dataclass(frozen=True)
class TrainedPipeline:
    """normalize -> PCA -> normalize -> classifier, all fitted on one training set.

    ``learner="elm"`` works on (n, d) rows; ``learner="lstm"`` on (n, N, d)
    sequences, with normalization and PCA fitted on the pooled steps.
    """

    learner: str
    pre: Normalizer
    pca: object
    post: Normalizer
    model: object

    def transform(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        z = pca_transform(self.pca, self.pre.apply(x.reshape(-1, d)))
        return self.post.apply(z).reshape(x.shape[:-1] + (z.shape[-1],))

    def predict(self, x):
        z = self.transform(x)
        if self.learner == "elm":
            return elm_predict(self.model, z)[0]
        return lstm_predict(self.model, z)[0]

    def save(self, path, **meta):
        blocks = {"pre_low": self.pre.low, "pre_high": self.pre.high,
                  "pca_mean": self.pca.mean, "pca_components": self.pca.components,
                  "pca_explained_variance": self.pca.explained_variance,
                  "post_low": self.post.low, "post_high": self.post.high}
        if self.learner == "elm":
            m = self.model
            blocks.update(input_weights=m.input_weights, biases=m.biases,
                          output_weights=m.output_weights)
            meta.update(seed=m.seed, ridge=m.ridge)
        else:
            m = self.model
            blocks.update({f"lstm_{k}": m.params[k] for k in m.param_names()})
            meta.update(seed=m.seed, input_dim=m.input_dim, hidden=list(m.hidden),
                        n_classes=m.n_classes)
        meta.update(learner=self.learner, pca_total_variance=self.pca.total_variance,
                    pca_fitted_on=self.pca.fitted_on)
        write_model_file(path, f"pipeline-{self.learner}", blocks, meta)

    @classmethod
    def load(cls, path):
        kind, b, meta = read_model_file(path)
        if kind not in ("pipeline-elm", "pipeline-lstm"):
            raise ValueError(f"{path}: not a trained pipeline (type {kind!r})")
        pca = PcaModel(b["pca_mean"], b["pca_components"], b["pca_explained_variance"],
                       meta["pca_total_variance"], meta["pca_fitted_on"])
        if meta["learner"] == "elm":
            model = ElmModel(b["input_weights"], b["biases"], b["output_weights"],
                             meta["seed"], meta["ridge"])
        else:
            params = {k[5:]: v for k, v in b.items() if k.startswith("lstm_")}
            model = LstmModel(meta["input_dim"], tuple(meta["hidden"]), params, meta["seed"],
                              meta["n_classes"])
        return cls(meta["learner"], Normalizer(b["pre_low"], b["pre_high"]), pca,
                   Normalizer(b["post_low"], b["post_high"]), model), meta


def fit_pipeline(x, y, cfg=PipelineConfig(), learner="elm", seed=0):
    """Fit the flat (ELM, ``cfg.pca_dim``) or trend (LSTM, ``cfg.seq_pca_dim``) pipeline."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    if learner not in ("elm", "lstm"):
        raise ValueError(f"learner must be 'elm' or 'lstm', got {learner!r}")
    want = 2 if learner == "elm" else 3
    if x.ndim != want:
        raise ValueError(f"learner {learner!r} needs {want}-d features, got shape {x.shape}")
    k = cfg.pca_dim if learner == "elm" else cfg.seq_pca_dim
    rows = x.reshape(-1, x.shape[-1])
    pre = Normalizer.fit(rows)
    pca = pca_fit(pre.apply(rows), k)
    z = pca_transform(pca, pre.apply(rows))
    post = Normalizer.fit(z)
    z = post.apply(z).reshape(x.shape[:-1] + (k,))
    if learner == "elm":
        model = elm_train(z, y, cfg.elm_hidden, seed, cfg.elm_ridge)
    else:
        model = lstm_train(lstm_init(k, cfg.lstm_hidden, seed), z, y, cfg.sgdm(seed))
    return TrainedPipeline(learner, pre, pca, post, model)


def reduce_sequences(train, test, k):
    """Normalize and PCA-reduce per-step features to ``k`` dims, fit on training steps."""
    train = np.asarray(train, dtype=float)
    rows = train.reshape(-1, train.shape[-1])
    pre = Normalizer.fit(rows)
    pca = pca_fit(pre.apply(rows), k)
    post = Normalizer.fit(pca_transform(pca, pre.apply(rows)))
    pipe = TrainedPipeline("lstm", pre, pca, post, None)
    return pipe.transform(train), pipe.transform(test)


# ---------------------------------------------------------------------------
# Reports

@dataclass
class LosoReport:
    task: str
    modality: str
    learner: str
    per_subject: dict
    folds: list
    config: dict
    config_fingerprint: str
    seed: int
    n_trials: int
    excluded: dict = field(default_factory=dict)
    provenance: list = field(default_factory=list)

    @property
    def mean_accuracy(self):
        return float(np.mean(list(self.per_subject.values())))

    def to_dict(self):
        return {
            "format": RESULTS_FORMAT,
            "version": RESULTS_VERSION,
            "task": self.task,
            "modality": self.modality,
            "learner": self.learner,
            "n_trials": self.n_trials,
            "n_folds": len(self.folds),
            "per_subject_accuracy": self.per_subject,
            "mean_accuracy": self.mean_accuracy,
            "folds": self.folds,
            "seeds": {"run": self.seed, "folds": [f["seed"] for f in self.folds]},
            "config": self.config,
            "config_fingerprint": self.config_fingerprint,
            "excluded": self.excluded,
            "provenance": self.provenance,
            "paper_reference": {
                "note": "accuracies (%) reported on human recordings; not comparable "
                        "to synthetic results",
                "values": PAPER_REFERENCE,
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(d["task"], d["modality"], d["learner"], d["per_subject_accuracy"],
                   d["folds"], d["config"], d["config_fingerprint"], d["seeds"]["run"],
                   d["n_trials"], d.get("excluded", {}), d.get("provenance", []))


def loso_evaluate(features, cfg=PipelineConfig(), learner="elm", task="attention", seed=None):
    """Leave-one-subject-out accuracy of a :class:`~drivecog.features.FeatureSet`.

    ``learner="elm"`` expects (n, d) rows; ``learner="lstm"`` expects
    (n, N, d) sequences.  Each fold's seed comes from a ``SeedSequence``
    spawned from ``seed`` (default ``cfg.seed``).
    """
    if learner not in ("elm", "lstm"):
        raise ValueError(f"learner must be 'elm' or 'lstm', got {learner!r}")
    seed = cfg.seed if seed is None else int(seed)
    x = np.asarray(features.values, dtype=float)
    y = np.asarray(features.labels, dtype=int)
    want = 2 if learner == "elm" else 3
    if x.ndim != want:
        raise ValueError(f"learner {learner!r} needs {want}-d features, got shape {x.shape}")
    tids, sids = list(features.trial_ids), list(features.subject_ids)
    folds = make_folds(tids, sids)
    seeds = fold_seeds(seed, len(folds))
    per_subject, fold_info = {}, []
    for fold, fs in zip(folds, seeds):
        check_fold(fold, tids, sids)
        tr, te = list(fold.train_index), list(fold.test_index)
        pred = fit_pipeline(x[tr], y[tr], cfg, learner, fs).predict(x[te])
        acc = 100.0 * float(np.mean(pred == y[te]))
        per_subject[fold.test_subject] = acc
        fold_info.append({"test_subject": fold.test_subject, "n_train": len(tr),
                          "n_test": len(te), "accuracy": acc, "seed": fs,
                          "fingerprint": fold.fingerprint})
    return LosoReport(task, features.modality, learner, per_subject, fold_info,
                      cfg.to_dict(), cfg.fingerprint(), seed, len(tids),
                      dict(features.excluded), [list(p) for p in features.provenance])


def null_band(n_trials, z=1.96):
    """95% binomial band (in %) around chance for a mean over ``n_trials`` predictions."""
    half = z * np.sqrt(0.25 / n_trials)
    return 100.0 * (0.5 - half), 100.0 * (0.5 + half)


def plot_report(rep, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    subjects = list(rep.per_subject)
    acc = [rep.per_subject[s] for s in subjects]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(subjects) + 2), 3.2), dpi=100)
    ax.bar(range(len(subjects)), acc, color="#4477aa")
    ax.axhline(rep.mean_accuracy, color="k", lw=1, ls="--",
               label=f"mean {rep.mean_accuracy:.2f}%")
    ax.axhline(50.0, color="#aa3377", lw=1, ls=":", label="chance")
    ax.set_xticks(range(len(subjects)))
    ax.set_xticklabels(subjects, rotation=60, fontsize=7)
    ax.set_ylim(0, 100)
    ax.set_ylabel("accuracy (%)")
    ax.set_title(f"{rep.task} / {rep.modality} / {rep.learner} (LOSO)")
    ax.legend(fontsize=7, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def report(rep, out_dir):
    """Write ``results.json`` and ``per_subject.png`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.json").write_text(rep.to_json())
    plot_report(rep, out / "per_subject.png")
    return out / "results.json", out / "per_subject.png"
