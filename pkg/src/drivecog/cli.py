"""Command-line entry point: ``drivecog <subcommand> ...``.

Pipeline settings come from :class:`~drivecog.config.PipelineConfig`.  Every
field can be given in a JSON file (``--config``) and overridden by the
matching flag (``--pca-dim 20``); the effective configuration and its
fingerprint are written next to every output.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig
from .evaluation import (LosoReport, TrainedPipeline, fit_pipeline, loso_evaluate, plot_report,
                         report)
from .features import (FeatureSet, assemble_attention_features, assemble_hazard_sequences,
                       clean_eeg, feature_catalog, make_provider)
from .session import default_layout, load_eeg_trial, load_manifest
from .synth import HIGH_SEPARATION, SynthConfig, synth_dataset
from .topomap import (BandSpec, band_power_map, dump_grid, interpolate_scalp_map, render_png,
                      scalp_image)

log = logging.getLogger("drivecog")


# ---------------------------------------------------------------------------
# Config flags

def _add_config_flags(p):
    g = p.add_argument_group("pipeline configuration (overrides --config)")
    g.add_argument("--config", type=Path, help="JSON file with PipelineConfig fields")
    for f in fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "lstm_hidden":
            g.add_argument(flag, type=int, nargs="+", default=None, dest=f.name)
        elif f.type in ("int", int):
            g.add_argument(flag, type=int, default=None, dest=f.name)
        elif f.type in ("float", float):
            g.add_argument(flag, type=float, default=None, dest=f.name)
        else:
            g.add_argument(flag, type=str, default=None, dest=f.name)


def config_from_args(args):
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {f.name: getattr(args, f.name, None) for f in fields(PipelineConfig)}
    return cfg.update(**overrides)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Subcommands

def cmd_synth(args):
    cfg = SynthConfig(n_subjects=args.subjects, trials_per_subject=args.trials, task=args.task,
                      class_separation=args.separation, seed=args.seed,
                      duration_s=args.duration, signal=args.signal,
                      invalid_frame_rate=args.invalid_rate)
    m = synth_dataset(cfg, args.out)
    print(f"wrote {len(m.trials)} trials for {len(m.subjects)} subjects to {m.path}")


def _features(args, cfg):
    manifest = load_manifest(args.manifest)
    provider = make_provider(cfg)
    if args.sequence:
        return assemble_hazard_sequences(manifest, args.modality, cfg.interval_s, provider, cfg)
    return assemble_attention_features(manifest, args.modality, provider, cfg)


def cmd_extract(args):
    cfg = config_from_args(args)
    fs = _features(args, cfg)
    out = FeatureSet._npz(args.out)
    fs.save(out)
    _write_json(out.with_suffix(".catalog.json"), feature_catalog(args.modality, cfg))
    _write_json(out.with_suffix(".config.json"),
                {"config": cfg.to_dict(), "fingerprint": cfg.fingerprint()})
    print(f"{len(fs)} trials x {fs.values.shape[1:]} features -> {out}"
          f" ({len(fs.excluded)} excluded)")


def cmd_topomap(args):
    cfg = config_from_args(args)
    manifest = load_manifest(args.manifest)
    clean = clean_eeg(load_eeg_trial(manifest.entry(args.trial)), cfg)
    powers = band_power_map(clean, BandSpec(), nperseg=min(128, clean.trial.n_samples))
    image = scalp_image(powers)
    render_png(image, args.out)
    if args.grid:
        dump_grid(interpolate_scalp_map(default_layout(), powers), args.grid)
    print(f"{args.trial}: {image.pixels.shape} -> {args.out}")


def _load_or_extract(args, cfg):
    if args.features:
        return FeatureSet.load(args.features)
    if not args.manifest:
        raise SystemExit("give --features or --manifest")
    return _features(args, cfg)


def cmd_train(args):
    cfg = config_from_args(args)
    fs = _load_or_extract(args, cfg)
    learner = "lstm" if fs.values.ndim == 3 else "elm"
    pipe = fit_pipeline(fs.values, fs.labels, cfg, learner, cfg.seed)
    pipe.save(args.out, config=cfg.to_dict(), config_fingerprint=cfg.fingerprint(),
              modality=fs.modality, n_trials=len(fs))
    print(f"trained {learner} pipeline on {len(fs)} trials -> {args.out}")


def cmd_predict(args):
    pipe, meta = TrainedPipeline.load(args.model)
    fs = FeatureSet.load(args.features)
    pred = pipe.predict(fs.values)
    rows = [{"trial_id": t, "predicted": int(p), "label": int(y)}
            for t, p, y in zip(fs.trial_ids, pred, fs.labels)]
    out = {"model": str(args.model), "accuracy": 100.0 * float(np.mean(pred == fs.labels)),
           "predictions": rows}
    if args.out:
        _write_json(args.out, out)
    print(f"accuracy {out['accuracy']:.2f}% on {len(fs)} trials")


def cmd_evaluate(args):
    cfg = config_from_args(args)
    fs = _load_or_extract(args, cfg)
    learner = "lstm" if fs.values.ndim == 3 else "elm"
    task = args.task or ("hazard" if learner == "lstm" else "attention")
    rep = loso_evaluate(fs, cfg, learner, task=task, seed=cfg.seed)
    if args.out:
        paths = report(rep, args.out)
        print(f"results -> {paths[0]}")
    print(f"{task}/{fs.modality}/{learner}: mean LOSO accuracy {rep.mean_accuracy:.2f}% "
          f"over {len(rep.folds)} folds (config {rep.config_fingerprint})")


def cmd_report(args):
    rep = LosoReport.from_dict(json.loads(Path(args.results).read_text()))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    plot_report(rep, out / "per_subject.png")
    lines = [f"# {rep.task} / {rep.modality} / {rep.learner}", "",
             "| subject | accuracy (%) |", "|---|---|"]
    lines += [f"| {s} | {a:.2f} |" for s, a in rep.per_subject.items()]
    lines += [f"| **mean** | **{rep.mean_accuracy:.2f}** |", "",
              f"config fingerprint `{rep.config_fingerprint}`, run seed {rep.seed}", ""]
    (out / "summary.md").write_text("\n".join(lines))
    print(f"report -> {out}")


def cmd_config(args):
    cfg = config_from_args(args)
    print(json.dumps({"config": cfg.to_dict(), "fingerprint": cfg.fingerprint()},
                     indent=2, sort_keys=True))


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="drivecog", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"drivecog {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--subjects", type=int, default=12)
    s.add_argument("--trials", type=int, default=15)
    s.add_argument("--task", choices=["attention", "hazard"], default="attention")
    s.add_argument("--separation", type=float, default=HIGH_SEPARATION)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--duration", type=float, default=None,
                   help="fixed trial length in seconds (default: 14-105 s attention, 2 s hazard)")
    s.add_argument("--signal", choices=["level", "drift"], default="level")
    s.add_argument("--invalid-rate", type=float, default=0.02)
    s.set_defaults(func=cmd_synth)

    def data_flags(q, need_manifest=True):
        q.add_argument("--manifest", type=Path, required=need_manifest)
        q.add_argument("--modality", choices=["eeg", "face", "fused"], default="eeg")
        q.add_argument("--sequence", action="store_true",
                       help="per-interval sequences for the trend (LSTM) path")

    e = sub.add_parser("extract", help="compute per-trial features")
    data_flags(e)
    e.add_argument("--out", required=True, type=Path, help="output .npz")
    _add_config_flags(e)
    e.set_defaults(func=cmd_extract)

    t = sub.add_parser("topomap", help="render one trial's RGB scalp map")
    t.add_argument("--manifest", type=Path, required=True)
    t.add_argument("--trial", required=True)
    t.add_argument("--out", required=True, type=Path, help="output PNG")
    t.add_argument("--grid", type=Path, help="also dump the float32 band grids")
    _add_config_flags(t)
    t.set_defaults(func=cmd_topomap)

    for name, func, helptext in (("train", cmd_train, "fit a pipeline on all trials"),
                                 ("evaluate", cmd_evaluate, "leave-one-subject-out evaluation")):
        q = sub.add_parser(name, help=helptext)
        data_flags(q, need_manifest=False)
        q.add_argument("--features", type=Path, help="features .npz from `extract`")
        q.add_argument("--task", choices=["attention", "hazard"], default=None)
        q.add_argument("--out", type=Path, required=(name == "train"),
                       help="model file" if name == "train" else "results directory")
        _add_config_flags(q)
        q.set_defaults(func=func)

    q = sub.add_parser("predict", help="apply a trained pipeline to extracted features")
    q.add_argument("--model", required=True, type=Path)
    q.add_argument("--features", required=True, type=Path)
    q.add_argument("--out", type=Path)
    q.set_defaults(func=cmd_predict)

    r = sub.add_parser("report", help="per-subject chart and table from results.json")
    r.add_argument("--results", required=True, type=Path)
    r.add_argument("--out", required=True, type=Path)
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("config", help="print the effective configuration and fingerprint")
    _add_config_flags(c)
    c.set_defaults(func=cmd_config)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        for name in ("out", "grid"):
            if getattr(args, name, None):
                Path(getattr(args, name)).parent.mkdir(parents=True, exist_ok=True)
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"drivecog: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
