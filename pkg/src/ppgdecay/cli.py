"""Command-line orchestration.

Subcommands: synth, preprocess, featurize, train, eval, compare-decays,
ablate, report. Configuration comes from an optional flat key=value file
plus ``--set key=value`` overrides (flags win); every artifact-producing
command writes a manifest JSON next to its outputs and can be replayed
byte-identically with ``--from-manifest``.

Exit codes: 0 ok, 2 config error, 3 I/O error, 4 empty result, 5 numeric
failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv as _csv
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, baseline, evaluation, features, signal, synth
from .cohort import (
    Biomarker, attach_labels, read_labs_csv, read_labeled_jsonl,
    write_labeled_jsonl,
)
from .config import (
    ConfigError, config_digest, file_digest, parse_config_file, read_manifest,
    resolve, start_manifest, write_manifest,
)
from .decay import DecayFamily
from .model import TrainConfig, save_checkpoint, train_biomarker
from .objective import Hyperparams
from .synth import SynthCohortConfig, WaveformConfig


class EmptyResultError(RuntimeError):
    """Pipeline produced nothing; exits with code 4."""


class NumericError(RuntimeError):
    """Numeric failure surfaced by a command; exits with code 5."""


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY=VALUE", help="override one config field")
    sub.add_argument("--from-manifest", help="replay the config of a previous run")
    sub.add_argument("--out-dir", default=".", help="directory for outputs")
    sub.add_argument("--seed", type=int, help="override the seed")


def _flag_overrides(args) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        out["seed"] = str(args.seed)
    if getattr(args, "sqi_threshold", None) is not None:
        out["sqi_threshold"] = str(args.sqi_threshold)
    if getattr(args, "window_days", None) is not None:
        out["window_days"] = str(args.window_days)
    return out


def _resolved(args, command: str) -> dict[str, object]:
    manifest_cfg = read_manifest(args.from_manifest).config if args.from_manifest else None
    file_cfg = parse_config_file(args.config) if args.config else None
    cfg = resolve(command, manifest_cfg, file_cfg, _flag_overrides(args))
    if cfg["lam"] != 0.5 and not getattr(args, "unsafe_tune_lambda", False):
        raise ConfigError(
            "lam is fixed at 0.5 for all standard pipelines; "
            "pass --unsafe-tune-lambda to experiment with other values")
    return cfg


def _out_dir(args) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    probe = os.path.join(args.out_dir, ".write-probe")
    with open(probe, "w") as fh:
        fh.write("ok")
    os.remove(probe)
    return args.out_dir


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        epochs=cfg["epochs"], batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        alpha_learning_rate=cfg["alpha_learning_rate"],
        seed=cfg["seed"], early_stop_patience=cfg["early_stop_patience"],
        family=DecayFamily.from_name(cfg["family"]), mode=cfg["mode"],
        init_rate_per_day=cfg["init_rate_per_day"])


def _forest_config(cfg: dict) -> baseline.ForestConfig:
    return baseline.ForestConfig(
        n_trees=cfg["n_trees"], max_depth=cfg["max_depth"],
        min_leaf=cfg["min_leaf"], features_per_split=cfg["features_per_split"],
        bootstrap=cfg["bootstrap"], seed=cfg["seed"])


# ---------------------------------------------------------------------------
# synth

def cmd_synth(args) -> int:
    cfg = _resolved(args, "synth")
    out = _out_dir(args)
    manifest = start_manifest("synth", cfg)

    if cfg["kind"] == "features":
        cohort_cfg = SynthCohortConfig(
            n_subjects=cfg["n_subjects"], segments_min=cfg["segments_min"],
            segments_max=cfg["segments_max"],
            true_staleness_rate=cfg["true_staleness_rate"],
            staleness_family=DecayFamily.from_name(cfg["staleness_family"]),
            window_days=cfg["window_days"],
            class_separation=cfg["class_separation"],
            feature_noise_std=cfg["feature_noise_std"],
            n_informative=cfg["n_informative"],
            biomarker=Biomarker.from_string(cfg["biomarker"]),
            seed=cfg["seed"])
        table, _ = synth.gen_cohort(cohort_cfg)
        path = os.path.join(out, "features.csv")
        features.write_features_csv(table, path)
        manifest.outputs.append(path)
        print(f"[synth] wrote {len(table)} segments across "
              f"{cfg['n_subjects']} subjects to {path}")
    elif cfg["kind"] == "waveforms":
        rng = np.random.default_rng(cfg["seed"])
        streams = []
        labs_rows = []
        for i in range(cfg["n_streams"]):
            wave_cfg = WaveformConfig(
                heart_rate_bpm=cfg["heart_rate_bpm"], hrv_std_ms=cfg["hrv_std_ms"],
                noise_std=cfg["noise_std"], seed=cfg["seed"] + i)
            start_ts = 1.0e9 + i * 86400.0
            streams.append(synth.gen_waveform(
                wave_cfg, cfg["duration_s"], subject_id=f"W{i:03d}",
                start_timestamp=start_ts))
            drawn_at = start_ts + float(rng.uniform(0.0, 5.0)) * 86400.0
            labs_rows.append((f"W{i:03d}", cfg["biomarker"],
                              float(rng.normal()), drawn_at))
        streams_path = os.path.join(out, "raw_streams.csv")
        signal.write_streams_csv(streams, streams_path)
        labs_path = os.path.join(out, "labs.csv")
        with open(labs_path, "w", newline="") as fh:
            fh.write("subject_id,biomarker,value,drawn_at_unix\n")
            for sid, biomarker, value, drawn in labs_rows:
                fh.write(f"{sid},{biomarker},{value!r},{drawn!r}\n")
        manifest.outputs += [streams_path, labs_path]
        print(f"[synth] wrote {len(streams)} waveform streams to {streams_path}")
    else:
        raise ConfigError(f"config field 'kind': unknown value {cfg['kind']!r}")

    write_manifest(manifest, os.path.join(out, "manifest.json"))
    return 0


# ---------------------------------------------------------------------------
# preprocess

def cmd_preprocess(args) -> int:
    cfg = _resolved(args, "preprocess")
    out = _out_dir(args)
    manifest = start_manifest("preprocess", cfg, {
        args.raw: file_digest(args.raw), args.labs: file_digest(args.labs)})

    streams = signal.read_streams_csv(args.raw)
    labs = read_labs_csv(args.labs)
    biomarker = Biomarker.from_string(cfg["biomarker"])

    segments = [seg for stream in streams for seg in signal.segment_stream(stream)]
    print(f"[preprocess] streams={len(streams)} segments={len(segments)}")

    passed = [seg for seg in segments
              if signal.sqi(seg, threshold=cfg["sqi_threshold"]).passed]
    print(f"[preprocess] stage=sqi input={len(segments)} "
          f"retained={len(passed)} dropped={len(segments) - len(passed)}")

    processed = [signal.zscore(signal.bandpass(seg)) for seg in passed]
    print(f"[preprocess] stage=filter input={len(passed)} "
          f"retained={len(processed)} dropped=0")

    labeled = attach_labels([seg.meta for seg in processed], labs, biomarker,
                            window_days=cfg["window_days"])
    print(f"[preprocess] stage=label input={len(processed)} "
          f"retained={len(labeled)} dropped={len(processed) - len(labeled)}")

    if not labeled:
        raise EmptyResultError(
            f"no eligible segments: {len(segments)} segmented, "
            f"{len(segments) - len(passed)} dropped by sqi, "
            f"{len(processed) - len(labeled)} dropped by labeling "
            f"(window {cfg['window_days']} days)")

    seg_path = os.path.join(out, "processed_segments.jsonl")
    signal.write_segments_jsonl(processed, seg_path)
    labeled_path = os.path.join(out, "labeled_segments.jsonl")
    write_labeled_jsonl(labeled, labeled_path)
    manifest.outputs += [seg_path, labeled_path]
    write_manifest(manifest, os.path.join(out, "manifest.json"))
    return 0


# ---------------------------------------------------------------------------
# featurize

def cmd_featurize(args) -> int:
    cfg = _resolved(args, "featurize")
    out = _out_dir(args)
    manifest = start_manifest("featurize", cfg, {
        args.segments: file_digest(args.segments),
        args.labeled: file_digest(args.labeled)})

    segments = {seg.meta.segment_id: seg
                for seg in signal.read_segments_jsonl(args.segments)}
    labeled = read_labeled_jsonl(args.labeled)
    if not labeled:
        raise EmptyResultError("labeled segment file is empty")
    biomarker = labeled[0].biomarker

    subject_ids, segment_ids, deltas, labels, rows = [], [], [], [], []
    failed = 0
    for item in labeled:
        seg = segments.get(item.meta.segment_id)
        if seg is None:
            continue
        try:
            vec = features.featurize(seg)
        except features.BeatDetectionError:
            failed += 1
            continue
        subject_ids.append(item.meta.subject_id)
        segment_ids.append(item.meta.segment_id)
        deltas.append(item.delta_t_days)
        labels.append(item.label)
        rows.append(vec.values)
    print(f"[featurize] input={len(labeled)} featurized={len(rows)} "
          f"beat_detection_failed={failed}")
    if not rows:
        raise EmptyResultError("beat detection failed on every labeled segment")

    table = features.FeatureTable(
        biomarker=biomarker,
        subject_ids=np.array(subject_ids, dtype=object),
        segment_ids=np.array(segment_ids, dtype=object),
        delta_t_days=np.array(deltas, dtype=float),
        labels=np.array(labels, dtype=int),
        X=np.vstack(rows))
    path = os.path.join(out, "features.csv")
    features.write_features_csv(table, path)
    manifest.outputs.append(path)
    write_manifest(manifest, os.path.join(out, "manifest.json"))
    return 0


# ---------------------------------------------------------------------------
# train

def cmd_train(args) -> int:
    cfg = _resolved(args, "train")
    out = _out_dir(args)
    manifest = start_manifest("train", cfg, {args.features: file_digest(args.features)})

    table = features.read_features_csv(args.features)
    subjects = evaluation._majority_labels(table)
    folds = evaluation.stratified_folds(subjects, k=5, seed=cfg["seed"])
    valid_subjects = set(folds.subjects_in(0))
    train_subjects = {s for s, _ in subjects} - valid_subjects

    result = train_biomarker(table.subject_rows(train_subjects),
                             table.subject_rows(valid_subjects),
                             _train_config(cfg), Hyperparams(lam=cfg["lam"]))

    ckpt_path = os.path.join(out, "checkpoint.json")
    save_checkpoint(result, ckpt_path, config_digest(cfg))
    trace_path = os.path.join(out, "loss_trace.csv")
    with open(trace_path, "w", newline="") as fh:
        fh.write("epoch,weighted_bce,mean_weight,total,alpha_hat\n")
        for row in result.loss_trace:
            fh.write(f"{row.epoch},{row.weighted_bce!r},{row.mean_weight!r},"
                     f"{row.total!r},{row.alpha_hat!r}\n")
    manifest.outputs += [ckpt_path, trace_path]
    write_manifest(manifest, os.path.join(out, "manifest.json"))
    print(f"[train] mode={cfg['mode']} family={cfg['family']} "
          f"epochs_run={len(result.loss_trace)} "
          f"alpha_hat={result.learned_rate_per_day:.6f}/day")
    return 0


# ---------------------------------------------------------------------------
# eval / compare-decays / ablate

def cmd_eval(args) -> int:
    cfg = _resolved(args, "eval")
    out = _out_dir(args)
    manifest = start_manifest("eval", cfg, {args.features: file_digest(args.features)})

    table = features.read_features_csv(args.features)
    report = evaluation.run_cv(
        table, method=cfg["method"], k=cfg["k_folds"], seed=cfg["seed"],
        train_cfg=_train_config(cfg), forest_cfg=_forest_config(cfg),
        hp=Hyperparams(lam=cfg["lam"]), fixed_alpha_rate=cfg["fixed_alpha_rate"])

    metrics_path = os.path.join(out, "metrics.csv")
    evaluation.write_metrics_csv([report], metrics_path)
    manifest.outputs.append(metrics_path)
    if cfg["method"] != "rf":
        curves_path = os.path.join(out, "weight_curves.csv")
        evaluation.write_weight_curves_csv([report], curves_path,
                                           window_days=cfg["window_days"])
        manifest.outputs.append(curves_path)
    write_manifest(manifest, os.path.join(out, "manifest.json"))
    print(f"[eval] method={cfg['method']} mean_auroc={report.mean_auroc:.4f} "
          f"mean_auprc={report.mean_auprc:.4f}")
    return 0


def cmd_compare_decays(args) -> int:
    cfg = _resolved(args, "compare-decays")
    out = _out_dir(args)
    manifest = start_manifest("compare-decays", cfg,
                              {args.features: file_digest(args.features)})
    table = features.read_features_csv(args.features)
    base_cfg = _train_config(cfg)
    hp = Hyperparams(lam=cfg["lam"])

    def one(family: DecayFamily):
        return evaluation.run_cv(table, method="ours", k=cfg["k_folds"],
                                 seed=cfg["seed"],
                                 train_cfg=replace(base_cfg, family=family), hp=hp)

    families = list(DecayFamily)
    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(one, families))
    else:
        reports = [one(f) for f in families]
    assert len({r.fold_digest for r in reports}) == 1

    table_path = os.path.join(out, "decay_comparison.csv")
    with open(table_path, "w", newline="") as fh:
        fh.write("family,auroc,auprc\n")
        for rep in reports:
            fh.write(f"{rep.family},{rep.mean_auroc!r},{rep.mean_auprc!r}\n")
    detail_path = os.path.join(out, "metrics.csv")
    evaluation.write_metrics_csv(reports, detail_path)
    manifest.outputs += [table_path, detail_path]
    write_manifest(manifest, os.path.join(out, "manifest.json"))
    for rep in reports:
        print(f"[compare-decays] {rep.family:<12} auroc={rep.mean_auroc:.4f} "
              f"auprc={rep.mean_auprc:.4f}")
    return 0


_ABLATION_LABELS = {
    "ours": "full",
    "ablation_fixed_alpha": "no_learnable_alpha",
    "ablation_no_decay": "no_time_aware_loss",
}


def cmd_ablate(args) -> int:
    cfg = _resolved(args, "ablate")
    out = _out_dir(args)
    manifest = start_manifest("ablate", cfg, {args.features: file_digest(args.features)})
    table = features.read_features_csv(args.features)
    base_cfg = _train_config(cfg)
    hp = Hyperparams(lam=cfg["lam"])

    methods = ["ours", "ablation_fixed_alpha", "ablation_no_decay"]

    def one(method: str):
        return evaluation.run_cv(table, method=method, k=cfg["k_folds"],
                                 seed=cfg["seed"], train_cfg=base_cfg, hp=hp,
                                 fixed_alpha_rate=cfg["fixed_alpha_rate"])

    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(one, methods))
    else:
        reports = [one(m) for m in methods]
    assert len({r.fold_digest for r in reports}) == 1

    table_path = os.path.join(out, "ablation.csv")
    with open(table_path, "w", newline="") as fh:
        fh.write("method,auroc,auprc\n")
        for rep in reports:
            fh.write(f"{_ABLATION_LABELS[rep.method]},{rep.mean_auroc!r},"
                     f"{rep.mean_auprc!r}\n")
    detail_path = os.path.join(out, "metrics.csv")
    evaluation.write_metrics_csv(reports, detail_path)
    manifest.outputs += [table_path, detail_path]
    write_manifest(manifest, os.path.join(out, "manifest.json"))
    for rep in reports:
        print(f"[ablate] {_ABLATION_LABELS[rep.method]:<20} "
              f"auroc={rep.mean_auroc:.4f} auprc={rep.mean_auprc:.4f}")
    return 0


# ---------------------------------------------------------------------------
# report

def cmd_report(args) -> int:
    blocks = []
    for path in args.inputs:
        with open(path, newline="") as fh:
            rows = [row for row in _csv.reader(fh) if row]
        if not rows:
            continue
        widths = [max(len(row[i]) if i < len(row) else 0 for row in rows)
                  for i in range(len(rows[0]))]
        lines = [os.path.basename(path)]
        lines.append("-" * len(lines[0]))
        for row in rows:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        blocks.append("\n".join(lines))
    if not blocks:
        raise EmptyResultError("no rows found in any input CSV")
    rendered = "\n\n".join(blocks) + "\n"
    sys.stdout.write(rendered)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(rendered)
        manifest = start_manifest("report", {"seed": 0},
                                  {p: file_digest(p) for p in args.inputs})
        manifest.outputs.append(args.out)
        write_manifest(manifest, args.out + ".manifest.json")
    return 0


# ---------------------------------------------------------------------------
# parser / entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppgdecay",
        description="Time-gap-aware biomarker classification experiments")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate synthetic cohorts or waveforms")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("preprocess", help="segment, quality-gate, filter, label")
    _add_common(p)
    p.add_argument("--raw", required=True, help="raw streams CSV")
    p.add_argument("--labs", required=True, help="lab records CSV")
    p.add_argument("--sqi-threshold", type=float, help="quality gate threshold")
    p.add_argument("--window-days", type=float, help="label attachment window")
    p.set_defaults(func=cmd_preprocess)

    p = subs.add_parser("featurize", help="extract 34 features per labeled segment")
    _add_common(p)
    p.add_argument("--segments", required=True, help="processed segments JSONL")
    p.add_argument("--labeled", required=True, help="labeled segments JSONL")
    p.set_defaults(func=cmd_featurize)

    for name, func in (("train", cmd_train), ("eval", cmd_eval),
                       ("compare-decays", cmd_compare_decays),
                       ("ablate", cmd_ablate)):
        p = subs.add_parser(name)
        _add_common(p)
        p.add_argument("--features", required=True, help="feature table CSV")
        p.add_argument("--unsafe-tune-lambda", action="store_true",
                       help="allow a non-default lam value")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for independent runs")
        p.set_defaults(func=func)

    p = subs.add_parser("report", help="render metric CSVs as aligned text tables")
    p.add_argument("inputs", nargs="+", help="metric CSV files")
    p.add_argument("--out", help="also write the rendered table to a file")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except EmptyResultError as err:
        print(f"empty result: {err}", file=sys.stderr)
        return 4
    except (NumericError, FloatingPointError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 5
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 3
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
