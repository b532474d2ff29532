"""Metrics, subject aggregation, and the cross-validation runner.

AUROC is the Mann-Whitney statistic with tie-averaged ranks; AUPRC is
average precision with descending-score ties grouped into one threshold.
Undefined situations (single-class AUROC, no positives for AUPRC) raise
rather than returning sentinels. Reports always operate at subject level:
segment logits are averaged per subject first.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from . import baseline
from .cohort import stratified_folds
from .decay import DecayFamily, DecayParam, weight
from .features import FeatureTable
from .model import TrainConfig, TrainResult, predict_logits, train_biomarker
from .objective import Hyperparams


class UndefinedMetricError(ValueError):
    """The requested metric does not exist for this label composition."""


def auroc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(equal), computed via tie-averaged
    ranks. Exact, and invariant under strictly monotone score transforms."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUROC needs both classes, got {n_pos} positives / {n_neg} negatives")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    group_rank = starts + (counts + 1) / 2.0  # average 1-based rank per tie group
    ranks = group_rank[inverse]
    pos_rank_sum = float(np.sum(ranks[labels == 1]))
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auprc(scores, labels) -> float:
    """Average precision: sum of (recall step) * (precision) over distinct
    thresholds taken in descending score order."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(np.sum(labels == 1))
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    y = labels[order]
    s = scores[order]
    tp = np.cumsum(y == 1)
    fp = np.cumsum(y == 0)
    # last index of each tie group marks one threshold
    boundary = np.nonzero(np.diff(s))[0]
    take = np.concatenate((boundary, [len(s) - 1]))
    recall = tp[take] / n_pos
    precision = tp[take] / (tp[take] + fp[take])
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev_recall) * precision))


@dataclass(frozen=True)
class SubjectPrediction:
    subject_id: str
    mean_logit: float
    label: int
    n_segments: int


def aggregate_subject(subject_ids, logits, labels) -> list[SubjectPrediction]:
    """One prediction per subject: the mean of its segment logits.

    Labels must be unanimous within a subject; a conflict is a protocol
    violation upstream and raises.
    """
    subject_ids = np.asarray(subject_ids, dtype=object)
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=int)
    out = []
    for sid in sorted(set(subject_ids)):
        mask = subject_ids == sid
        subject_labels = set(labels[mask].tolist())
        if len(subject_labels) != 1:
            raise ValueError(f"conflicting labels for subject {sid}: {subject_labels}")
        out.append(SubjectPrediction(
            subject_id=str(sid),
            mean_logit=float(np.mean(logits[mask])),
            label=int(labels[mask][0]),
            n_segments=int(np.sum(mask))))
    return out


@dataclass
class FoldMetrics:
    fold: int
    auroc: float
    auprc: float
    learned_rate_per_day: float | None


@dataclass
class MetricReport:
    biomarker: str
    method: str
    family: str | None
    per_fold: list[FoldMetrics]
    mean_auroc: float
    mean_auprc: float
    fold_digest: str
    config_digest: str


METHODS = ("ours", "rf", "ablation_fixed_alpha", "ablation_no_decay")


def _majority_labels(table: FeatureTable) -> list[tuple[str, int]]:
    out = []
    for sid in sorted(set(table.subject_ids)):
        labs = table.labels[table.subject_ids == sid]
        out.append((str(sid), int(np.mean(labs) >= 0.5)))
    return out


def _split_validation(train_subjects: list[tuple[str, int]], seed: int
                      ) -> tuple[set, set]:
    """Carve roughly a fifth of the training subjects off for early stopping."""
    inner = stratified_folds(train_subjects, k=5, seed=seed)
    valid = set(inner.subjects_in(0))
    train = {s for s, _ in train_subjects} - valid
    return train, valid


def _train_fold(train_table: FeatureTable, valid_table: FeatureTable,
                method: str, cfg: TrainConfig, fixed_alpha_rate: float,
                hp: Hyperparams) -> TrainResult:
    if method == "ours":
        fold_cfg = cfg
    elif method == "ablation_fixed_alpha":
        fold_cfg = replace(cfg, mode="fixed_alpha",
                           init_rate_per_day=fixed_alpha_rate)
    elif method == "ablation_no_decay":
        fold_cfg = replace(cfg, mode="no_decay")
    else:
        raise ValueError(f"unknown trainable method {method!r}")
    return train_biomarker(train_table, valid_table, fold_cfg, hp)


def run_cv(table: FeatureTable, method: str = "ours", k: int = 5, seed: int = 0,
           train_cfg: TrainConfig | None = None,
           forest_cfg: baseline.ForestConfig | None = None,
           hp: Hyperparams | None = None,
           fixed_alpha_rate: float = 0.5) -> MetricReport:
    """Subject-stratified k-fold evaluation of one method.

    Per fold: transforms and the model come from the training subjects
    only, test segments are scored without any time-gap input, segment
    logits are averaged per subject, and AUROC/AUPRC are computed on the
    subject predictions. Fold assignment depends only on (table, k, seed),
    so different methods evaluated with the same seed share folds exactly.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    train_cfg = train_cfg or TrainConfig()
    hp = hp or Hyperparams()

    subjects = _majority_labels(table)
    folds = stratified_folds(subjects, k=k, seed=seed)

    per_fold = []
    for f in range(k):
        test_subjects = set(folds.subjects_in(f))
        rest = [(s, lab) for s, lab in subjects if s not in test_subjects]
        assert not test_subjects & {s for s, _ in rest}, \
            f"subject overlap between train and test in fold {f}"

        test_table = table.subject_rows(test_subjects)
        try:
            if method == "rf":
                train_table = table.subject_rows({s for s, _ in rest})
                forest = baseline.fit(train_table.X, train_table.labels,
                                      forest_cfg or baseline.ForestConfig(
                                          seed=train_cfg.seed + f))
                scores = baseline.predict_proba(forest, test_table.X)
                learned_rate = None
            else:
                train_ids, valid_ids = _split_validation(rest, seed=seed + 7919 * (f + 1))
                fold_cfg = replace(train_cfg, seed=train_cfg.seed + f)
                result = _train_fold(table.subject_rows(train_ids),
                                     table.subject_rows(valid_ids),
                                     method, fold_cfg, fixed_alpha_rate, hp)
                scores = predict_logits(result, test_table.X)
                learned_rate = result.learned_rate_per_day
        except (ValueError, UndefinedMetricError) as err:
            raise type(err)(f"fold {f}: {err}") from err

        preds = aggregate_subject(test_table.subject_ids, scores, test_table.labels)
        subj_scores = [p.mean_logit for p in preds]
        subj_labels = [p.label for p in preds]
        try:
            fold_auroc = auroc(subj_scores, subj_labels)
            fold_auprc = auprc(subj_scores, subj_labels)
        except UndefinedMetricError as err:
            raise UndefinedMetricError(f"fold {f}: {err}") from err
        per_fold.append(FoldMetrics(fold=f, auroc=fold_auroc, auprc=fold_auprc,
                                    learned_rate_per_day=learned_rate))

    config_payload = json.dumps({
        "method": method, "k": k, "seed": seed,
        "family": train_cfg.family.value, "mode": train_cfg.mode,
        "fixed_alpha_rate": fixed_alpha_rate,
    }, sort_keys=True)
    return MetricReport(
        biomarker=table.biomarker.value,
        method=method,
        family=train_cfg.family.value if method != "rf" else None,
        per_fold=per_fold,
        mean_auroc=float(np.mean([m.auroc for m in per_fold])),
        mean_auprc=float(np.mean([m.auprc for m in per_fold])),
        fold_digest=folds.digest(),
        config_digest=hashlib.sha256(config_payload.encode()).hexdigest())


def compare_decays(table: FeatureTable, k: int = 5, seed: int = 0,
                   train_cfg: TrainConfig | None = None,
                   hp: Hyperparams | None = None) -> list[MetricReport]:
    """Evaluate all four decay families under shared folds."""
    train_cfg = train_cfg or TrainConfig()
    reports = []
    for family in DecayFamily:
        cfg = replace(train_cfg, family=family)
        reports.append(run_cv(table, method="ours", k=k, seed=seed,
                              train_cfg=cfg, hp=hp))
    digests = {r.fold_digest for r in reports}
    assert len(digests) == 1, "families were not evaluated on shared folds"
    return reports


def ablation_table(table: FeatureTable, k: int = 5, seed: int = 0,
                   train_cfg: TrainConfig | None = None,
                   hp: Hyperparams | None = None,
                   fixed_alpha_rate: float = 0.5) -> list[MetricReport]:
    """Full model plus the two ablations, shared folds."""
    reports = [
        run_cv(table, method="ours", k=k, seed=seed, train_cfg=train_cfg, hp=hp),
        run_cv(table, method="ablation_fixed_alpha", k=k, seed=seed,
               train_cfg=train_cfg, hp=hp, fixed_alpha_rate=fixed_alpha_rate),
        run_cv(table, method="ablation_no_decay", k=k, seed=seed,
               train_cfg=train_cfg, hp=hp),
    ]
    assert len({r.fold_digest for r in reports}) == 1
    return reports


# ---------------------------------------------------------------------------
# CSV emission

def write_metrics_csv(reports: list[MetricReport], path) -> None:
    """Per-fold rows plus one mean row per report."""
    with open(path, "w", newline="") as fh:
        fh.write("biomarker,method,family,fold,auroc,auprc,alpha_hat\n")
        for rep in reports:
            fam = rep.family or ""
            for fm in rep.per_fold:
                alpha = "" if fm.learned_rate_per_day is None \
                    else repr(float(fm.learned_rate_per_day))
                fh.write(f"{rep.biomarker},{rep.method},{fam},{fm.fold},"
                         f"{fm.auroc!r},{fm.auprc!r},{alpha}\n")
            fh.write(f"{rep.biomarker},{rep.method},{fam},mean,"
                     f"{rep.mean_auroc!r},{rep.mean_auprc!r},\n")


def write_weight_curves_csv(reports: list[MetricReport], path,
                            window_days: float = 30.0, step: float = 0.1) -> None:
    """Plot-ready weight-vs-gap curves for every learned rate."""
    grid = np.arange(0.0, window_days + step / 2, step)
    with open(path, "w", newline="") as fh:
        fh.write("method,family,fold,delta_t_days,weight\n")
        for rep in reports:
            if rep.family is None:
                continue
            family = DecayFamily.from_name(rep.family)
            for fm in rep.per_fold:
                if fm.learned_rate_per_day is None:
                    continue
                param = DecayParam.from_rate(max(fm.learned_rate_per_day, 1e-12),
                                             family)
                for dt, w in zip(grid, weight(param, grid)):
                    fh.write(f"{rep.method},{rep.family},{fm.fold},"
                             f"{float(dt)!r},{float(w)!r}\n")
