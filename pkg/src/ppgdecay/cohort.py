"""Cohort data model: subjects, lab records, segment metadata, and the
labeling protocol that joins them.

The pipeline here is deliberately boring and fully deterministic:

* ``quantile_label`` splits one biomarker's lab values into extremes
  (top quartile positive, bottom quartile negative, middle excluded),
* ``attach_labels`` joins each segment to its nearest same-subject lab
  within a day window and inherits that lab's class,
* ``cap_segments`` limits how many segments any one subject contributes,
* ``stratified_folds`` deals subjects into k folds for cross-validation.

All functions are pure; randomness always flows from an explicit seed.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
from dataclasses import dataclass, asdict

import numpy as np

SECONDS_PER_DAY = 86400.0


class InsufficientDataError(ValueError):
    """Too few lab values to run the two-extreme protocol."""


class RejectedRecordError(ValueError):
    """Malformed input records; carries the offending ids."""

    def __init__(self, message: str, ids: list[str]):
        super().__init__(f"{message}: {', '.join(ids)}")
        self.ids = ids


class Biomarker(enum.Enum):
    LDL = "LDL"
    TRIGLYCERIDE = "Triglyceride"
    HBA1C = "HbA1C"
    HEMOGLOBIN = "Hemoglobin"
    CO2 = "CO2"
    CHLORIDE = "Chloride"
    POTASSIUM = "Potassium"
    SODIUM = "Sodium"
    WBC = "WBC"
    PLATELETS = "Platelets"

    @classmethod
    def from_string(cls, name: str) -> "Biomarker":
        low = name.strip().lower()
        for member in cls:
            if member.value.lower() == low:
                return member
        raise ValueError(f"unknown biomarker {name!r}")

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class LabRecord:
    subject_id: str
    biomarker: Biomarker
    value: float
    drawn_at: float  # UTC seconds

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite lab value for subject {self.subject_id}")


@dataclass(frozen=True)
class SegmentMeta:
    subject_id: str
    segment_id: str
    median_timestamp: float  # UTC seconds


@dataclass(frozen=True)
class LabeledSegment:
    meta: SegmentMeta
    biomarker: Biomarker
    delta_t_days: float
    label: int
    lab_value: float


class QuantileClass(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    EXCLUDED = "excluded"


def quantile_label(labs: list[LabRecord], lower_q: float = 0.25,
                   upper_q: float = 0.75) -> dict[LabRecord, QuantileClass]:
    """Two-extreme protocol over one biomarker's lab values.

    Values at or above the upper quantile are positive, at or below the
    lower quantile negative, strictly between excluded. Quantiles use the
    linear-interpolated order statistic. When the two quantiles coincide
    (degenerate distribution) every value is excluded since there are no
    separable extremes.
    """
    if len(labs) < 4:
        raise InsufficientDataError(
            f"two-extreme protocol needs at least 4 lab values, got {len(labs)}")
    values = np.array([lab.value for lab in labs], dtype=float)
    lo = float(np.quantile(values, lower_q))
    hi = float(np.quantile(values, upper_q))
    out: dict[LabRecord, QuantileClass] = {}
    for lab in labs:
        if lo == hi:
            out[lab] = QuantileClass.EXCLUDED
        elif lab.value >= hi:
            out[lab] = QuantileClass.POSITIVE
        elif lab.value <= lo:
            out[lab] = QuantileClass.NEGATIVE
        else:
            out[lab] = QuantileClass.EXCLUDED
    return out


def attach_labels(segments: list[SegmentMeta], labs: list[LabRecord],
                  biomarker: Biomarker, window_days: float = 30.0,
                  classes: dict[LabRecord, QuantileClass] | None = None
                  ) -> list[LabeledSegment]:
    """Join each segment to its nearest same-subject lab of ``biomarker``.

    delta_t is |median_timestamp - drawn_at| in days; ties between two
    equidistant labs go to the earlier draw. Segments are dropped when the
    nearest lab is farther than ``window_days``, when the subject has no
    labs, or when the nearest lab's quantile class is excluded.

    ``classes`` may carry a precomputed lab -> class map; by default the
    two-extreme protocol runs on the labs passed in.
    """
    if window_days <= 0:
        raise ValueError("window_days must be positive")
    relevant = [lab for lab in labs if lab.biomarker is biomarker]
    if not relevant:
        return []
    bad = [f"{lab.subject_id}@{lab.drawn_at}" for lab in relevant if lab.drawn_at <= 0]
    bad += [s.segment_id for s in segments if s.median_timestamp <= 0]
    if bad:
        raise RejectedRecordError("nonpositive timestamps", bad)
    if classes is None:
        classes = quantile_label(relevant)

    by_subject: dict[str, list[LabRecord]] = {}
    for lab in relevant:
        by_subject.setdefault(lab.subject_id, []).append(lab)
    for subject_labs in by_subject.values():
        subject_labs.sort(key=lambda lab: lab.drawn_at)

    out: list[LabeledSegment] = []
    for seg in segments:
        subject_labs = by_subject.get(seg.subject_id)
        if not subject_labs:
            continue
        # earliest lab wins ties because the list is sorted by draw time
        nearest = min(subject_labs,
                      key=lambda lab: abs(seg.median_timestamp - lab.drawn_at))
        delta_days = abs(seg.median_timestamp - nearest.drawn_at) / SECONDS_PER_DAY
        if delta_days > window_days:
            continue
        cls = classes.get(nearest, QuantileClass.EXCLUDED)
        if cls is QuantileClass.EXCLUDED:
            continue
        out.append(LabeledSegment(
            meta=seg, biomarker=biomarker, delta_t_days=delta_days,
            label=1 if cls is QuantileClass.POSITIVE else 0,
            lab_value=nearest.value))
    return out


def _stable_int(*parts) -> int:
    digest = hashlib.blake2b("|".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "big")


def cap_segments(segments: list[LabeledSegment], seed: int) -> list[LabeledSegment]:
    """Cap per-subject contributions at the per-biomarker median count.

    The median over per-subject counts uses the lower median for even
    lengths so the cap is an achievable integer. Over-contributing subjects
    keep a uniform subsample; the draw is seeded per (biomarker, subject)
    so the result does not depend on input ordering, and applying the cap
    twice with the same seed is a no-op the second time.
    """
    counts: dict[tuple[Biomarker, str], int] = {}
    for seg in segments:
        key = (seg.biomarker, seg.meta.subject_id)
        counts[key] = counts.get(key, 0) + 1

    medians: dict[Biomarker, int] = {}
    for biomarker in {b for b, _ in counts}:
        per_subject = sorted(c for (b, _), c in counts.items() if b is biomarker)
        medians[biomarker] = per_subject[(len(per_subject) - 1) // 2]

    dropped: set[tuple[Biomarker, str]] = set()
    for (biomarker, subject), count in counts.items():
        cap = medians[biomarker]
        if count <= cap:
            continue
        ids = sorted(seg.meta.segment_id for seg in segments
                     if seg.biomarker is biomarker and seg.meta.subject_id == subject)
        rng = np.random.default_rng(_stable_int(seed, biomarker.value, subject))
        chosen = rng.choice(len(ids), size=cap, replace=False)
        kept = {ids[i] for i in chosen}
        dropped.update((biomarker, sid) for sid in ids if sid not in kept)

    return [seg for seg in segments
            if (seg.biomarker, seg.meta.segment_id) not in dropped]


@dataclass
class FoldAssignment:
    fold_of: dict[str, int]
    k: int

    def subjects_in(self, fold: int) -> list[str]:
        return sorted(s for s, f in self.fold_of.items() if f == fold)

    def digest(self) -> str:
        payload = json.dumps(sorted(self.fold_of.items())).encode()
        return hashlib.sha256(payload).hexdigest()


def stratified_folds(subjects: list[tuple[str, int]], k: int = 5,
                     seed: int = 0) -> FoldAssignment:
    """Deal subjects into k folds, stratified by their majority label.

    Subjects are sorted canonically, shuffled once by the seed, grouped by
    label, and then dealt round-robin with a cursor that continues across
    strata. The continuing cursor keeps overall fold sizes within 1 of each
    other even when strata sizes are not multiples of k (7 subjects with
    k=5 gives folds of size 1 and 2, none empty).
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(subjects) < k:
        raise ValueError(f"need at least k={k} subjects, got {len(subjects)}")
    seen = set()
    for sid, _ in subjects:
        if sid in seen:
            raise ValueError(f"duplicate subject {sid!r}")
        seen.add(sid)

    ordered = sorted(subjects)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ordered))
    shuffled = [ordered[i] for i in perm]

    fold_of: dict[str, int] = {}
    cursor = 0
    for label in sorted({lab for _, lab in shuffled}):
        for sid, lab in shuffled:
            if lab == label:
                fold_of[sid] = cursor % k
                cursor += 1
    return FoldAssignment(fold_of=fold_of, k=k)


# ---------------------------------------------------------------------------
# ingestion and serialization

def read_labs_csv(path) -> list[LabRecord]:
    """Read lab records from CSV: subject_id,biomarker,value,drawn_at_unix."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(LabRecord(
                subject_id=row["subject_id"],
                biomarker=Biomarker.from_string(row["biomarker"]),
                value=float(row["value"]),
                drawn_at=float(row["drawn_at_unix"])))
    return out


def read_segment_meta_csv(path) -> list[SegmentMeta]:
    """Read segment metadata from CSV: subject_id,segment_id,median_ts_unix."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(SegmentMeta(
                subject_id=row["subject_id"],
                segment_id=row["segment_id"],
                median_timestamp=float(row["median_ts_unix"])))
    return out


def write_labeled_jsonl(segments: list[LabeledSegment], path) -> None:
    with open(path, "w") as fh:
        for seg in segments:
            record = asdict(seg)
            record["biomarker"] = seg.biomarker.value
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_labeled_jsonl(path) -> list[LabeledSegment]:
    out = []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            out.append(LabeledSegment(
                meta=SegmentMeta(**rec["meta"]),
                biomarker=Biomarker.from_string(rec["biomarker"]),
                delta_t_days=rec["delta_t_days"],
                label=rec["label"],
                lab_value=rec["lab_value"]))
    return out
