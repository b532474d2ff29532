"""Handcrafted per-segment features: 28 morphology + 5 HRV + mean HR = 34.

The morphology table below is a frozen, documented choice. The source work
names only examples of its 28 descriptors, so this set is a declared
substitute built from the usual pulse-wave ingredients (timings, widths,
amplitudes, areas, derivative landmarks, an augmentation-index proxy, beat
shape moments, and beat-to-beat dispersion), not a reconstruction.

Feature values are deterministic functions of the filtered, z-scored
samples. Segments where beat detection fails fall back to an imputation
vector supplied by the caller, which must be computed from training-split
segments only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import find_peaks
from scipy.stats import kurtosis, skew

from .cohort import Biomarker
from .signal import SAMPLE_RATE_HZ, Segment

MORPHOLOGY_NAMES: tuple[str, ...] = (
    "rise_time_s", "fall_time_s", "rise_fall_ratio", "pulse_time_s",
    "width25_s", "width50_s", "width75_s", "width50_frac",
    "systolic_amplitude", "peak_value", "foot_value",
    "area_total", "area_systolic", "area_diastolic", "area_sys_dia_ratio",
    "area_per_s",
    "slope_up_max", "slope_down_min", "slope_abs_ratio", "d1_max_time_s",
    "d2_max", "d2_min", "d2_max_time_s", "augmentation_index",
    "beat_skewness", "beat_kurtosis",
    "amplitude_beat_std", "width50_beat_std",
)

HRV_NAMES: tuple[str, ...] = (
    "sdnn_ms", "rmssd_ms", "pnn50_pct", "ibi_median_ms", "ibi_range_ms",
)

FEATURE_NAMES: tuple[str, ...] = MORPHOLOGY_NAMES + HRV_NAMES + ("mean_hr_bpm",)

N_FEATURES = len(FEATURE_NAMES)
assert N_FEATURES == 34

IBI_MIN_MS = 60000.0 / 180.0
IBI_MAX_MS = 60000.0 / 40.0


class BeatDetectionError(ValueError):
    """Raised when a segment yields too few usable beats."""


@dataclass(frozen=True)
class BeatSequence:
    peak_indices: np.ndarray
    foot_indices: np.ndarray
    inter_beat_intervals_ms: np.ndarray


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    imputed: bool = False
    names: tuple[str, ...] = field(default=FEATURE_NAMES, repr=False)

    def __post_init__(self):
        if len(self.values) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} values, got {len(self.values)}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature vector contains non-finite entries")


def detect_beats(segment: Segment, sample_rate_hz: float = SAMPLE_RATE_HZ) -> BeatSequence:
    """Systolic peaks, the feet between them, and cleaned inter-beat intervals.

    Peaks are local maxima at least 60/180 BPM apart that clear an adaptive
    height threshold (rolling one-second median plus 0.3 segment standard
    deviations); that distance floor also suppresses dicrotic bumps. Feet
    are the minima between consecutive peaks. IBIs outside 333 to 1500 ms
    are discarded as implausible.
    """
    x = np.asarray(segment.samples, dtype=float)
    sd = float(np.std(x))
    if sd < 1e-12:
        raise BeatDetectionError(f"constant segment {segment.meta.segment_id}")

    min_distance = round(sample_rate_hz * 60.0 / 180.0)
    window = max(3, round(sample_rate_hz))
    baseline = median_filter(x, size=window, mode="nearest")
    peaks, _ = find_peaks(x, distance=min_distance, height=baseline + 0.3 * sd)
    if len(peaks) < 3:
        raise BeatDetectionError(
            f"only {len(peaks)} peaks in segment {segment.meta.segment_id}")

    feet = np.array([p0 + int(np.argmin(x[p0:p1])) for p0, p1 in zip(peaks[:-1], peaks[1:])])
    ibis = np.diff(peaks) / sample_rate_hz * 1000.0
    ibis = ibis[(ibis >= IBI_MIN_MS) & (ibis <= IBI_MAX_MS)]
    return BeatSequence(peak_indices=peaks, foot_indices=feet,
                        inter_beat_intervals_ms=ibis)


def _safe_ratio(num: float, den: float) -> float:
    return num / den if abs(den) > 1e-9 else 0.0


def _width_at(beat: np.ndarray, peak_rel: int, level: float, fs: float) -> float:
    """Pulse width at a height level, with sub-sample interpolation."""
    rise = None
    for i in range(peak_rel, 0, -1):
        if beat[i - 1] <= level <= beat[i]:
            frac = _safe_ratio(level - beat[i - 1], beat[i] - beat[i - 1])
            rise = (i - 1) + frac
            break
    fall = None
    for i in range(peak_rel, len(beat) - 1):
        if beat[i] >= level >= beat[i + 1]:
            frac = _safe_ratio(beat[i] - level, beat[i] - beat[i + 1])
            fall = i + frac
            break
    if rise is None or fall is None:
        # noisy beat without clean crossings: fall back to time above level
        return float(np.sum(beat >= level)) / fs
    return (fall - rise) / fs


def _beat_descriptors(x: np.ndarray, f0: int, peak: int, f1: int, fs: float) -> np.ndarray:
    beat = x[f0:f1 + 1]
    pr = peak - f0
    foot_value = float(beat[0])
    peak_value = float(beat[pr])
    amp = peak_value - foot_value

    rise_time = pr / fs
    fall_time = (len(beat) - 1 - pr) / fs
    pulse_time = (len(beat) - 1) / fs

    widths = [_width_at(beat, pr, foot_value + frac * amp, fs)
              for frac in (0.25, 0.50, 0.75)]

    rel = beat - foot_value
    area_total = float(np.trapezoid(rel)) / fs
    area_sys = float(np.trapezoid(rel[:pr + 1])) / fs
    area_dia = float(np.trapezoid(rel[pr:])) / fs

    d1 = np.diff(beat) * fs
    slope_up = float(np.max(d1[:pr])) if pr >= 1 else 0.0
    slope_down = float(np.min(d1[pr:])) if pr < len(d1) else 0.0
    d1_max_time = float(np.argmax(d1)) / fs

    d2 = np.diff(beat, n=2) * fs * fs
    if len(d2) >= 2:
        d2_max = float(np.max(d2))
        d2_min = float(np.min(d2))
        d2_max_time = float(np.argmax(d2) + 1) / fs
    else:
        d2_max = d2_min = d2_max_time = 0.0

    # late-systolic shoulder: first concavity sign change after the peak
    ai = 0.0
    for i in range(max(pr - 1, 0), len(d2) - 1):
        if d2[i] < 0.0 <= d2[i + 1]:
            shoulder = min(i + 2, len(beat) - 1)
            ai = _safe_ratio(float(beat[shoulder]) - foot_value, amp)
            break

    return np.array([
        rise_time, fall_time, _safe_ratio(rise_time, fall_time), pulse_time,
        widths[0], widths[1], widths[2], _safe_ratio(widths[1], pulse_time),
        amp, peak_value, foot_value,
        area_total, area_sys, area_dia, _safe_ratio(area_sys, area_dia),
        _safe_ratio(area_total, pulse_time),
        slope_up, slope_down, _safe_ratio(abs(slope_up), abs(slope_down)),
        d1_max_time,
        d2_max, d2_min, d2_max_time, ai,
        float(skew(beat)), float(kurtosis(beat)),
        amp,        # placeholder, replaced by across-beat std below
        widths[1],  # placeholder, replaced by across-beat std below
    ])


def morphology_features(segment: Segment, beats: BeatSequence,
                        sample_rate_hz: float = SAMPLE_RATE_HZ) -> np.ndarray:
    """The 28 morphology descriptors, averaged over complete beats.

    A complete beat is a peak flanked by feet on both sides, so n peaks
    give n - 2 beats. The last two entries are across-beat standard
    deviations of amplitude and half-height width rather than means.
    """
    x = np.asarray(segment.samples, dtype=float)
    peaks = beats.peak_indices
    feet = beats.foot_indices
    if len(peaks) < 3:
        raise BeatDetectionError("morphology needs at least 3 peaks")

    rows = []
    for k in range(1, len(peaks) - 1):
        rows.append(_beat_descriptors(x, feet[k - 1], peaks[k], feet[k], sample_rate_hz))
    table = np.vstack(rows)
    out = table.mean(axis=0)
    out[26] = float(np.std(table[:, 26]))  # amplitude_beat_std
    out[27] = float(np.std(table[:, 27]))  # width50_beat_std
    return out


def hrv_features(beats: BeatSequence) -> np.ndarray:
    """{SDNN, RMSSD, pNN50, median IBI, IBI range}, all in ms (pNN50 in %)."""
    ibis = np.asarray(beats.inter_beat_intervals_ms, dtype=float)
    if len(ibis) < 3:
        raise BeatDetectionError(f"HRV needs at least 3 intervals, got {len(ibis)}")
    diffs = np.diff(ibis)
    sdnn = float(np.std(ibis))
    rmssd = float(np.sqrt(np.mean(diffs ** 2)))
    pnn50 = float(np.mean(np.abs(diffs) > 50.0)) * 100.0
    return np.array([sdnn, rmssd, pnn50,
                     float(np.median(ibis)), float(np.ptp(ibis))])


def mean_hr(beats: BeatSequence) -> float:
    """Average heart rate in BPM from the cleaned inter-beat intervals."""
    ibis = np.asarray(beats.inter_beat_intervals_ms, dtype=float)
    if len(ibis) < 1:
        raise BeatDetectionError("mean HR needs at least one interval")
    return 60000.0 / float(np.mean(ibis))


def featurize(segment: Segment, imputation: np.ndarray | None = None) -> FeatureVector:
    """Full 34-entry vector: [morphology | HRV | mean HR].

    On beat-detection failure the ``imputation`` vector (training-split
    per-feature medians) is returned instead; without one the failure
    propagates so the caller can decide.
    """
    try:
        beats = detect_beats(segment)
        if len(beats.inter_beat_intervals_ms) < 3:
            raise BeatDetectionError(
                f"too few plausible intervals in {segment.meta.segment_id}")
        values = np.concatenate([
            morphology_features(segment, beats),
            hrv_features(beats),
            [mean_hr(beats)],
        ])
        return FeatureVector(values=values)
    except BeatDetectionError:
        if imputation is None:
            raise
        return FeatureVector(values=np.asarray(imputation, dtype=float).copy(),
                             imputed=True)


def featurize_matrix(segments: list[Segment]) -> tuple[np.ndarray, np.ndarray]:
    """Feature rows for many segments; failed rows are NaN with ok=False.

    Callers impute the failed rows from training-split medians, see
    :func:`imputation_vector`.
    """
    X = np.full((len(segments), N_FEATURES), np.nan)
    ok = np.zeros(len(segments), dtype=bool)
    for i, seg in enumerate(segments):
        try:
            X[i] = featurize(seg).values
            ok[i] = True
        except BeatDetectionError:
            pass
    return X, ok


def imputation_vector(X: np.ndarray, ok: np.ndarray) -> np.ndarray:
    """Per-feature medians over the successful rows of a training split."""
    if not np.any(ok):
        raise BeatDetectionError("no successful segments to impute from")
    return np.median(X[ok], axis=0)


@dataclass
class FeatureTable:
    """Featurized cohort for one biomarker: one row per labeled segment."""

    biomarker: Biomarker
    subject_ids: np.ndarray   # (N,) strings
    segment_ids: np.ndarray   # (N,) strings
    delta_t_days: np.ndarray  # (N,) days
    labels: np.ndarray        # (N,) in {0, 1}
    X: np.ndarray             # (N, 34)

    def __post_init__(self):
        n = len(self.labels)
        if not (len(self.subject_ids) == len(self.segment_ids)
                == len(self.delta_t_days) == n and self.X.shape == (n, N_FEATURES)):
            raise ValueError("inconsistent table shapes")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "FeatureTable":
        return FeatureTable(self.biomarker, self.subject_ids[idx],
                            self.segment_ids[idx], self.delta_t_days[idx],
                            self.labels[idx], self.X[idx])

    def subject_rows(self, subjects) -> "FeatureTable":
        mask = np.isin(self.subject_ids, list(subjects))
        return self.subset(mask)


FEATURE_CSV_PREFIX = ("subject_id", "segment_id", "biomarker", "delta_t_days", "label")


def write_features_csv(table: FeatureTable, path) -> None:
    """CSV rows: id/label prefix columns then the 34 named features.

    Floats are written with shortest round-trip repr so a rerun with the
    same inputs produces byte-identical files.
    """
    with open(path, "w", newline="") as fh:
        fh.write(",".join(FEATURE_CSV_PREFIX + FEATURE_NAMES) + "\n")
        for i in range(len(table)):
            row = [str(table.subject_ids[i]), str(table.segment_ids[i]),
                   table.biomarker.value, repr(float(table.delta_t_days[i])),
                   str(int(table.labels[i]))]
            row += [repr(float(v)) for v in table.X[i]]
            fh.write(",".join(row) + "\n")


def read_features_csv(path) -> FeatureTable:
    subject_ids, segment_ids, deltas, labels, rows = [], [], [], [], []
    biomarker = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header[:5]) != FEATURE_CSV_PREFIX or tuple(header[5:]) != FEATURE_NAMES:
            raise ValueError(f"unexpected feature CSV header in {path}")
        for rec in reader:
            subject_ids.append(rec[0])
            segment_ids.append(rec[1])
            biomarker = Biomarker.from_string(rec[2])
            deltas.append(float(rec[3]))
            labels.append(int(rec[4]))
            rows.append([float(v) for v in rec[5:]])
    if biomarker is None:
        raise ValueError(f"empty feature CSV {path}")
    return FeatureTable(biomarker=biomarker,
                        subject_ids=np.array(subject_ids, dtype=object),
                        segment_ids=np.array(segment_ids, dtype=object),
                        delta_t_days=np.array(deltas, dtype=float),
                        labels=np.array(labels, dtype=int),
                        X=np.array(rows, dtype=float))
