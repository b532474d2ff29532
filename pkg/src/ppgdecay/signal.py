"""Raw PPG handling: segmentation, quality gating, filtering, normalization.

The pipeline order is fixed and matters: the quality index is computed on
the raw segment (filtering would hide exactly the artifacts it looks for),
then the surviving segments are band-pass filtered and z-scored.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, filtfilt
from scipy.stats import skew

from .cohort import SegmentMeta

SAMPLE_RATE_HZ = 25.0
SEGMENT_SECONDS = 10.0
SEGMENT_LEN = round(SEGMENT_SECONDS * SAMPLE_RATE_HZ)  # 250

_FILTER_ORDER = 4
_EPS = 1e-12


@dataclass(frozen=True)
class RawPpgStream:
    subject_id: str
    start_timestamp: float
    sample_rate_hz: float
    samples: np.ndarray

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError(f"non-finite samples in stream for {self.subject_id}")


@dataclass(frozen=True)
class Segment:
    meta: SegmentMeta
    samples: np.ndarray


@dataclass(frozen=True)
class QualityScore:
    value: float
    passed: bool


def segment_stream(stream: RawPpgStream, seg_seconds: float = SEGMENT_SECONDS) -> list[Segment]:
    """Chop a stream into consecutive non-overlapping fixed-length segments.

    The trailing remainder shorter than one segment is dropped. Each
    segment's median timestamp sits at the middle of its window.
    """
    length = round(seg_seconds * stream.sample_rate_hz)
    n_segments = len(stream.samples) // length
    out = []
    for i in range(n_segments):
        meta = SegmentMeta(
            subject_id=stream.subject_id,
            segment_id=f"{stream.subject_id}-seg{i:05d}",
            median_timestamp=stream.start_timestamp + (i + 0.5) * seg_seconds)
        out.append(Segment(meta=meta, samples=stream.samples[i * length:(i + 1) * length].copy()))
    return out


def sqi(segment: Segment, threshold: float = 0.5,
        sample_rate_hz: float = SAMPLE_RATE_HZ) -> QualityScore:
    """Heuristic signal-quality index in [0, 1] on a raw segment.

    Average of two cues: positive skewness (clean pulses are narrow and
    upward, so skew is positive; clamped to [0, 2] and halved) and the
    peak normalized autocorrelation over lags corresponding to plausible
    heart rates (40 to 180 BPM), which rewards periodicity. A constant
    segment scores 0.

    The published pipeline gates on an SQI but never defines one; this
    formula is a stand-in and is documented as such.
    """
    x = np.asarray(segment.samples, dtype=float)
    sd = float(np.std(x))
    if sd < _EPS:
        return QualityScore(value=0.0, passed=False)

    skew_score = float(np.clip(skew(x), 0.0, 2.0)) / 2.0

    centered = x - np.mean(x)
    denom = float(np.dot(centered, centered))
    lag_lo = int(np.floor(sample_rate_hz * 60.0 / 180.0))
    lag_hi = int(np.ceil(sample_rate_hz * 60.0 / 40.0))
    lag_hi = min(lag_hi, len(x) - 1)
    best = 0.0
    for lag in range(lag_lo, lag_hi + 1):
        r = float(np.dot(centered[:-lag], centered[lag:])) / denom
        best = max(best, r)
    ac_score = float(np.clip(best, 0.0, 1.0))

    value = 0.5 * (skew_score + ac_score)
    return QualityScore(value=value, passed=value >= threshold)


def bandpass(segment: Segment, low_hz: float = 0.5, high_hz: float = 5.0,
             sample_rate_hz: float = SAMPLE_RATE_HZ) -> Segment:
    """Zero-phase 4th-order Butterworth band-pass.

    Applied forward and backward (filtfilt) with even reflection padding of
    three times the filter order, so in-band peak positions do not shift.
    """
    nyquist = sample_rate_hz / 2.0
    if not 0 < low_hz < high_hz < nyquist:
        raise ValueError(
            f"band edges must satisfy 0 < low < high < {nyquist}, "
            f"got ({low_hz}, {high_hz})")
    b, a = butter(_FILTER_ORDER, [low_hz, high_hz], btype="bandpass", fs=sample_rate_hz)
    filtered = filtfilt(b, a, segment.samples, padtype="even",
                        padlen=3 * _FILTER_ORDER)
    return Segment(meta=segment.meta, samples=filtered)


def zscore(segment: Segment) -> Segment:
    """Zero-mean unit-variance normalization (population std).

    Degenerate segments (std below 1e-12) map to all zeros.
    """
    x = np.asarray(segment.samples, dtype=float)
    sd = float(np.std(x))
    if sd < _EPS:
        return Segment(meta=segment.meta, samples=np.zeros_like(x))
    return Segment(meta=segment.meta, samples=(x - np.mean(x)) / sd)


def preprocess_segment(segment: Segment, sqi_threshold: float = 0.5) -> Segment | None:
    """SQI gate, then filter, then normalize. None when the gate rejects."""
    if not sqi(segment, threshold=sqi_threshold).passed:
        return None
    return zscore(bandpass(segment))


# ---------------------------------------------------------------------------
# stream I/O

def read_streams_csv(path) -> list[RawPpgStream]:
    """Streams from CSV rows: subject_id,start_ts_unix,sample_rate,v0,v1,...

    Rows have variable length; everything after the third column is sample
    data.
    """
    out = []
    with open(path, newline="") as fh:
        header = fh.readline()
        if not header.startswith("subject_id"):
            raise ValueError(f"unexpected header in {path}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) < 4:
                continue
            out.append(RawPpgStream(
                subject_id=parts[0],
                start_timestamp=float(parts[1]),
                sample_rate_hz=float(parts[2]),
                samples=np.array([float(v) for v in parts[3:]], dtype=float)))
    return out


def write_streams_csv(streams: list[RawPpgStream], path) -> None:
    with open(path, "w") as fh:
        fh.write("subject_id,start_ts_unix,sample_rate,values\n")
        for s in streams:
            values = ",".join(repr(float(v)) for v in s.samples)
            fh.write(f"{s.subject_id},{s.start_timestamp!r},{s.sample_rate_hz!r},{values}\n")


def read_stream_binary(payload_path, sidecar_path) -> RawPpgStream:
    """Stream from little-endian float32 payload plus a JSON sidecar header."""
    with open(sidecar_path) as fh:
        header = json.load(fh)
    with open(payload_path, "rb") as fh:
        raw = fh.read()
    n = len(raw) // 4
    samples = np.array(struct.unpack(f"<{n}f", raw[:n * 4]), dtype=float)
    return RawPpgStream(
        subject_id=header["subject_id"],
        start_timestamp=float(header["start_ts_unix"]),
        sample_rate_hz=float(header["sample_rate"]),
        samples=samples)


def write_segments_jsonl(segments: list[Segment], path) -> None:
    """Processed segments as JSON-lines with plain base-10 sample arrays."""
    with open(path, "w") as fh:
        for seg in segments:
            fh.write(json.dumps({
                "subject_id": seg.meta.subject_id,
                "segment_id": seg.meta.segment_id,
                "median_timestamp": seg.meta.median_timestamp,
                "samples": [float(v) for v in seg.samples],
            }, sort_keys=True) + "\n")


def read_segments_jsonl(path) -> list[Segment]:
    out = []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            meta = SegmentMeta(subject_id=rec["subject_id"],
                               segment_id=rec["segment_id"],
                               median_timestamp=rec["median_timestamp"])
            out.append(Segment(meta=meta, samples=np.array(rec["samples"], dtype=float)))
    return out
