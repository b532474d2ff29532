"""Synthetic data at two levels.

Waveform level: pulse trains built from two Gaussians per beat (systolic
peak plus dicrotic bump) with timing jitter, baseline wander, and additive
noise. These exercise the signal and feature pipeline end to end against
known ground truth (heart rate, beat count, quality).

Feature level: cohorts whose label staleness is controlled by a known decay
family and rate. Each subject has one latent binary state at lab-draw time;
a segment recorded ``dt`` days away keeps that state with probability
``g_true(rate * dt)`` and otherwise re-draws it uniformly, so the recorded
lab label matches the segment's feature-generating class with probability
``(1 + g_true) / 2``. A segment's usefulness for learning the label is then
exactly ``g_true``, which is the quantity the trained decay weight should
recover; the generative rate lands in the manifest for that comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .cohort import Biomarker
from .decay import DecayFamily, family_weight
from .features import N_FEATURES, FeatureTable
from .signal import SAMPLE_RATE_HZ, RawPpgStream


@dataclass
class WaveformConfig:
    heart_rate_bpm: float = 60.0
    hrv_std_ms: float = 20.0
    noise_std: float = 0.0
    baseline_wander_hz: float = 0.1
    baseline_wander_amp: float = 0.3
    systolic_amp: float = 1.0
    systolic_offset_s: float = 0.20
    systolic_width_s: float = 0.08
    dicrotic_amp: float = 0.35
    dicrotic_offset_s: float = 0.45
    dicrotic_width_s: float = 0.09
    seed: int = 0

    def __post_init__(self):
        if not 40.0 <= self.heart_rate_bpm <= 180.0:
            raise ValueError("heart_rate_bpm must lie in [40, 180]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")


def gen_waveform(cfg: WaveformConfig, duration_s: float,
                 subject_id: str = "synth", start_timestamp: float = 1.0e9
                 ) -> RawPpgStream:
    """Deterministic synthetic PPG stream at 25 Hz."""
    if duration_s < 10.0:
        raise ValueError("duration must cover at least one segment (10 s)")
    rng = np.random.default_rng(cfg.seed)
    n = round(duration_s * SAMPLE_RATE_HZ)
    t = np.arange(n) / SAMPLE_RATE_HZ

    period = 60.0 / cfg.heart_rate_bpm
    beat_times = []
    now = 0.0
    while now < duration_s:
        beat_times.append(now)
        jitter = rng.normal(0.0, cfg.hrv_std_ms / 1000.0)
        now += max(period + jitter, 0.4 * period)

    x = np.zeros(n)
    for tb in beat_times:
        x += cfg.systolic_amp * np.exp(
            -0.5 * ((t - tb - cfg.systolic_offset_s) / cfg.systolic_width_s) ** 2)
        x += cfg.dicrotic_amp * np.exp(
            -0.5 * ((t - tb - cfg.dicrotic_offset_s) / cfg.dicrotic_width_s) ** 2)
    x += cfg.baseline_wander_amp * np.sin(2 * np.pi * cfg.baseline_wander_hz * t)
    if cfg.noise_std > 0:
        x += rng.normal(0.0, cfg.noise_std, size=n)

    return RawPpgStream(subject_id=subject_id, start_timestamp=start_timestamp,
                        sample_rate_hz=SAMPLE_RATE_HZ, samples=x)


@dataclass
class SynthCohortConfig:
    n_subjects: int = 300
    segments_min: int = 5
    segments_max: int = 10
    true_staleness_rate: float = 0.15  # 1/day
    staleness_family: DecayFamily = DecayFamily.LINEAR
    window_days: float = 30.0
    class_separation: float = 1.0  # mean shift per informative feature
    feature_noise_std: float = 1.0
    n_informative: int = 5
    biomarker: Biomarker = Biomarker.POTASSIUM
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 10:
            raise ValueError("need at least 10 subjects")
        if self.true_staleness_rate < 0:
            raise ValueError("true_staleness_rate must be nonnegative")
        if not 1 <= self.n_informative <= N_FEATURES:
            raise ValueError(f"n_informative must lie in [1, {N_FEATURES}]")
        if self.segments_min < 1 or self.segments_max < self.segments_min:
            raise ValueError("bad segments_min/segments_max range")


def gen_cohort(cfg: SynthCohortConfig) -> tuple[FeatureTable, dict]:
    """Feature-level cohort with known staleness; returns (table, manifest).

    Subjects alternate latent labels so classes stay balanced. Each subject
    draws from its own child generator, so the cohort is reproducible and
    adding subjects never perturbs earlier ones. Class information lives in
    the first ``n_informative`` features as a +-class_separation/2 mean
    shift; every feature carries Gaussian noise.
    """
    subject_ids, segment_ids, deltas, labels = [], [], [], []
    rows = []
    for i in range(cfg.n_subjects):
        rng = np.random.default_rng([cfg.seed, i])
        latent = i % 2
        n_seg = int(rng.integers(cfg.segments_min, cfg.segments_max + 1))
        for j in range(n_seg):
            dt = float(rng.uniform(0.0, cfg.window_days))
            g = float(family_weight(cfg.staleness_family,
                                    cfg.true_staleness_rate * dt))
            if rng.random() < g:
                state = latent
            else:
                state = int(rng.integers(0, 2))
            mean = np.zeros(N_FEATURES)
            mean[:cfg.n_informative] = (2 * state - 1) * cfg.class_separation / 2.0
            rows.append(mean + rng.normal(0.0, cfg.feature_noise_std, N_FEATURES))
            subject_ids.append(f"S{i:04d}")
            segment_ids.append(f"S{i:04d}-seg{j:03d}")
            deltas.append(dt)
            labels.append(latent)

    table = FeatureTable(
        biomarker=cfg.biomarker,
        subject_ids=np.array(subject_ids, dtype=object),
        segment_ids=np.array(segment_ids, dtype=object),
        delta_t_days=np.array(deltas, dtype=float),
        labels=np.array(labels, dtype=int),
        X=np.vstack(rows))
    manifest = asdict(cfg)
    manifest["staleness_family"] = cfg.staleness_family.value
    manifest["biomarker"] = cfg.biomarker.value
    return table, manifest


def match_probability(cfg: SynthCohortConfig, delta_t_days) -> np.ndarray:
    """P(feature class == recorded label | dt) under the generator above."""
    g = family_weight(cfg.staleness_family,
                      cfg.true_staleness_rate * np.asarray(delta_t_days, dtype=float))
    return (1.0 + g) / 2.0
