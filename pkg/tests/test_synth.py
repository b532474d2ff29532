"""Synthetic generators: waveforms and staleness-controlled cohorts."""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import chi2

from ppgdecay.cohort import Biomarker
from ppgdecay.decay import DecayFamily
from ppgdecay.features import N_FEATURES, detect_beats
from ppgdecay.signal import SEGMENT_LEN, segment_stream, sqi
from ppgdecay.synth import (
    SynthCohortConfig,
    WaveformConfig,
    gen_cohort,
    gen_waveform,
    match_probability,
)


class TestWaveform:
    def test_deterministic(self):
        cfg = WaveformConfig(noise_std=0.05, seed=5)
        a = gen_waveform(cfg, duration_s=20.0)
        b = gen_waveform(cfg, duration_s=20.0)
        assert np.array_equal(a.samples, b.samples)

    def test_shape_and_rate(self):
        stream = gen_waveform(WaveformConfig(), duration_s=40.0)
        assert stream.sample_rate_hz == 25.0
        assert len(stream.samples) == 1000

    def test_beats_per_segment_track_heart_rate(self):
        stream = gen_waveform(WaveformConfig(heart_rate_bpm=60.0,
                                             hrv_std_ms=10.0, seed=2),
                              duration_s=60.0)
        for seg in segment_stream(stream):
            beats = detect_beats(seg)
            assert 8 <= len(beats.peak_indices) <= 12

    def test_clean_passes_sqi_noisy_fails(self):
        clean_cfg = WaveformConfig(baseline_wander_amp=0.0, seed=3)
        clean = gen_waveform(clean_cfg, duration_s=10.0)
        assert sqi(segment_stream(clean)[0]).passed
        sd = float(np.std(clean.samples))
        noisy_cfg = WaveformConfig(baseline_wander_amp=0.0,
                                   noise_std=5.0 * sd, seed=3)
        noisy = gen_waveform(noisy_cfg, duration_s=10.0)
        assert not sqi(segment_stream(noisy)[0]).passed

    def test_validation(self):
        with pytest.raises(ValueError):
            WaveformConfig(heart_rate_bpm=30.0)
        with pytest.raises(ValueError):
            WaveformConfig(heart_rate_bpm=200.0)
        with pytest.raises(ValueError):
            WaveformConfig(noise_std=-0.1)
        with pytest.raises(ValueError):
            gen_waveform(WaveformConfig(), duration_s=5.0)


class TestCohortStructure:
    def test_deterministic(self):
        cfg = SynthCohortConfig(n_subjects=20, segments_min=3, segments_max=5,
                                seed=8)
        a = gen_cohort(cfg)[0]
        b = gen_cohort(cfg)[0]
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.delta_t_days, b.delta_t_days)

    def test_adding_subjects_preserves_earlier_ones(self):
        """Each subject owns a child generator, so growing the cohort
        never reshuffles already-generated subjects."""
        small = gen_cohort(SynthCohortConfig(n_subjects=20, segments_min=3,
                                             segments_max=5, seed=9))[0]
        large = gen_cohort(SynthCohortConfig(n_subjects=30, segments_min=3,
                                             segments_max=5, seed=9))[0]
        head = large.subject_rows(set(small.subject_ids))
        assert list(head.segment_ids) == list(small.segment_ids)
        assert np.array_equal(head.X, small.X)
        assert np.array_equal(head.delta_t_days, small.delta_t_days)

    def test_ids_labels_and_gaps(self):
        cfg = SynthCohortConfig(n_subjects=40, segments_min=3, segments_max=6,
                                window_days=30.0, seed=10)
        table = gen_cohort(cfg)[0]
        assert np.all(table.delta_t_days >= 0.0)
        assert np.all(table.delta_t_days <= 30.0)
        assert table.X.shape[1] == N_FEATURES
        for sid in set(table.subject_ids):
            rows = table.subject_rows({sid})
            i = int(sid[1:])
            assert 3 <= len(rows) <= 6
            assert np.all(rows.labels == i % 2)
        # alternating latent labels keep the classes balanced
        per_subject = [int(s[1:]) % 2 for s in set(table.subject_ids)]
        assert sum(per_subject) == 20

    def test_segment_id_format(self):
        table = gen_cohort(SynthCohortConfig(n_subjects=12, segments_min=3,
                                             segments_max=3, seed=0))[0]
        assert table.segment_ids[0] == "S0000-seg000"
        assert table.subject_ids[0] == "S0000"

    def test_validation(self):
        with pytest.raises(ValueError):
            SynthCohortConfig(n_subjects=5)
        with pytest.raises(ValueError):
            SynthCohortConfig(true_staleness_rate=-0.1)
        with pytest.raises(ValueError):
            SynthCohortConfig(n_informative=0)
        with pytest.raises(ValueError):
            SynthCohortConfig(n_informative=N_FEATURES + 1)
        with pytest.raises(ValueError):
            SynthCohortConfig(segments_min=4, segments_max=3)


class TestStalenessMechanism:
    def test_zero_rate_means_perfect_labels(self):
        """With no staleness every segment reflects the latent class, so
        the informative features separate the labels without error."""
        cfg = SynthCohortConfig(n_subjects=40, segments_min=3, segments_max=5,
                                true_staleness_rate=0.0, class_separation=2.0,
                                feature_noise_std=0.01, seed=11)
        table = gen_cohort(cfg)[0]
        assert np.array_equal(np.sign(table.X[:, 0]), 2.0 * table.labels - 1.0)

    def test_huge_rate_means_coin_flip(self):
        cfg = SynthCohortConfig(n_subjects=200, segments_min=4, segments_max=8,
                                true_staleness_rate=100.0, class_separation=2.0,
                                feature_noise_std=0.05, seed=12)
        table = gen_cohort(cfg)[0]
        inferred = (np.mean(table.X[:, :cfg.n_informative], axis=1) > 0).astype(int)
        match = float(np.mean(inferred == table.labels))
        assert abs(match - 0.5) < 0.05

    def test_consistency_curve_tracks_match_probability(self):
        """Binned by gap, the observed label-match frequency must follow
        (1 + g(alpha dt)) / 2: past the cutoff a segment's state is a coin
        flip, which agrees with the label half the time. A chi-square over
        10 bins at the 99th percentile guards the whole curve."""
        cfg = SynthCohortConfig(n_subjects=400, segments_min=3, segments_max=6,
                                true_staleness_rate=0.15, class_separation=2.0,
                                feature_noise_std=0.1, seed=13)
        table = gen_cohort(cfg)[0]
        inferred = (np.mean(table.X[:, :cfg.n_informative], axis=1) > 0).astype(int)
        matched = (inferred == table.labels).astype(float)
        expected = match_probability(cfg, table.delta_t_days)

        edges = np.linspace(0.0, 30.0, 11)
        stat = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            mask = (table.delta_t_days >= lo) & (table.delta_t_days < hi)
            assert np.sum(mask) > 50
            observed = float(np.sum(matched[mask]))
            mean = float(np.sum(expected[mask]))
            var = float(np.sum(expected[mask] * (1.0 - expected[mask])))
            stat += (observed - mean) ** 2 / var
        assert stat < chi2.ppf(0.99, df=10)

    def test_match_probability_hand_values(self):
        cfg = SynthCohortConfig(n_subjects=10, true_staleness_rate=0.15,
                                staleness_family=DecayFamily.LINEAR)
        assert_allclose(match_probability(cfg, 0.0), 1.0)
        assert_allclose(match_probability(cfg, 10.0 / 3.0), 0.75, rtol=1e-12)
        assert_allclose(match_probability(cfg, 20.0), 0.5)
        out = match_probability(cfg, np.array([0.0, 30.0]))
        assert out.shape == (2,)


class TestManifest:
    def test_manifest_rebuilds_identical_cohort(self):
        cfg = SynthCohortConfig(n_subjects=25, segments_min=3, segments_max=5,
                                true_staleness_rate=0.3,
                                staleness_family=DecayFamily.EXPONENTIAL,
                                biomarker=Biomarker.WBC, seed=14)
        table, manifest = gen_cohort(cfg)
        payload = json.loads(json.dumps(manifest))  # must be JSON-safe
        rebuilt_cfg = SynthCohortConfig(**{
            **payload,
            "staleness_family": DecayFamily.from_name(payload["staleness_family"]),
            "biomarker": Biomarker.from_string(payload["biomarker"]),
        })
        rebuilt = gen_cohort(rebuilt_cfg)[0]
        assert np.array_equal(rebuilt.X, table.X)
        assert np.array_equal(rebuilt.delta_t_days, table.delta_t_days)
        assert list(rebuilt.segment_ids) == list(table.segment_ids)

    def test_manifest_records_the_knobs(self):
        cfg = SynthCohortConfig(n_subjects=12, seed=3)
        _, manifest = gen_cohort(cfg)
        assert manifest["n_subjects"] == 12
        assert manifest["seed"] == 3
        assert manifest["staleness_family"] == "linear"
        assert manifest["biomarker"] == "Potassium"
        assert manifest["window_days"] == 30.0
