"""Time-gap-aware training for biomarker classification from wearable PPG.

Segments are labeled by their nearest lab draw; the training loss
down-weights each segment by a learnable decay over the gap between
recording and draw. This package carries the whole experiment around that
idea: preprocessing, features, the weighted objective, a small scorer, a
random-forest baseline, subject-stratified evaluation, and synthetic
cohorts with controllable staleness for verification.
"""

__version__ = "0.1.0"

from .cohort import (  # noqa: F401
    Biomarker, FoldAssignment, LabRecord, LabeledSegment, SegmentMeta,
    attach_labels, cap_segments, quantile_label, stratified_folds,
)
from .decay import DecayFamily, DecayParam, dweight_draw, softplus, weight  # noqa: F401
from .features import (  # noqa: F401
    FEATURE_NAMES, BeatSequence, FeatureTable, FeatureVector, featurize,
)
from .model import ScorerParams, TrainConfig, TrainResult, train_biomarker  # noqa: F401
from .objective import Hyperparams, LossBreakdown, weighted_loss  # noqa: F401
from .evaluation import MetricReport, auprc, auroc, run_cv  # noqa: F401
from .signal import RawPpgStream, Segment, bandpass, segment_stream, sqi, zscore  # noqa: F401
from .synth import SynthCohortConfig, WaveformConfig, gen_cohort, gen_waveform  # noqa: F401
