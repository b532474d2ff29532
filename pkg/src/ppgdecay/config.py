"""Flat key=value configuration and run manifests.

Config files are plain text: one ``key = value`` per line, ``#`` comments.
CLI flags override file values. Every key has a documented default in
``DEFAULTS`` below except those a command explicitly requires; unknown keys
are errors so typos never pass silently.

Each artifact-producing command writes one manifest JSON capturing the
resolved config, seeds, input digests, tool version, timestamps, and output
paths. The config digest covers all config fields (timestamps excluded),
and a command rerun from its manifest reproduces its primary outputs byte
for byte.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, asdict

from . import __version__


class ConfigError(ValueError):
    """Invalid, unknown, or missing configuration; exits with code 2."""


# key -> (default value, help). Values keep their python types; the parser
# coerces file/flag strings to the default's type.
DEFAULTS: dict[str, tuple[object, str]] = {
    "seed": (0, "master random seed"),
    "biomarker": ("Potassium", "biomarker name for labeling and reports"),
    "window_days": (30.0, "max gap between a segment and its nearest lab"),
    "sqi_threshold": (0.5, "quality gate threshold in [0, 1]"),
    "lower_q": (0.25, "lower extreme quantile for labeling"),
    "upper_q": (0.75, "upper extreme quantile for labeling"),
    # loss
    "lam": (0.5, "mean-weight bonus coefficient (fixed; see --unsafe-tune-lambda)"),
    "family": ("linear", "decay family: linear|exponential|inverse|cosine"),
    "mode": ("full", "training mode: full|fixed_alpha|no_decay"),
    # training
    "epochs": (200, "max training epochs"),
    "batch_size": (256, "minibatch size"),
    "learning_rate": (1e-3, "Adam learning rate for network parameters"),
    "alpha_learning_rate": (1e-2, "Adam learning rate for the decay parameter"),
    "early_stop_patience": (20, "epochs without validation improvement before stopping"),
    "init_rate_per_day": (0.1, "softplus image of the initial decay parameter"),
    "fixed_alpha_rate": (0.5, "frozen rate used by the fixed-alpha ablation"),
    "k_folds": (5, "cross-validation folds"),
    "method": ("ours", "eval method: ours|rf|ablation_fixed_alpha|ablation_no_decay"),
    # random forest
    "n_trees": (100, "forest size"),
    "max_depth": (12, "tree depth limit"),
    "min_leaf": (5, "minimum samples per leaf"),
    "features_per_split": (5, "features sampled at each split"),
    "bootstrap": (True, "bootstrap rows per tree"),
    # synthetic cohorts
    "n_subjects": (300, "cohort size (synth)"),
    "segments_min": (5, "min segments per subject (synth)"),
    "segments_max": (10, "max segments per subject (synth)"),
    "true_staleness_rate": (0.15, "generative decay rate in 1/day (synth)"),
    "staleness_family": ("linear", "generative decay family (synth)"),
    "class_separation": (1.0, "class mean shift per informative feature (synth)"),
    "feature_noise_std": (1.0, "feature noise sigma (synth)"),
    "n_informative": (5, "number of class-informative features (synth)"),
    # synthetic waveforms
    "kind": ("features", "synth output kind: features|waveforms"),
    "n_streams": (8, "number of waveform streams (synth --kind waveforms)"),
    "duration_s": (60.0, "stream duration in seconds"),
    "heart_rate_bpm": (60.0, "synthetic heart rate"),
    "hrv_std_ms": (20.0, "beat timing jitter"),
    "noise_std": (0.0, "additive waveform noise sigma"),
}

REQUIRED: dict[str, tuple[str, ...]] = {
    "synth": ("n_subjects",),
}


def parse_config_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key] = value
    return out


def _coerce(key: str, value: object) -> object:
    default, _ = DEFAULTS[key]
    if not isinstance(value, str):
        return value
    try:
        if isinstance(default, bool):
            low = value.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        return value
    except ValueError:
        raise ConfigError(
            f"config field {key!r}: cannot parse {value!r} as "
            f"{type(default).__name__}") from None


def resolve(command: str, *sources: dict | None) -> dict[str, object]:
    """Layer config sources over the defaults; later sources win.

    Sources may carry strings (config files, --set flags) or already-typed
    values (a manifest being replayed). Unknown keys and uncoercible values
    raise ConfigError; command-specific required fields must appear in some
    source.
    """
    merged: dict[str, object] = {k: v for k, (v, _) in DEFAULTS.items()}
    explicit: set[str] = set()
    for source in sources:
        for key, value in (source or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config field {key!r}")
            merged[key] = _coerce(key, value)
            explicit.add(key)
    for key in REQUIRED.get(command, ()):
        if key not in explicit:
            raise ConfigError(f"command {command!r} requires config field {key!r}")
    return merged


def config_digest(config: dict[str, object]) -> str:
    payload = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(payload).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: list[int]
    input_digests: dict[str, str] = field(default_factory=dict)
    tool_version: str = __version__
    started_at: float = 0.0
    finished_at: float = 0.0
    outputs: list[str] = field(default_factory=list)

    @property
    def digest(self) -> str:
        return config_digest(self.config)


def start_manifest(command: str, config: dict, inputs: dict[str, str] | None = None
                   ) -> RunManifest:
    return RunManifest(command=command, config=dict(config),
                       seeds=[int(config.get("seed", 0))],
                       input_digests=dict(inputs or {}),
                       started_at=time.time())


def write_manifest(manifest: RunManifest, path) -> None:
    manifest.finished_at = time.time()
    doc = asdict(manifest)
    doc["config_digest"] = manifest.digest
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1, default=str)
        fh.write("\n")


def read_manifest(path) -> RunManifest:
    with open(path) as fh:
        doc = json.load(fh)
    doc.pop("config_digest", None)
    return RunManifest(**doc)
