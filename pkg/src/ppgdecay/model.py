"""Feedforward scorer (34 -> 32 -> 1) with hand-derived backprop, trained
jointly with the per-biomarker decay rate.

Training minimizes the weighted temporal decay loss; the decay parameter
gets its own Adam instance and learning rate because it is a lone scalar
with small gradients. Inference is the bare network: scoring takes features
only, never a time gap, which is what makes the weighting train-only.

Modes:

* ``full``        - network and raw alpha both learn
* ``fixed_alpha`` - alpha frozen at its initialization (wrong on purpose
                    in the ablation), network learns under those weights
* ``no_decay``    - weights pinned to 1, reducing the objective to plain
                    mean BCE minus a constant
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .decay import DecayFamily, DecayParam, inverse_softplus, softplus
from .features import FeatureTable
from .objective import Hyperparams, LossBreakdown, unit_weight_loss, weighted_loss

LAYER_SIZES = (34, 32, 1)

MODES = ("full", "fixed_alpha", "no_decay")


@dataclass
class ScorerParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    raw_alpha: float

    def copy(self) -> "ScorerParams":
        return ScorerParams(self.w1.copy(), self.b1.copy(), self.w2.copy(),
                            self.b2, self.raw_alpha)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-3
    alpha_learning_rate: float = 1e-2
    optimizer: str = "adam"
    seed: int = 0
    early_stop_patience: int = 20
    family: DecayFamily = DecayFamily.LINEAR
    mode: str = "full"
    init_rate_per_day: float = 0.1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.optimizer != "adam":
            raise ValueError("only adam is supported")


@dataclass
class EpochStats:
    epoch: int
    weighted_bce: float
    mean_weight: float
    total: float
    alpha_hat: float
    valid_total: float


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        std = np.std(X, axis=0)
        return cls(mean=np.mean(X, axis=0), std=np.where(std < 1e-12, 1.0, std))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std


@dataclass
class TrainResult:
    params: ScorerParams
    learned_rate_per_day: float
    loss_trace: list[EpochStats]
    standardizer: Standardizer
    config: TrainConfig
    stopped_epoch: int


def _init_from_rng(rng: np.random.Generator, init_rate_per_day: float) -> ScorerParams:
    n_in, n_hidden, n_out = LAYER_SIZES
    bound1 = np.sqrt(6.0 / (n_in + n_hidden))
    bound2 = np.sqrt(6.0 / (n_hidden + n_out))
    return ScorerParams(
        w1=rng.uniform(-bound1, bound1, size=(n_in, n_hidden)),
        b1=np.zeros(n_hidden),
        w2=rng.uniform(-bound2, bound2, size=n_hidden),
        b2=0.0,
        raw_alpha=inverse_softplus(init_rate_per_day))


def init(seed: int, init_rate_per_day: float = 0.1) -> ScorerParams:
    """Glorot-uniform weights, zero biases, alpha_hat at the given rate."""
    return _init_from_rng(np.random.default_rng(seed), init_rate_per_day)


def forward(params: ScorerParams, features: np.ndarray):
    """Logit(s) for one 34-vector or a batch of rows. Pure and total on
    finite inputs; non-finite features are rejected."""
    X = np.asarray(features, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    single = X.ndim == 1
    X = np.atleast_2d(X)
    hidden = np.maximum(X @ params.w1 + params.b1, 0.0)
    logits = hidden @ params.w2 + params.b2
    return float(logits[0]) if single else logits


def loss_and_grads(params: ScorerParams, X: np.ndarray, labels: np.ndarray,
                   delta_ts: np.ndarray, family: DecayFamily,
                   hp: Hyperparams | None = None, mode: str = "full"
                   ) -> tuple[LossBreakdown, dict[str, np.ndarray | float]]:
    """One forward/backward pass; exact gradients for every parameter.

    The logit gradient comes from the objective; backprop through the ReLU
    layer is chain rule by hand. In no_decay mode raw alpha's gradient is
    identically zero because the weights never move.
    """
    hp = hp or Hyperparams()
    hidden_pre = X @ params.w1 + params.b1
    hidden = np.maximum(hidden_pre, 0.0)
    logits = hidden @ params.w2 + params.b2

    if mode == "no_decay":
        breakdown = unit_weight_loss(logits, labels, hp)
    else:
        param = DecayParam(raw=params.raw_alpha, family=family)
        breakdown = weighted_loss(logits, labels, delta_ts, param, hp)

    d_logits = breakdown.d_total_d_logits
    d_w2 = hidden.T @ d_logits
    d_b2 = float(np.sum(d_logits))
    d_hidden = np.outer(d_logits, params.w2)
    d_pre = d_hidden * (hidden_pre > 0.0)
    grads = {
        "w1": X.T @ d_pre,
        "b1": d_pre.sum(axis=0),
        "w2": d_w2,
        "b2": d_b2,
        "raw_alpha": breakdown.d_total_d_raw_alpha if mode == "full" else 0.0,
    }
    return breakdown, grads


class _Adam:
    def __init__(self, shapes: dict, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros(s) if s else 0.0 for k, s in shapes.items()}
        self.v = {k: np.zeros(s) if s else 0.0 for k, s in shapes.items()}
        self.t = 0

    def step(self, values: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        for k in values:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g ** 2
            m_hat = self.m[k] / (1 - self.beta1 ** self.t)
            v_hat = self.v[k] / (1 - self.beta2 ** self.t)
            out[k] = values[k] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


def _epoch_stats(epoch, params, X, y, dt, vX, vy, vdt, family, hp, mode) -> EpochStats:
    def evaluate(features, labels, gaps):
        logits = forward(params, features)
        if mode == "no_decay":
            return unit_weight_loss(logits, labels, hp)
        return weighted_loss(logits, labels, gaps,
                             DecayParam(raw=params.raw_alpha, family=family), hp)

    train_bd = evaluate(X, y, dt)
    valid_bd = evaluate(vX, vy, vdt)
    return EpochStats(epoch=epoch, weighted_bce=train_bd.weighted_bce,
                      mean_weight=train_bd.mean_weight, total=train_bd.total,
                      alpha_hat=float(softplus(params.raw_alpha)),
                      valid_total=valid_bd.total)


def train_biomarker(train: FeatureTable, valid: FeatureTable,
                    cfg: TrainConfig | None = None,
                    hp: Hyperparams | None = None) -> TrainResult:
    """Adam training with early stopping on the validation total loss.

    Features are standardized with training-split statistics only; the
    fitted transform rides along in the result for inference. Deterministic
    for a fixed (seed, data, config) triple. The best-validation checkpoint
    is restored at the end.
    """
    cfg = cfg or TrainConfig()
    hp = hp or Hyperparams()
    classes = np.unique(train.labels)
    if len(classes) < 2:
        raise ValueError(
            f"single-class training split for biomarker {train.biomarker}: "
            f"labels are all {classes[0]}")

    standardizer = Standardizer.fit(train.X)
    X = standardizer(train.X)
    y = np.asarray(train.labels, dtype=float)
    dt = np.asarray(train.delta_t_days, dtype=float)
    vX = standardizer(valid.X)
    vy = np.asarray(valid.labels, dtype=float)
    vdt = np.asarray(valid.delta_t_days, dtype=float)

    rng = np.random.default_rng(cfg.seed)
    params = _init_from_rng(rng, cfg.init_rate_per_day)

    net_adam = _Adam({"w1": params.w1.shape, "b1": params.b1.shape,
                      "w2": params.w2.shape, "b2": ()}, cfg.learning_rate)
    alpha_adam = _Adam({"raw_alpha": ()}, cfg.alpha_learning_rate)

    best = params.copy()
    best_valid = np.inf
    best_epoch = 0
    bad_epochs = 0
    trace: list[EpochStats] = []

    n = len(y)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            _, grads = loss_and_grads(params, X[batch], y[batch], dt[batch],
                                      cfg.family, hp, cfg.mode)
            stepped = net_adam.step(
                {"w1": params.w1, "b1": params.b1, "w2": params.w2, "b2": params.b2},
                grads)
            params.w1, params.b1 = stepped["w1"], stepped["b1"]
            params.w2, params.b2 = stepped["w2"], float(stepped["b2"])
            if cfg.mode == "full":
                stepped_a = alpha_adam.step({"raw_alpha": params.raw_alpha}, grads)
                params.raw_alpha = float(stepped_a["raw_alpha"])

        stats = _epoch_stats(epoch, params, X, y, dt, vX, vy, vdt,
                             cfg.family, hp, cfg.mode)
        trace.append(stats)
        if stats.valid_total < best_valid:
            best_valid = stats.valid_total
            best = params.copy()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.early_stop_patience:
                break

    return TrainResult(params=best,
                       learned_rate_per_day=float(softplus(best.raw_alpha)),
                       loss_trace=trace, standardizer=standardizer,
                       config=cfg, stopped_epoch=best_epoch)


def predict_logits(result: TrainResult, features: np.ndarray) -> np.ndarray:
    """Score segments. Takes features only; the decay machinery has no
    inference-time surface at all."""
    return forward(result.params, result.standardizer(features))


# ---------------------------------------------------------------------------
# checkpoint serialization

def save_checkpoint(result: TrainResult, path, config_digest: str = "") -> None:
    doc = {
        "layer_sizes": list(LAYER_SIZES),
        "w1": [list(map(float, row)) for row in result.params.w1],
        "b1": list(map(float, result.params.b1)),
        "w2": list(map(float, result.params.w2)),
        "b2": float(result.params.b2),
        "raw_alpha": float(result.params.raw_alpha),
        "learned_rate_per_day": result.learned_rate_per_day,
        "family": result.config.family.value,
        "mode": result.config.mode,
        "standardizer_mean": list(map(float, result.standardizer.mean)),
        "standardizer_std": list(map(float, result.standardizer.std)),
        "stopped_epoch": result.stopped_epoch,
        "config_digest": config_digest,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> TrainResult:
    with open(path) as fh:
        doc = json.load(fh)
    params = ScorerParams(
        w1=np.array(doc["w1"], dtype=float),
        b1=np.array(doc["b1"], dtype=float),
        w2=np.array(doc["w2"], dtype=float),
        b2=float(doc["b2"]),
        raw_alpha=float(doc["raw_alpha"]))
    cfg = TrainConfig(family=DecayFamily.from_name(doc["family"]), mode=doc["mode"])
    standardizer = Standardizer(mean=np.array(doc["standardizer_mean"]),
                                std=np.array(doc["standardizer_std"]))
    return TrainResult(params=params,
                       learned_rate_per_day=float(doc["learned_rate_per_day"]),
                       loss_trace=[], standardizer=standardizer, config=cfg,
                       stopped_epoch=int(doc["stopped_epoch"]))
