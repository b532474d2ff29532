"""Weighted temporal decay loss.

total = (1/N) sum_i w_i * BCE(p_i, y_i)  -  lam * mean(w)

where w_i = g(alpha_hat * delta_t_i) comes from :mod:`ppgdecay.decay` and the
mean-weight bonus stops the degenerate all-zero-weight solution. Weights are
constants with respect to the logits; only the raw decay parameter receives
gradient through them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decay import DecayParam, dweight_draw, sigmoid, weight


@dataclass
class Hyperparams:
    """Loss constants. ``lam`` stays fixed across folds and biomarkers."""

    lam: float = 0.5
    bce_epsilon: float = 1e-7


@dataclass
class LossBreakdown:
    weighted_bce: float
    mean_weight: float
    total: float
    d_total_d_raw_alpha: float
    d_total_d_logits: np.ndarray = field(repr=False)


def bce(p, y, epsilon: float = 1e-7):
    """Elementwise binary cross-entropy with probability clamping."""
    p = np.clip(np.asarray(p, dtype=float), epsilon, 1.0 - epsilon)
    y = np.asarray(y, dtype=float)
    out = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return out if out.ndim else float(out)


def weighted_loss(logits, labels, delta_ts, param: DecayParam,
                  hp: Hyperparams | None = None) -> LossBreakdown:
    """Evaluate the loss and both analytic gradients for one batch.

    Gradient w.r.t. logit i is w_i * (p_i - y_i) / N; gradient w.r.t. the
    raw decay parameter is (1/N) sum_i (BCE_i - lam) * dw_i/draw.
    """
    hp = hp or Hyperparams()
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=float)
    delta_ts = np.asarray(delta_ts, dtype=float)
    if not (logits.shape == labels.shape == delta_ts.shape):
        raise ValueError("logits, labels and delta_ts must have matching shapes")
    n = logits.size
    if n == 0:
        raise ValueError("empty batch")

    p = np.clip(sigmoid(logits), hp.bce_epsilon, 1.0 - hp.bce_epsilon)
    losses = -(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p))
    w = weight(param, delta_ts)

    weighted_bce = float(np.mean(w * losses))
    mean_weight = float(np.mean(w))
    total = weighted_bce - hp.lam * mean_weight

    dw = dweight_draw(param, delta_ts)
    d_raw = float(np.mean((losses - hp.lam) * dw))
    d_logits = w * (p - labels) / n
    return LossBreakdown(weighted_bce, mean_weight, total, d_raw, d_logits)


def unit_weight_loss(logits, labels, hp: Hyperparams | None = None) -> LossBreakdown:
    """The w == 1 reduction of the loss (the no-decay ablation).

    Equals plain mean BCE minus the constant lam; the raw decay parameter
    gets exactly zero gradient because the weights never vary.
    """
    hp = hp or Hyperparams()
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if logits.shape != labels.shape:
        raise ValueError("logits and labels must have matching shapes")
    n = logits.size
    if n == 0:
        raise ValueError("empty batch")
    p = np.clip(sigmoid(logits), hp.bce_epsilon, 1.0 - hp.bce_epsilon)
    losses = -(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p))
    mean_bce = float(np.mean(losses))
    return LossBreakdown(mean_bce, 1.0, mean_bce - hp.lam, 0.0, (p - labels) / n)


def bonus_interpretation_check(param: DecayParam, delta_ts,
                               hp: Hyperparams | None = None) -> bool:
    """Self-test of the bonus term: at per-sample BCE == lam the decay
    parameter feels no net pressure.

    Returns True iff d total / d raw vanishes when every BCE_i equals lam.
    Not used by training; it documents why the -lam * mean(w) term balances
    the weighted term.
    """
    hp = hp or Hyperparams()
    delta_ts = np.asarray(delta_ts, dtype=float)
    losses = np.full(delta_ts.shape, hp.lam)
    d_raw = float(np.mean((losses - hp.lam) * dweight_draw(param, delta_ts)))
    return abs(d_raw) < 1e-12
