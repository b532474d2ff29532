"""Decay families and the learnable staleness rate.

A sample recorded ``delta_t`` days away from its lab draw is down-weighted
by ``w = g(alpha_hat * delta_t)`` where ``g`` is one of four monotone decay
shapes and ``alpha_hat = softplus(alpha_raw)`` is a nonnegative per-biomarker
rate in 1/day. Everything here is plain elementwise math; functions accept
scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class DecayFamily(enum.Enum):
    """The four supported weight-vs-gap shapes."""

    LINEAR = "linear"
    EXPONENTIAL = "exponential"
    INVERSE = "inverse"
    COSINE = "cosine"

    @classmethod
    def from_name(cls, name: str) -> "DecayFamily":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown decay family {name!r}; valid names: {valid}") from None


def softplus(raw):
    """Numerically safe ln(1 + exp(raw)).

    Uses the max(raw, 0) + log1p(exp(-|raw|)) branch so neither tail
    overflows; softplus(50) == 50 to machine precision and softplus(-50)
    returns exp(-50) rather than underflowing through exp(50).
    """
    raw = np.asarray(raw, dtype=float)
    out = np.maximum(raw, 0.0) + np.log1p(np.exp(-np.abs(raw)))
    return out if out.ndim else float(out)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.clip(x, -700, 700))),
                   np.exp(np.clip(x, -700, 700)) / (1.0 + np.exp(np.clip(x, -700, 700))))
    return out if out.ndim else float(out)


def inverse_softplus(rate: float) -> float:
    """Raw value whose softplus equals ``rate`` (rate > 0)."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    # ln(e^rate - 1), written with expm1 for small rates
    return float(math.log(math.expm1(rate)))


def family_weight(family: DecayFamily, x):
    """g(x) for x = rate * delta_t >= 0. All shapes map 0 -> 1 into [0, 1]."""
    x = np.asarray(x, dtype=float)
    if family is DecayFamily.LINEAR:
        out = np.maximum(0.0, 1.0 - x)
    elif family is DecayFamily.EXPONENTIAL:
        out = np.exp(-x)
    elif family is DecayFamily.INVERSE:
        out = 1.0 / (1.0 + x)
    elif family is DecayFamily.COSINE:
        out = np.where(x <= 1.0, 0.5 * (1.0 + np.cos(np.pi * np.minimum(x, 1.0))), 0.0)
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unhandled family {family}")
    return out if out.ndim else float(out)


def family_dweight_dx(family: DecayFamily, x):
    """g'(x), with the flat-side subgradient 0 at the Linear/Cosine kink x = 1."""
    x = np.asarray(x, dtype=float)
    if family is DecayFamily.LINEAR:
        out = np.where(x < 1.0, -1.0, 0.0)
    elif family is DecayFamily.EXPONENTIAL:
        out = -np.exp(-x)
    elif family is DecayFamily.INVERSE:
        out = -1.0 / (1.0 + x) ** 2
    elif family is DecayFamily.COSINE:
        out = np.where(x < 1.0, -0.5 * np.pi * np.sin(np.pi * np.minimum(x, 1.0)), 0.0)
    else:  # pragma: no cover
        raise ValueError(f"unhandled family {family}")
    return out if out.ndim else float(out)


@dataclass
class DecayParam:
    """Raw (unconstrained) decay parameter plus its family.

    ``rate`` is the softplus image of ``raw`` and is recomputed on access so
    the invariant rate == softplus(raw) >= 0 cannot drift after updates.
    """

    raw: float
    family: DecayFamily = DecayFamily.LINEAR

    @property
    def rate(self) -> float:
        return float(softplus(self.raw))

    @classmethod
    def from_rate(cls, rate: float, family: DecayFamily = DecayFamily.LINEAR) -> "DecayParam":
        return cls(raw=inverse_softplus(rate), family=family)


def weight(param: DecayParam, delta_t_days):
    """Sample weight w = g(rate * delta_t) in [0, 1].

    delta_t_days may be a scalar or array of nonnegative gaps in days.
    """
    dt = np.asarray(delta_t_days, dtype=float)
    if np.any(dt < 0):
        raise ValueError("delta_t_days must be nonnegative")
    return family_weight(param.family, param.rate * dt)


def dweight_draw(param: DecayParam, delta_t_days):
    """d w / d raw = g'(rate * dt) * dt * sigmoid(raw).

    The sigmoid factor is the softplus derivative; at kinks of Linear and
    Cosine (x exactly 1) the flat-side value 0 is used.
    """
    dt = np.asarray(delta_t_days, dtype=float)
    if np.any(dt < 0):
        raise ValueError("delta_t_days must be nonnegative")
    x = param.rate * dt
    out = family_dweight_dx(param.family, x) * dt * sigmoid(param.raw)
    return out if out.ndim else float(out)
