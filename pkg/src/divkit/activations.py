"""Base activation functions and their Lipschitz constants.

Each activation is registered with its elementwise forward and exact derivative.
Lipschitz constants are analytic where that is safe (relu, identity) and
estimated on a grid otherwise, with a small safety factor so downstream
inequality checks use a valid upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

ACTIVATION_KINDS = ("relu", "gelu", "swish", "tanh", "identity")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def act_forward(kind: str, x):
    """Elementwise activation. x is a numpy array (any shape)."""
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "gelu":
        return 0.5 * x * (1.0 + erf(x / _SQRT2))
    if kind == "swish":
        return x * _sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "identity":
        return x
    raise ValueError(f"unknown activation kind: {kind!r}")


def act_derivative(kind: str, x):
    """Exact elementwise derivative (subgradient at relu's kink: 0)."""
    if kind == "relu":
        return (x > 0.0).astype(x.dtype)
    if kind == "gelu":
        return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    if kind == "swish":
        s = _sigmoid(x)
        return s * (1.0 + x * (1.0 - s))
    if kind == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t
    if kind == "identity":
        return np.ones_like(x)
    raise ValueError(f"unknown activation kind: {kind!r}")


@dataclass(frozen=True)
class ActivationSpec:
    kind: str
    lipschitz: float

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation kind: {self.kind!r}")
        if self.lipschitz <= 0:
            raise ValueError("lipschitz must be positive")


# 1.01 safety factor keeps grid estimates valid upper bounds.
LIPSCHITZ_SAFETY = 1.01


def lipschitz_estimate(kind: str, lo: float = -10.0, hi: float = 10.0,
                       grid_points: int = 1_000_000) -> float:
    """Upper bound on sup |sigma'(x)| over [lo, hi].

    relu/identity are returned exactly; smooth activations are estimated with
    central differences on a uniform grid and inflated by the safety factor.
    """
    if lo >= hi:
        raise ValueError("lo must be < hi")
    if grid_points < 1000:
        raise ValueError("grid_points must be >= 1000")
    if kind in ("relu", "identity"):
        return 1.0
    x = np.linspace(lo, hi, grid_points)
    h = 1e-5
    slope = np.abs(act_forward(kind, x + h) - act_forward(kind, x - h)) / (2.0 * h)
    return float(np.max(slope)) * LIPSCHITZ_SAFETY


def make_spec(kind: str, lo: float = -10.0, hi: float = 10.0,
              grid_points: int = 100_000) -> ActivationSpec:
    return ActivationSpec(kind=kind, lipschitz=lipschitz_estimate(kind, lo, hi, grid_points))
