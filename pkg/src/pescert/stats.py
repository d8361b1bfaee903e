"""Poisson sampling of behaviors and first-order error propagation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .behaviors import Behavior, collins_gisin_regularize


@dataclass(frozen=True)
class MeasuredBehavior:
    """Estimated behavior with one standard deviation per probability cell."""

    behavior: Behavior
    sigma: np.ndarray

    def __post_init__(self) -> None:
        s = np.array(self.sigma, dtype=float)
        if s.shape != (2, 2, 2, 2):
            raise ValueError(f"sigma must have shape (2, 2, 2, 2), got {s.shape}")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ValueError("sigma must be finite and nonnegative")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @classmethod
    def exact(cls, b: Behavior) -> "MeasuredBehavior":
        return cls(b, np.zeros((2, 2, 2, 2)))

    @property
    def is_exact(self) -> bool:
        return not np.any(self.sigma)

    def regularized(self) -> "MeasuredBehavior":
        """No-signaling projection of the estimate; the raw sigmas are kept."""
        return MeasuredBehavior(collins_gisin_regularize(self.behavior), self.sigma)


def sample_behavior(b: Behavior, counts_per_setting: float, seed: int | np.random.Generator = 0) -> MeasuredBehavior:
    """Draw independent Poisson counts with means counts * P(ab|xy).

    Frequencies are the counts divided by the observed total N of their
    setting, and each cell gets sigma = sqrt(n) / N. An infinite count
    returns the exact behavior with zero sigma.
    """
    if not counts_per_setting > 0:
        raise ValueError(f"counts_per_setting must be positive, got {counts_per_setting!r}")
    if math.isinf(counts_per_setting):
        return MeasuredBehavior.exact(b)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = rng.poisson(counts_per_setting * b.p).astype(float)
    totals = n.sum(axis=(0, 1))
    if np.any(totals == 0):
        raise ValueError("a setting recorded no counts; increase counts_per_setting")
    freq = n / totals
    sigma = np.sqrt(n) / totals
    return MeasuredBehavior(Behavior(freq), sigma)


def propagate_affine(m: MeasuredBehavior, coefficients: np.ndarray, constant: float = 0.0) -> tuple[float, float]:
    """Value and 1-sigma error of sum c(ab|xy) P(ab|xy) + constant.

    The frequencies of one setting share their normalizing total, so each
    coefficient enters through its deviation from the setting's weighted
    mean c_bar = sum_ab c p. The variance is sum (c - c_bar)^2 sigma^2,
    the first-order propagation of independent Poisson counts.
    """
    c = np.asarray(coefficients, dtype=float)
    if c.shape != (2, 2, 2, 2):
        raise ValueError(f"coefficients must have shape (2, 2, 2, 2), got {c.shape}")
    p = m.behavior.p
    value = float(np.sum(c * p) + constant)
    cbar = np.sum(c * p, axis=(0, 1))
    var = float(np.sum((c - cbar) ** 2 * m.sigma ** 2))
    return value, math.sqrt(var)


def propagate_log2(value: float, sigma: float) -> tuple[float, float]:
    """Bits -log2(value) and the delta-method error sigma / (value ln 2)."""
    if value <= 0 or value > 1.0 + 1e-12:
        raise ValueError(f"value must lie in (0, 1], got {value!r}")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma!r}")
    bits = -math.log2(value) if value < 1.0 else 0.0
    return bits, sigma / (value * math.log(2.0))
