"""Fidelity lower bounds from tilted Bell values, and the device-independent
choice of the tilt that maximizes them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .behaviors import Behavior, Expectations, expectation_values
from .tilted import alpha_from_theta, evaluate, quantum_max, theta_from_alpha

# the linear fidelity bound is only established for theta in [0.14, pi/4]
THETA_VALIDITY_MIN = 0.14
ALPHA_VALIDITY_MAX = alpha_from_theta(THETA_VALIDITY_MIN)

GRID_POINTS = 2000
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def slope_offset(alpha: float) -> tuple[float, float]:
    """Slope s and offset mu with F >= s * B + mu."""
    alpha = float(alpha)
    if not 0.0 <= alpha <= ALPHA_VALIDITY_MAX + 1e-12:
        raise ValueError(
            f"alpha={alpha!r} outside the range [0, {ALPHA_VALIDITY_MAX:.6f}] "
            "where the fidelity bound holds"
        )
    q = quantum_max(alpha)
    q2 = q * q
    num = 1.0 - 0.25 * (1.0 + math.sqrt((4.0 - alpha * alpha) / q2) + math.sqrt(2.0 * alpha * alpha / q2))
    s = num / (q - (2.0 + alpha))
    return s, 1.0 - s * q


def fidelity_bound_raw(alpha: float, bell_value: float) -> float:
    s, mu = slope_offset(alpha)
    return s * bell_value + mu


def fidelity_bound(alpha: float, bell_value: float) -> float:
    """Certified fidelity, clamped below at 0."""
    return max(0.0, fidelity_bound_raw(alpha, bell_value))


@dataclass(frozen=True)
class FidelityBound:
    alpha_star: float
    theta_star: float
    certified_fidelity: float
    slope: float
    offset: float
    bell_value: float
    non_informative: bool

    @property
    def separable_reference(self) -> float:
        """cos^2(theta*): what a product state already achieves."""
        return math.cos(self.theta_star) ** 2


def _objective(alpha: float, e: Expectations) -> float:
    return fidelity_bound_raw(alpha, evaluate(alpha, e))


def _golden_max(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def di_estimate(behavior: Behavior | Expectations, grid_points: int = GRID_POINTS) -> FidelityBound:
    """Maximize s_a * B_a + mu_a over the tilt a, using only the observed statistics.

    A uniform grid locates the best bracket and golden-section search refines
    it. The argmax fixes the device-independent angle theta*; the result is
    flagged non-informative when the bound does not beat cos^2(theta*).
    """
    e = behavior if isinstance(behavior, Expectations) else expectation_values(behavior)
    grid = np.linspace(0.0, ALPHA_VALIDITY_MAX, grid_points)
    values = np.array([_objective(a, e) for a in grid])
    k = int(np.argmax(values))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid_points - 1)]
    alpha = _golden_max(lambda a: _objective(a, e), lo, hi)
    if _objective(alpha, e) < values[k]:
        alpha = grid[k]
    alpha = float(alpha)
    s, mu = slope_offset(alpha)
    bell = evaluate(alpha, e)
    theta = theta_from_alpha(alpha)
    fid = s * bell + mu
    return FidelityBound(
        alpha_star=alpha,
        theta_star=theta,
        certified_fidelity=fid,
        slope=s,
        offset=mu,
        bell_value=bell,
        non_informative=bool(fid <= math.cos(theta) ** 2),
    )
