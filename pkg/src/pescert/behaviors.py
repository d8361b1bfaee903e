"""Conditional probability tables P(ab|xy) for the 2-input/2-output Bell scenario.

Arrays are indexed ``p[a, b, x, y]`` where outcome index 0 stands for +1 and
index 1 for -1.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

from .quantum import DensityMatrix, Observable, kron

OUTCOMES = (1, -1)
PROB_FLOOR = -1e-12
NORMALIZATION_ATOL = 1e-9
DEFAULT_SIGNALING_TOL = 1e-9
EXPECTATION_SIGNALING_TOL = 1e-6

# JSON cell order inside each "xy" entry
_JSON_ORDER = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class Behavior:
    p: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.p, dtype=float)
        if p.shape != (2, 2, 2, 2):
            raise ValueError(f"behavior must have shape (2, 2, 2, 2), got {p.shape}")
        if np.min(p) < PROB_FLOOR:
            raise ValueError(f"negative probability {np.min(p):.3e}")
        sums = p.sum(axis=(0, 1))
        if np.max(np.abs(sums - 1.0)) > NORMALIZATION_ATOL:
            raise ValueError(f"probabilities do not sum to one per setting: {sums.ravel()}")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def prob(self, a: int, b: int, x: int, y: int) -> float:
        """P(ab|xy) with a, b given as +1/-1."""
        return float(self.p[OUTCOMES.index(a), OUTCOMES.index(b), x, y])

    @classmethod
    def uniform(cls) -> "Behavior":
        return cls(np.full((2, 2, 2, 2), 0.25))

    @classmethod
    def deterministic(cls, a_out: tuple[int, int], b_out: tuple[int, int]) -> "Behavior":
        """Local deterministic box: Alice outputs a_out[x], Bob b_out[y]."""
        p = np.zeros((2, 2, 2, 2))
        for x, y in itertools.product(range(2), repeat=2):
            p[OUTCOMES.index(a_out[x]), OUTCOMES.index(b_out[y]), x, y] = 1.0
        return cls(p)

    @classmethod
    def pr_box(cls) -> "Behavior":
        p = np.zeros((2, 2, 2, 2))
        for a, b, x, y in itertools.product(range(2), repeat=4):
            if (a ^ b) == (x & y):
                p[a, b, x, y] = 0.5
        return cls(p)

    def to_dict(self) -> dict[str, list[float]]:
        return {
            f"{x}{y}": [float(self.p[a, b, x, y]) for a, b in _JSON_ORDER]
            for x, y in itertools.product(range(2), repeat=2)
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Behavior":
        p = np.zeros((2, 2, 2, 2))
        for x, y in itertools.product(range(2), repeat=2):
            cells = data[f"{x}{y}"]
            if len(cells) != 4:
                raise ValueError(f"setting {x}{y} needs 4 probabilities, got {len(cells)}")
            for (a, b), value in zip(_JSON_ORDER, cells):
                p[a, b, x, y] = float(value)
        return cls(p)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Behavior":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class MeasurementSet:
    alice: tuple[Observable, Observable]
    bob: tuple[Observable, Observable]


class SignalingReport(NamedTuple):
    max_signaling_A: float
    max_signaling_B: float
    is_no_signaling: bool


class Expectations(NamedTuple):
    A0: float
    A1: float
    B0: float
    B1: float
    A0B0: float
    A0B1: float
    A1B0: float
    A1B1: float

    def correlator(self, x: int, y: int) -> float:
        return (self.A0B0, self.A0B1, self.A1B0, self.A1B1)[2 * x + y]


def born_behavior(rho: DensityMatrix, m: MeasurementSet) -> Behavior:
    p = np.zeros((2, 2, 2, 2))
    for x, y in itertools.product(range(2), repeat=2):
        for ia, a in enumerate(OUTCOMES):
            for ib, b in enumerate(OUTCOMES):
                op = kron(m.alice[x].projector(a), m.bob[y].projector(b))
                p[ia, ib, x, y] = np.real(np.trace(rho.matrix @ op))
    # Born probabilities of a valid state are >= 0 up to rounding
    return Behavior(np.clip(p, 0.0, None))


def apply_white_noise(b: Behavior, fraction: float) -> Behavior:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"noise fraction must lie in [0, 1], got {fraction!r}")
    return Behavior((1.0 - fraction) * b.p + fraction * 0.25)


def alice_marginals(p: np.ndarray) -> np.ndarray:
    """P_A(a|x, y) as an array indexed [a, x, y]."""
    return p.sum(axis=1)


def bob_marginals(p: np.ndarray) -> np.ndarray:
    """P_B(b|x, y) as an array indexed [b, x, y]."""
    return p.sum(axis=0)


def signaling_report(b: Behavior, tol: float = DEFAULT_SIGNALING_TOL) -> SignalingReport:
    pa = alice_marginals(b.p)
    pb = bob_marginals(b.p)
    sig_a = float(np.max(np.abs(pa[:, :, 0] - pa[:, :, 1])))
    sig_b = float(np.max(np.abs(pb[:, 0, :] - pb[:, 1, :])))
    return SignalingReport(sig_a, sig_b, sig_a <= tol and sig_b <= tol)


def collins_gisin_coordinates(p: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(P_A(+|x), P_B(+|y), P(++|xy)); each marginal averages both settings of the other party."""
    pa = alice_marginals(p)[0].mean(axis=1)
    pb = bob_marginals(p)[0].mean(axis=0)
    return pa, pb, p[0, 0].copy()


def from_collins_gisin(pa: np.ndarray, pb: np.ndarray, pab: np.ndarray) -> np.ndarray:
    p = np.zeros((2, 2, 2, 2))
    for x, y in itertools.product(range(2), repeat=2):
        p[0, 0, x, y] = pab[x, y]
        p[0, 1, x, y] = pa[x] - pab[x, y]
        p[1, 0, x, y] = pb[y] - pab[x, y]
        p[1, 1, x, y] = 1.0 - pa[x] - pb[y] + pab[x, y]
    return p


def collins_gisin_form(ga: np.ndarray, gb: np.ndarray, gab: np.ndarray) -> np.ndarray:
    """16-cell coefficients of sum ga[x] P_A(+|x) + gb[y] P_B(+|y) + gab[x, y] P(++|xy).

    Marginals are read as averages over the other party's input, as in
    :func:`collins_gisin_coordinates`.
    """
    c = np.zeros((2, 2, 2, 2))
    for x in range(2):
        c[0, :, x, :] += 0.5 * ga[x]
    for y in range(2):
        c[:, 0, :, y] += 0.5 * gb[y]
    c[0, 0] += np.asarray(gab, dtype=float)
    return c


def collins_gisin_regularize(b: Behavior) -> Behavior:
    """Project finite-statistics frequencies onto the no-signaling set.

    Marginals are replaced by the average of their two setting-conditioned
    estimates and the joint P(++|xy) is kept. When the reconstruction would
    produce a negative cell, P(++|xy) is clamped into its Frechet interval
    [max(0, pA + pB - 1), min(pA, pB)], which keeps every cell nonnegative
    and the output exactly no-signaling.
    """
    pa, pb, pab = collins_gisin_coordinates(b.p)
    pa = np.clip(pa, 0.0, 1.0)
    pb = np.clip(pb, 0.0, 1.0)
    lo = np.maximum(0.0, pa[:, None] + pb[None, :] - 1.0)
    hi = np.minimum(pa[:, None], pb[None, :])
    pab = np.clip(pab, lo, hi)
    p = from_collins_gisin(pa, pb, pab)
    # subtraction dust only; the Frechet clamp already guarantees p >= 0
    return Behavior(np.clip(p, 0.0, None))


def expectation_values(
    b: Behavior, tol: float = EXPECTATION_SIGNALING_TOL
) -> Expectations:
    report = signaling_report(b, tol)
    if not report.is_no_signaling:
        raise ValueError(
            "marginals are not well defined: behavior signals by "
            f"{max(report.max_signaling_A, report.max_signaling_B):.3e}"
        )
    pa = alice_marginals(b.p).mean(axis=2)
    pb = bob_marginals(b.p).mean(axis=1)
    ea = pa[0] - pa[1]
    eb = pb[0] - pb[1]
    corr = b.p[0, 0] + b.p[1, 1] - b.p[0, 1] - b.p[1, 0]
    return Expectations(
        float(ea[0]), float(ea[1]), float(eb[0]), float(eb[1]),
        float(corr[0, 0]), float(corr[0, 1]), float(corr[1, 0]), float(corr[1, 1]),
    )


def expectation_coefficients() -> dict[str, np.ndarray]:
    """Linear forms over the 16 probabilities giving each expectation value.

    Marginal expectations average the two settings of the other party, so
    they agree with :func:`expectation_values` on every no-signaling table.
    """
    sign = np.array(OUTCOMES, dtype=float)
    out: dict[str, np.ndarray] = {}
    for x in range(2):
        c = np.zeros((2, 2, 2, 2))
        c[:, :, x, :] = 0.5 * sign[:, None, None]
        out[f"A{x}"] = c
    for y in range(2):
        c = np.zeros((2, 2, 2, 2))
        c[:, :, :, y] = 0.5 * sign[None, :, None]
        out[f"B{y}"] = c
    for x, y in itertools.product(range(2), repeat=2):
        c = np.zeros((2, 2, 2, 2))
        c[:, :, x, y] = np.outer(sign, sign)
        out[f"A{x}B{y}"] = c
    return out


def total_variation(b1: Behavior, b2: Behavior) -> float:
    """Largest per-setting total-variation distance."""
    return float(0.5 * np.max(np.abs(b1.p - b2.p).sum(axis=(0, 1))))
