"""Tilted CHSH expression B = alpha<A0> + <A0B0> + <A0B1> + <A1B0> - <A1B1>."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .behaviors import Behavior, Expectations, MeasurementSet, expectation_coefficients
from .quantum import I2, SIGMA_X, SIGMA_Z, Observable, PesState

ALPHA_MAX = 2.0


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= ALPHA_MAX:
        raise ValueError(f"alpha must lie in [0, 2], got {alpha!r}")
    return alpha


@dataclass(frozen=True)
class TiltedBell:
    alpha: float

    def __post_init__(self) -> None:
        _check_alpha(self.alpha)

    @property
    def local_bound(self) -> float:
        return local_bound(self.alpha)

    @property
    def quantum_max(self) -> float:
        return quantum_max(self.alpha)

    def evaluate(self, e: Expectations) -> float:
        return evaluate(self.alpha, e)

    def relative_violation(self, value: float) -> float:
        """(B - L) / (Q - L); undefined at alpha = 2 where the gap closes."""
        gap = self.quantum_max - self.local_bound
        if gap <= 0:
            raise ZeroDivisionError("local and quantum bounds coincide at alpha = 2")
        return (value - self.local_bound) / gap


def local_bound(alpha: float) -> float:
    return _check_alpha(alpha) + 2.0


def quantum_max(alpha: float) -> float:
    alpha = _check_alpha(alpha)
    return math.sqrt(8.0 + 2.0 * alpha * alpha)


def evaluate(alpha: float, e: Expectations) -> float:
    return alpha * e.A0 + e.A0B0 + e.A0B1 + e.A1B0 - e.A1B1


def bell_coefficients(alpha: float) -> np.ndarray:
    """B_alpha as a linear form over the 16 probabilities (no constant term)."""
    c = expectation_coefficients()
    return alpha * c["A0"] + c["A0B0"] + c["A0B1"] + c["A1B0"] - c["A1B1"]


def evaluate_behavior(alpha: float, b: Behavior) -> float:
    return float(np.sum(bell_coefficients(alpha) * b.p))


def theta_from_alpha(alpha: float) -> float:
    alpha = _check_alpha(alpha)
    # atan2 form stays finite as alpha -> 0
    return 0.5 * math.atan2(math.sqrt(4.0 - alpha * alpha), math.sqrt(2.0) * alpha)


def alpha_from_theta(theta: float) -> float:
    """alpha = 2 / sqrt(1 + 2 tan^2(2 theta)), written in cos/sin form."""
    if not 0.0 <= theta <= math.pi / 4 + 1e-12:
        raise ValueError(f"theta must lie in [0, pi/4], got {theta!r}")
    if math.isclose(theta, math.pi / 4, rel_tol=0.0, abs_tol=1e-15):
        return 0.0
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    return 2.0 * c / math.sqrt(c * c + 2.0 * s * s)


@dataclass(frozen=True)
class SettingsAnsatz:
    """Measurement directions in the x-z plane, as polar angles from the z axis."""

    alice_angles: tuple[float, float]
    bob_angles: tuple[float, float]

    def __post_init__(self) -> None:
        for angle in (*self.alice_angles, *self.bob_angles):
            if not -math.pi - 1e-12 <= angle <= math.pi + 1e-12:
                raise ValueError(f"angle {angle!r} outside [-pi, pi]")

    def measurements(self) -> MeasurementSet:
        return MeasurementSet(
            alice=tuple(Observable.xz(t) for t in self.alice_angles),
            bob=tuple(Observable.xz(t) for t in self.bob_angles),
        )


def optimal_settings(theta: float) -> SettingsAnsatz:
    """A0 = Z, A1 = X, B_y = cos(mu) Z +/- sin(mu) X with tan(mu) = sin(2 theta)."""
    if not 0.0 < theta <= math.pi / 4 + 1e-12:
        raise ValueError(f"theta must lie in (0, pi/4], got {theta!r}")
    mu = math.atan(math.sin(2 * theta))
    return SettingsAnsatz((0.0, math.pi / 2), (mu, -mu))


def _xz(angle: float) -> np.ndarray:
    return math.cos(angle) * SIGMA_Z.real + math.sin(angle) * SIGMA_X.real


def bell_operator(alpha: float, settings: SettingsAnsatz) -> np.ndarray:
    a0, a1 = (_xz(t) for t in settings.alice_angles)
    b0, b1 = (_xz(t) for t in settings.bob_angles)
    eye = I2.real
    return (
        alpha * np.kron(a0, eye)
        + np.kron(a0, b0 + b1)
        + np.kron(a1, b0 - b1)
    )


def _best_angle(psi: np.ndarray, left: np.ndarray | None, right: np.ndarray | None) -> float:
    """Angle maximizing <psi| n.sigma (x) right |psi> (or left (x) n.sigma)."""
    if right is not None:
        rz = psi @ np.kron(SIGMA_Z.real, right) @ psi
        rx = psi @ np.kron(SIGMA_X.real, right) @ psi
    else:
        rz = psi @ np.kron(left, SIGMA_Z.real) @ psi
        rx = psi @ np.kron(left, SIGMA_X.real) @ psi
    if abs(rz) + abs(rx) < 1e-300:
        return 0.0
    return math.atan2(rx, rz)


def _schmidt_theta(psi: np.ndarray) -> float:
    s = np.linalg.svd(psi.reshape(2, 2), compute_uv=False)
    return float(math.atan2(s[1], s[0]))


def see_saw_max(
    alpha: float, iterations: int = 2000, seed: int = 0, tol: float = 1e-14
) -> tuple[float, SettingsAnsatz, PesState]:
    """Alternating maximization of the tilted Bell operator.

    Each round takes the state as the top eigenvector of the Bell operator,
    then re-optimizes Alice's and Bob's x-z plane directions against it. The
    value never decreases; iteration stops once a round gains less than
    ``tol`` or after ``iterations`` rounds.
    """
    alpha = _check_alpha(alpha)
    rng = np.random.default_rng(seed)
    a = list(rng.uniform(-math.pi, math.pi, size=2))
    b = list(rng.uniform(-math.pi, math.pi, size=2))
    value = -math.inf
    psi = np.zeros(4)
    for _ in range(iterations):
        w, v = np.linalg.eigh(bell_operator(alpha, SettingsAnsatz(tuple(a), tuple(b))))
        new_value, psi = float(w[-1]), v[:, -1]
        if new_value - value < tol and value > -math.inf:
            value = max(value, new_value)
            break
        value = new_value
        bvec = [_xz(t) for t in b]
        a[0] = _best_angle(psi, None, alpha * I2.real + bvec[0] + bvec[1])
        a[1] = _best_angle(psi, None, bvec[0] - bvec[1])
        avec = [_xz(t) for t in a]
        b[0] = _best_angle(psi, avec[0] + avec[1], None)
        b[1] = _best_angle(psi, avec[0] - avec[1], None)
    settings = SettingsAnsatz(tuple(a), tuple(b))
    w, v = np.linalg.eigh(bell_operator(alpha, settings))
    value, psi = float(w[-1]), v[:, -1]
    return value, settings, PesState(min(_schmidt_theta(psi), math.pi / 4))
