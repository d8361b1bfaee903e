"""Dense two-qubit linear algebra: states, observables and entanglement measures.

Basis ordering is |00>, |01>, |10>, |11>. The source state written in the
polarization basis as a|HV> + b|VH> is mapped onto this basis by relabeling
H -> 0 on Alice's side and V -> 0 on Bob's side, so |HV> -> |00> and
|VH> -> |11>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

POLARIZATION_RELABELING = {"A": {"H": 0, "V": 1}, "B": {"V": 0, "H": 1}}

HERMITIAN_ATOL = 1e-12
SYMMETRIZE_MAX_DRIFT = 1e-10
TRACE_ATOL = 1e-10
EIGEN_FLOOR = -1e-10
# eigenvalues below this are treated as rounding noise in concurrence
RANK_TOL = 1e-14

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"i": I2, "x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def _as_hermitian(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    drift = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if drift > SYMMETRIZE_MAX_DRIFT:
        raise ValueError(f"matrix is not Hermitian (max |M - M^dag| = {drift:.3e})")
    return 0.5 * (m + m.conj().T)


def hermitian_eigensystem(
    m: np.ndarray, *, tol: float = 1e-14, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a small Hermitian matrix by cyclic Jacobi sweeps.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted in
    descending order and eigenvectors stored as columns, so that
    ``m = V @ diag(w) @ V^dag``.

    Inputs whose Hermitian drift is below 1e-10 are symmetrized first;
    anything larger raises ``ValueError``.
    """
    a = _as_hermitian(m).copy()
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = max(np.linalg.norm(a), 1e-300)
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a[offdiag])
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                g = abs(apq)
                if g <= 1e-17 * scale:
                    continue
                phase = apq / g
                app, aqq = a[p, p].real, a[q, q].real
                tau = (aqq - app) / (2.0 * g)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                # unitary acting on the (p, q) plane; the phase makes the pivot real
                j = np.eye(n, dtype=complex)
                j[p, p] = c
                j[q, q] = c
                j[p, q] = s * phase
                j[q, p] = -s * np.conj(phase)
                a = j.conj().T @ a @ j
                a[p, q] = a[q, p] = 0.0
                v = v @ j
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    w = np.real(np.diag(a))
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


@dataclass(frozen=True)
class DensityMatrix:
    """A validated 4x4 two-qubit density matrix."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = _as_hermitian(self.matrix)
        if m.shape != (4, 4):
            raise ValueError(f"two-qubit density matrix must be 4x4, got {m.shape}")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_ATOL:
            raise ValueError(f"trace is {tr!r}, expected 1")
        lmin = np.linalg.eigvalsh(m)[0]
        if lmin < EIGEN_FLOOR:
            raise ValueError(f"matrix is not PSD (min eigenvalue {lmin:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_vector(cls, psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix":
        return cls(np.eye(4, dtype=complex) / 4)


@dataclass(frozen=True)
class PesState:
    """Partially entangled state cos(theta)|00> + sin(theta)|11>."""

    theta: float

    def __post_init__(self) -> None:
        if not (-1e-12 <= self.theta <= math.pi / 4 + 1e-12):
            raise ValueError(f"theta must lie in [0, pi/4], got {self.theta!r}")

    @property
    def vector(self) -> np.ndarray:
        return np.array([math.cos(self.theta), 0.0, 0.0, math.sin(self.theta)], dtype=complex)

    def density(self) -> DensityMatrix:
        return DensityMatrix.from_vector(self.vector)

    def noisy(self, visibility: float) -> DensityMatrix:
        """Mix with white noise: ``v |psi><psi| + (1 - v) I/4``."""
        return white_noise_mixture(self.density(), visibility)


def white_noise_mixture(rho: DensityMatrix, visibility: float) -> DensityMatrix:
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {visibility!r}")
    return DensityMatrix(visibility * rho.matrix + (1.0 - visibility) * np.eye(4) / 4)


@dataclass(frozen=True)
class Observable:
    """Dichotomic qubit observable n.sigma with outcomes +1 and -1."""

    bloch: tuple[float, float, float]

    def __post_init__(self) -> None:
        n = np.asarray(self.bloch, dtype=float)
        if n.shape != (3,):
            raise ValueError("bloch vector must have three components")
        norm = float(np.linalg.norm(n))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"bloch vector must be unit norm, got {norm!r}")
        object.__setattr__(self, "bloch", tuple(float(c) for c in n))

    @classmethod
    def xz(cls, angle: float) -> "Observable":
        """cos(angle) sigma_z + sin(angle) sigma_x."""
        return cls((math.sin(angle), 0.0, math.cos(angle)))

    @classmethod
    def pauli(cls, axis: str) -> "Observable":
        return cls({"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}[axis])

    @property
    def matrix(self) -> np.ndarray:
        nx, ny, nz = self.bloch
        return nx * SIGMA_X + ny * SIGMA_Y + nz * SIGMA_Z

    def projector(self, outcome: int) -> np.ndarray:
        """Projector (I + outcome * n.sigma)/2 for outcome in {+1, -1}."""
        if outcome not in (1, -1):
            raise ValueError(f"outcome must be +1 or -1, got {outcome!r}")
        return 0.5 * (I2 + outcome * self.matrix)

    @property
    def pauli_label(self) -> str | None:
        for label in "xyz":
            if np.allclose(self.bloch, Observable.pauli(label).bloch, atol=1e-12):
                return label
        return None


def expectation(rho: DensityMatrix, op: np.ndarray) -> float:
    return float(np.real(np.trace(rho.matrix @ op)))


def purity(rho: DensityMatrix) -> float:
    m = rho.matrix
    return float(np.real(np.trace(m @ m)))


def fidelity_with_pes(rho: DensityMatrix, theta: float) -> float:
    psi = np.array([math.cos(theta), 0.0, 0.0, math.sin(theta)], dtype=complex)
    return float(np.real(psi.conj() @ rho.matrix @ psi))


def concurrence(rho: DensityMatrix) -> float:
    """Wootters concurrence max(0, l1 - l2 - l3 - l4).

    The l_i, square roots of the eigenvalues of rho * rho_tilde, are the
    singular values of tau = W^T (sigma_y x sigma_y) W for any factor
    rho = W W^dag. Taking W from the eigendecomposition with rounding-level
    eigenvalues dropped keeps pure states accurate to machine precision,
    where square roots of ~1e-17 noise would otherwise leak in at 1e-8.
    """
    yy = kron(SIGMA_Y, SIGMA_Y)
    w, v = hermitian_eigensystem(rho.matrix)
    keep = w > RANK_TOL
    factor = v[:, keep] * np.sqrt(w[keep])
    lam = np.zeros(4)
    sv = np.linalg.svd(factor.T @ yy @ factor, compute_uv=False)
    lam[: len(sv)] = sv
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def random_density_matrix(rng: np.random.Generator, rank: int = 4) -> DensityMatrix:
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


def random_unitary(rng: np.random.Generator, dim: int = 4) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))
