import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pescert.quantum import (
    I2,
    POLARIZATION_RELABELING,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DensityMatrix,
    Observable,
    PesState,
    concurrence,
    fidelity_with_pes,
    hermitian_eigensystem,
    kron,
    purity,
    random_density_matrix,
    random_unitary,
)

thetas = st.floats(min_value=0.0, max_value=math.pi / 4)


def werner_concurrence(v):
    return max(0.0, (3 * v - 1) / 2)


def test_kron_identities():
    assert np.allclose(kron(I2, I2), np.eye(4))
    assert np.allclose(np.diag(kron(SIGMA_Z, SIGMA_Z)).real, [1, -1, -1, 1])
    assert kron(np.ones((2, 3)), np.ones((3, 2))).shape == (6, 6)


@given(thetas)
def test_xx_correlation_on_pes(theta):
    psi = PesState(theta).vector
    assert np.real(psi.conj() @ kron(SIGMA_X, SIGMA_X) @ psi) == pytest.approx(math.sin(2 * theta), abs=1e-12)


def test_eigensystem_examples():
    w, _ = hermitian_eigensystem(SIGMA_Z)
    assert np.allclose(w, [1, -1])
    w, _ = hermitian_eigensystem(np.eye(4) / 4)
    assert np.allclose(w, 0.25)
    rho = PesState(math.pi / 4).noisy(0.997)
    w, _ = hermitian_eigensystem(rho.matrix)
    assert w[0] == pytest.approx(0.997 + 0.003 / 4, abs=1e-12)
    assert w[0] == pytest.approx(0.99775, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_eigensystem_matches_lapack(seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    m = g + g.conj().T
    w, v = hermitian_eigensystem(m)
    assert np.all(np.diff(w) <= 0)
    assert np.allclose(w, np.linalg.eigvalsh(m)[::-1], atol=1e-10)
    assert np.linalg.norm(v @ np.diag(w) @ v.conj().T - m) < 1e-9
    assert np.allclose(v.conj().T @ v, np.eye(4), atol=1e-10)


def test_eigensystem_symmetrizes_small_drift_and_rejects_large():
    m = SIGMA_X.copy()
    m[0, 1] += 1e-11
    w, _ = hermitian_eigensystem(m)
    assert np.allclose(w, [1, -1], atol=1e-10)
    with pytest.raises(ValueError, match="not Hermitian"):
        hermitian_eigensystem(np.array([[0, 1], [0, 0]], dtype=complex))
    with pytest.raises(ValueError):
        hermitian_eigensystem(np.ones((2, 3)))


def test_density_matrix_validation():
    with pytest.raises(ValueError, match="trace"):
        DensityMatrix(np.eye(4))
    with pytest.raises(ValueError, match="PSD"):
        DensityMatrix(np.diag([1.5, -0.5, 0, 0]))
    with pytest.raises(ValueError, match="4x4"):
        DensityMatrix(np.eye(2) / 2)
    rho = DensityMatrix.maximally_mixed()
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 2


def test_pes_state_range_and_norm():
    with pytest.raises(ValueError):
        PesState(1.0)
    assert np.linalg.norm(PesState(0.3).vector) == pytest.approx(1.0, abs=1e-15)


def test_observable_validation_and_spectrum():
    with pytest.raises(ValueError, match="unit norm"):
        Observable((1.0, 1.0, 0.0))
    o = Observable.xz(0.7)
    assert np.allclose(np.linalg.eigvalsh(o.matrix), [-1, 1], atol=1e-10)
    assert np.allclose(o.projector(1) + o.projector(-1), I2)
    assert Observable.pauli("y").pauli_label == "y"
    assert o.pauli_label is None
    with pytest.raises(ValueError):
        o.projector(0)


def test_relabeling_maps_hv_to_00():
    a, b = POLARIZATION_RELABELING["A"], POLARIZATION_RELABELING["B"]
    assert (a["H"], b["V"]) == (0, 0)
    assert (a["V"], b["H"]) == (1, 1)


def test_purity_examples():
    assert purity(PesState(0.3).density()) == pytest.approx(1.0, abs=1e-12)
    assert purity(DensityMatrix.maximally_mixed()) == pytest.approx(0.25, abs=1e-12)
    v = 0.997
    expected = v * v + v * (1 - v) / 2 + (1 - v) ** 2 / 4
    assert purity(PesState(0.4).noisy(v)) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.9955068, abs=1e-7)


@given(thetas)
def test_fidelity_examples(theta):
    assert fidelity_with_pes(PesState(theta).density(), theta) == pytest.approx(1.0, abs=1e-12)
    zero = DensityMatrix(np.diag([1.0, 0, 0, 0]))
    assert fidelity_with_pes(zero, theta) == pytest.approx(math.cos(theta) ** 2, abs=1e-12)
    assert fidelity_with_pes(PesState(theta).noisy(0.995), theta) == pytest.approx(0.99625, abs=1e-12)


def test_concurrence_examples():
    assert concurrence(DensityMatrix.maximally_mixed()) == pytest.approx(0.0, abs=1e-12)
    assert concurrence(PesState(math.pi / 4).noisy(0.9)) == pytest.approx(0.85, abs=1e-9)
    for v in (0.2, 0.5, 0.75, 1.0):
        assert concurrence(PesState(math.pi / 4).noisy(v)) == pytest.approx(werner_concurrence(v), abs=1e-9)


def test_concurrence_of_pes_on_grid():
    for theta in np.linspace(0.0, math.pi / 4, 100):
        assert concurrence(PesState(theta).density()) == pytest.approx(math.sin(2 * theta), abs=1e-10)


def test_concurrence_vanishes_on_separable_mixtures():
    rng = np.random.default_rng(1)
    for _ in range(100):
        k = rng.integers(1, 5)
        weights = rng.dirichlet(np.ones(k))
        m = np.zeros((4, 4), dtype=complex)
        for w in weights:
            a = random_density_matrix_1q(rng)
            b = random_density_matrix_1q(rng)
            m += w * np.kron(a, b)
        assert concurrence(DensityMatrix(m)) < 1e-8


def random_density_matrix_1q(rng):
    g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    m = g @ g.conj().T
    return m / np.trace(m).real


def test_concurrence_matches_direct_wootters():
    # non-Hermitian rho * rho_tilde eigenvalues straight from LAPACK
    rng = np.random.default_rng(2)
    yy = np.kron(SIGMA_Y, SIGMA_Y)
    for _ in range(30):
        rho = random_density_matrix(rng, rank=int(rng.integers(1, 5)))
        m = rho.matrix
        ev = np.linalg.eigvals(m @ yy @ m.conj() @ yy)
        lam = np.sort(np.sqrt(np.clip(ev.real, 0, None)))[::-1]
        expected = max(0.0, lam[0] - lam[1] - lam[2] - lam[3])
        assert concurrence(rho) == pytest.approx(expected, abs=1e-7)


@settings(max_examples=50)
@given(st.integers(0, 10_000), thetas)
def test_purity_and_fidelity_unitary_invariance(seed, theta):
    rng = np.random.default_rng(seed)
    u = random_unitary(rng)
    rho = random_density_matrix(rng)
    rotated = DensityMatrix(u @ rho.matrix @ u.conj().T)
    assert purity(rotated) == pytest.approx(purity(rho), abs=1e-10)
    psi = PesState(theta).vector
    f = np.real(psi.conj() @ rho.matrix @ psi)
    f_rot = np.real((u @ psi).conj() @ rotated.matrix @ (u @ psi))
    assert f_rot == pytest.approx(f, abs=1e-10)
    assert fidelity_with_pes(rho, theta) == pytest.approx(f, abs=1e-12)
