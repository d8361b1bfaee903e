import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pescert.behaviors import (
    Behavior,
    MeasurementSet,
    apply_white_noise,
    born_behavior,
    collins_gisin_regularize,
    expectation_coefficients,
    expectation_values,
    signaling_report,
    total_variation,
)
from pescert.quantum import DensityMatrix, Observable, PesState, expectation, kron, random_density_matrix
from pescert.stats import sample_behavior
from pescert.tilted import alpha_from_theta, evaluate, optimal_settings, see_saw_max

Z, X = Observable.pauli("z"), Observable.pauli("x")


def random_observable(rng):
    n = rng.normal(size=3)
    return Observable(tuple(n / np.linalg.norm(n)))


def random_quantum_behavior(rng):
    rho = random_density_matrix(rng)
    m = MeasurementSet(tuple(random_observable(rng) for _ in range(2)), tuple(random_observable(rng) for _ in range(2)))
    return rho, m, born_behavior(rho, m)


def signaling_behavior(rng):
    """A random behavior with independent per-setting tables (generally signaling)."""
    p = rng.dirichlet(np.ones(4), size=(2, 2)).transpose(2, 0, 1).reshape(2, 2, 2, 2)
    return Behavior(p)


def test_behavior_validation():
    with pytest.raises(ValueError, match="shape"):
        Behavior(np.zeros((2, 2)))
    with pytest.raises(ValueError, match="negative"):
        p = np.full((2, 2, 2, 2), 0.25)
        p[0, 0, 0, 0], p[1, 1, 0, 0] = -0.01, 0.51
        Behavior(p)
    with pytest.raises(ValueError, match="sum to one"):
        Behavior(np.full((2, 2, 2, 2), 0.3))


def test_json_round_trip_and_layout():
    b = Behavior.pr_box()
    d = b.to_dict()
    assert list(d) == ["00", "01", "10", "11"]
    assert d["11"] == [0.0, 0.5, 0.5, 0.0]
    assert np.array_equal(Behavior.from_json(b.to_json()).p, b.p)
    with pytest.raises(ValueError):
        Behavior.from_dict({**d, "00": [1.0]})


def test_born_examples():
    rng = np.random.default_rng(0)
    m = MeasurementSet((random_observable(rng), random_observable(rng)), (random_observable(rng), Z))
    assert np.allclose(born_behavior(DensityMatrix.maximally_mixed(), m).p, 0.25)
    b = born_behavior(PesState(math.pi / 4).density(), MeasurementSet((Z, X), (Z, X)))
    assert b.prob(1, 1, 0, 0) == pytest.approx(0.5)
    assert b.prob(-1, -1, 0, 0) == pytest.approx(0.5)
    assert b.prob(1, -1, 0, 0) == pytest.approx(0.0, abs=1e-15)


def test_born_tilted_value_matches_see_saw():
    theta = 0.45975
    b = born_behavior(PesState(theta).density(), optimal_settings(theta).measurements())
    value = evaluate(0.949, expectation_values(b))
    oracle, _, _ = see_saw_max(0.949, seed=3)
    assert value == pytest.approx(3.1307, abs=1e-4)
    assert value == pytest.approx(oracle, abs=1e-4)


def test_white_noise_examples():
    b = Behavior.pr_box()
    assert np.array_equal(apply_white_noise(b, 0.0).p, b.p)
    assert np.allclose(apply_white_noise(b, 1.0).p, 0.25)
    with pytest.raises(ValueError):
        apply_white_noise(b, 1.5)
    chsh = born_behavior(PesState(math.pi / 4).density(), optimal_settings(math.pi / 4).measurements())
    assert evaluate(0.0, expectation_values(apply_white_noise(chsh, 0.005))) == pytest.approx(0.995 * 2 * math.sqrt(2), abs=1e-12)


def test_signaling_examples():
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert signaling_report(random_quantum_behavior(rng)[2]).is_no_signaling
    assert signaling_report(Behavior.pr_box()).is_no_signaling
    p = np.full((2, 2, 2, 2), 0.25)
    p[0, 0, 0, 0] += 0.01
    p[1, 0, 0, 0] -= 0.01
    report = signaling_report(Behavior(p))
    assert report.max_signaling_A == pytest.approx(0.01, abs=1e-15)
    assert report.max_signaling_B == 0.0
    assert not report.is_no_signaling


def test_regularize_fixed_point_on_no_signaling_input():
    rng = np.random.default_rng(2)
    for _ in range(20):
        b = random_quantum_behavior(rng)[2]
        assert np.allclose(collins_gisin_regularize(b).p, b.p, atol=1e-15)
    assert np.array_equal(collins_gisin_regularize(Behavior.pr_box()).p, Behavior.pr_box().p)


def test_regularize_averages_symmetric_discrepancy():
    m, eps = 0.6, 0.02
    p = np.zeros((2, 2, 2, 2))
    for x, y in itertools.product(range(2), repeat=2):
        pa = m + eps if y == 0 else m - eps
        p[0, 0, x, y] = pa * 0.5
        p[0, 1, x, y] = pa * 0.5
        p[1, 0, x, y] = (1 - pa) * 0.5
        p[1, 1, x, y] = (1 - pa) * 0.5
    out = collins_gisin_regularize(Behavior(p))
    assert signaling_report(Behavior(p)).max_signaling_A == pytest.approx(2 * eps)
    assert np.allclose(out.p[0].sum(axis=0), m, atol=1e-15)


def test_regularize_sampled_chsh_stays_close():
    ideal = born_behavior(PesState(math.pi / 4).density(), optimal_settings(math.pi / 4).measurements())
    for seed in range(100):
        out = collins_gisin_regularize(sample_behavior(ideal, 1e4, seed).behavior)
        assert signaling_report(out, tol=1e-12).is_no_signaling
        # total variation of the joint distribution under uniform inputs
        assert 0.5 * np.abs(out.p - ideal.p).sum() / 4 < 0.02
        assert total_variation(out, ideal) < 0.03


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_regularize_is_no_signaling_and_idempotent(seed):
    b = signaling_behavior(np.random.default_rng(seed))
    once = collins_gisin_regularize(b)
    twice = collins_gisin_regularize(once)
    assert signaling_report(once, tol=1e-12).is_no_signaling
    assert np.min(once.p) >= 0.0
    assert np.allclose(once.p, twice.p, atol=1e-12, rtol=0)


def test_expectation_examples():
    assert all(v == 0 for v in expectation_values(Behavior.uniform()))
    b = born_behavior(PesState(0.3).density(), MeasurementSet((Z, X), (Z, X)))
    assert expectation_values(b).A0B0 == pytest.approx(1.0)
    theta = 0.45975
    b = born_behavior(PesState(theta).density(), optimal_settings(theta).measurements())
    assert expectation_values(b).A0 == pytest.approx(math.cos(2 * theta), abs=1e-12)
    assert expectation_values(b).A0 == pytest.approx(0.60622, abs=5e-6)


def test_expectations_reject_signaling():
    p = np.full((2, 2, 2, 2), 0.25)
    p[0, 0, 0, 0] += 0.01
    p[1, 0, 0, 0] -= 0.01
    with pytest.raises(ValueError, match="signals"):
        expectation_values(Behavior(p))


def test_born_expectations_match_trace_formula():
    rng = np.random.default_rng(3)
    coeffs = expectation_coefficients()
    for _ in range(100):
        rho, m, b = random_quantum_behavior(rng)
        e = expectation_values(b)
        for x, y in itertools.product(range(2), repeat=2):
            direct = expectation(rho, kron(m.alice[x].matrix, m.bob[y].matrix))
            assert e.correlator(x, y) == pytest.approx(direct, abs=1e-9)
        assert e.A1 == pytest.approx(expectation(rho, kron(m.alice[1].matrix, np.eye(2))), abs=1e-9)
        assert e.B0 == pytest.approx(expectation(rho, kron(np.eye(2), m.bob[0].matrix)), abs=1e-9)
        for name, value in e._asdict().items():
            assert float(np.sum(coeffs[name] * b.p)) == pytest.approx(value, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_white_noise_commutes_with_expectations(seed, f):
    b = random_quantum_behavior(np.random.default_rng(seed))[2]
    e = np.array(expectation_values(b))
    e_noisy = np.array(expectation_values(apply_white_noise(b, f)))
    assert np.allclose(e_noisy, (1 - f) * e, atol=1e-12)


def test_alpha_of_known_angle():
    assert alpha_from_theta(0.45975) == pytest.approx(0.949, abs=1e-3)
