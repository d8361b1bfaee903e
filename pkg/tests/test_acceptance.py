"""Acceptance criteria 1-10, each at its stated tolerance.

Run alone with ``pytest -s tests/test_acceptance.py`` or ``pescert selftest``;
every criterion prints one PASS/FAIL line, repeated in the terminal summary.
"""

import json
import math
import time
from pathlib import Path

import numpy as np

from pescert.behaviors import (
    Behavior,
    MeasurementSet,
    apply_white_noise,
    born_behavior,
    collins_gisin_regularize,
    signaling_report,
)
from pescert.npa import LEVEL_2, Certificate, guessing_probability, randomness_bits
from pescert.pipeline import PUBLISHED_SUMMARY, ExperimentConfig, run_pipeline
from pescert.quantum import Observable, PesState, concurrence, random_density_matrix
from pescert.sdp import SdpProblem, solve, verify
from pescert.selftesting import ALPHA_VALIDITY_MAX, fidelity_bound
from pescert.stats import propagate_affine, sample_behavior
from pescert.tilted import TiltedBell, alpha_from_theta, bell_coefficients, local_bound, optimal_settings, quantum_max, see_saw_max, theta_from_alpha
from pescert.tomography import simulate_counts, tomography

GOLDEN = Path(__file__).parent / "golden"


def pes_behavior(theta, noise=0.0):
    return apply_white_noise(born_behavior(PesState(theta).density(), optimal_settings(theta).measurements()), noise)


def random_quantum_behavior(rng):
    def obs():
        n = rng.normal(size=3)
        return Observable(tuple(n / np.linalg.norm(n)))

    return born_behavior(random_density_matrix(rng), MeasurementSet((obs(), obs()), (obs(), obs())))


def test_criterion_01_see_saw_matches_closed_form(acceptance):
    start = time.perf_counter()
    worst = 0.0
    for alpha in np.linspace(0.0, 1.99, 50):
        value, _, _ = see_saw_max(float(alpha))
        worst = max(worst, abs(value - quantum_max(float(alpha))))
    elapsed = time.perf_counter() - start
    acceptance(1, "see-saw = sqrt(8 + 2 alpha^2) on 50 alphas", worst <= 1e-6 and elapsed < 30,
               f"max error {worst:.1e}, {elapsed:.1f} s")


def test_criterion_02_published_row_arithmetic(acceptance):
    start = time.perf_counter()
    ok = True
    worst = 0.0
    for alpha, theta, b, rel in zip(PUBLISHED_SUMMARY["alpha"], PUBLISHED_SUMMARY["theta"],
                                    PUBLISHED_SUMMARY["bell_value"], PUBLISHED_SUMMARY["relative_violation"]):
        worst = max(worst, abs(theta_from_alpha(alpha) - theta))
        assert local_bound(alpha) == alpha + 2
        tb = TiltedBell(alpha)
        lo = tb.relative_violation(b - PUBLISHED_SUMMARY["bell_sigma"])
        hi = tb.relative_violation(b + PUBLISHED_SUMMARY["bell_sigma"])
        ok &= lo <= rel <= hi
    elapsed = time.perf_counter() - start
    acceptance(2, "theta(alpha) and relative violations of the published rows",
               ok and worst <= 5e-3 and elapsed < 1, f"max theta error {worst:.1e}, {elapsed * 1e3:.0f} ms")


def test_criterion_03_ideal_behaviors_are_unguessable(acceptance):
    values, slowest = [], 0.0
    for theta in (0.3, 0.5, math.pi / 4):
        start = time.perf_counter()
        values.append(guessing_probability(pes_behavior(theta), 1, LEVEL_2).p_guess_upper)
        slowest = max(slowest, time.perf_counter() - start)
    ok = all(0.5 <= v <= 0.501 for v in values) and slowest < 60
    acceptance(3, "ideal tilted behaviors give P_guess in [0.5, 0.501] at level2", ok,
               ", ".join(f"{v:.6f}" for v in values) + f"; slowest {slowest:.2f} s")


def test_criterion_04_noise_sensitivity(acceptance):
    thetas = np.linspace(0.15, math.pi / 4, 10)
    conc, bits = [], []
    for theta in thetas:
        rho = PesState(float(theta)).noisy(0.995)
        b = born_behavior(rho, optimal_settings(float(theta)).measurements())
        conc.append(concurrence(rho))
        bits.append(randomness_bits(guessing_probability(b, 1, LEVEL_2).p_guess_upper))
    order = np.argsort(conc)
    monotone = bool(np.all(np.diff(np.array(bits)[order]) >= 0))
    ok = monotone and bits[-1] >= 0.5 and bits[0] <= 0.1
    acceptance(4, "bits monotone in concurrence at 0.5% noise", ok,
               f"bits(0.15) = {bits[0]:.3f}, bits(pi/4) = {bits[-1]:.3f}")


def test_criterion_05a_fidelity_bound_at_quantum_max(acceptance):
    worst = max(abs(fidelity_bound(float(a), quantum_max(float(a))) - 1.0)
                for a in np.linspace(0.0, ALPHA_VALIDITY_MAX, 500))
    acceptance("5a", "fidelity bound = 1 at B = Q for valid alpha", worst <= 1e-10, f"max error {worst:.1e}")


def test_criterion_05b_default_pipeline_self_test(acceptance, tmp_path):
    rows = run_pipeline(ExperimentConfig(), tmp_path)
    top = sorted(rows, key=lambda r: r.theta_target)[-3:]
    lowest = min(rows, key=lambda r: r.theta_target)
    ok = all(r.status == "ok" and r.certified_fidelity > 0.9 for r in top)
    ok &= "fidelity_non_informative" in lowest.flags
    acceptance("5b", "default pipeline: top three rows F > 0.9, lowest row non-informative", ok,
               ", ".join(f"{r.certified_fidelity:.3f}" for r in top))


def test_criterion_06_tomography_fidelity(acceptance):
    good = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        results = [tomography(simulate_counts(PesState(min(t, math.pi / 4)).noisy(0.997), mean_counts=1e6, seed=rng))
                   for t in PUBLISHED_SUMMARY["theta"]]
        good += all(r.purity > 0.985 and r.fidelity_closest > 0.99 for r in results)
    acceptance(6, "tomography purity > 0.985 and fidelity > 0.99", good >= 19, f"{good}/20 seeds")


def test_criterion_07_golden_sdp_suite(acceptance):
    files = sorted(GOLDEN.glob("*.json"))
    worst_gap = worst_res = worst_value = 0.0
    ok = len(files) >= 10
    for path in files:
        record = json.loads(path.read_text())
        problem = SdpProblem.from_dict(record["problem"])
        s = solve(problem)
        report = verify(problem, s)
        ok &= s.status == "optimal" and report.passed
        worst_gap = max(worst_gap, report.gap)
        worst_res = max(worst_res, report.primal_residual, report.dual_residual)
        worst_value = max(worst_value, abs(s.primal_value - record["optimal_value"]))
    ok &= worst_gap <= 1e-7 and worst_res <= 1e-8 and worst_value <= 1e-6
    acceptance(7, f"golden SDP suite ({len(files)} instances)", ok,
               f"gap {worst_gap:.1e}, residual {worst_res:.1e}, |value - oracle| {worst_value:.1e}")


def test_criterion_08_certificate_audit(acceptance, tmp_path):
    run_pipeline(ExperimentConfig(), tmp_path)
    stored = json.loads((tmp_path / "rows.json").read_text())
    certs = [Certificate.from_dict(d["certificate"]) for d in stored]
    sources = [Behavior.from_dict(d["behavior"]) for d in stored]
    rng = np.random.default_rng(8)
    worst = -math.inf
    for k in range(50):
        # convex mixtures stay in the relaxation and probe each certificate near where it is tight
        lam = rng.uniform(0.0, 1.0) if k % 2 else rng.uniform(0.0, 0.05)
        source = sources[k % len(sources)]
        q = Behavior((1 - lam) * source.p + lam * random_quantum_behavior(rng).p)
        fresh = guessing_probability(q, 1, LEVEL_2).p_guess_upper
        worst = max(worst, max(fresh - c.evaluate(q) for c in certs))
    acceptance(8, f"{len(certs)} stored certificates bound 50 random quantum behaviors", worst <= 1e-6,
               f"max violation {worst:.1e}")


def test_criterion_09_regularization(acceptance):
    rng = np.random.default_rng(9)
    worst_sig = worst_idem = 0.0
    for _ in range(1000):
        theta = rng.uniform(0.05, math.pi / 4)
        counts = float(rng.choice([50, 500, 1e4]))
        m = sample_behavior(pes_behavior(theta, rng.uniform(0, 0.2)), counts, rng)
        r = collins_gisin_regularize(m.behavior)
        rep = signaling_report(r, 1e-12)
        worst_sig = max(worst_sig, rep.max_signaling_A, rep.max_signaling_B)
        worst_idem = max(worst_idem, float(np.max(np.abs(collins_gisin_regularize(r).p - r.p))))
    acceptance(9, "regularized behaviors no-signaling and idempotent (1000 samples)",
               worst_sig <= 1e-12 and worst_idem <= 1e-12, f"signaling {worst_sig:.1e}, idempotence {worst_idem:.1e}")


def test_criterion_10_statistical_coverage(acceptance):
    results = []
    for theta in (0.3214, math.pi / 4):
        alpha = alpha_from_theta(theta)
        b = pes_behavior(theta, 0.005)
        c = bell_coefficients(alpha)
        truth = float(np.sum(c * b.p))
        hits = 0
        for seed in range(2000):
            value, sigma = propagate_affine(sample_behavior(b, 1e4, seed), c)
            hits += abs(value - truth) <= sigma
        results.append(hits / 2000)
    ok = all(0.63 <= r <= 0.73 for r in results)
    acceptance(10, "1 sigma interval of B_alpha covers the truth", ok,
               ", ".join(f"{r:.1%}" for r in results) + " of 2000 trials")
