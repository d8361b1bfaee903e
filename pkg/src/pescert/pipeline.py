"""End-to-end simulated experiment: tomography, Bell test, randomness, self-testing."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from . import __version__
from .behaviors import Behavior, Expectations, born_behavior, collins_gisin_regularize, expectation_coefficients
from .npa import (
    LEVEL_2,
    LEVELS,
    Certificate,
    SolverFailure,
    guessing_probability,
    randomness_bits,
    shrink_into_relaxation,
)
from .quantum import PesState, concurrence
from .selftesting import di_estimate
from .stats import MeasuredBehavior, propagate_affine, propagate_log2, sample_behavior
from .tilted import TiltedBell, alpha_from_theta, bell_coefficients, local_bound, optimal_settings, quantum_max
from .tomography import analyze, reconstruct, simulate_counts

PUBLISHED_THETAS = (0.10539, 0.19002, 0.32140, 0.45946, 0.7847)

# published experimental summary, echoed in the manifest for side-by-side reading
PUBLISHED_SUMMARY = {
    "concurrence": [0.1926, 0.3746, 0.5825, 0.8349, 0.9858],
    "purity": [0.9849, 0.9887, 0.9907, 0.9846, 0.9891],
    "alpha": [1.914, 1.741, 1.373, 0.949, 0.0017],
    "bell_value": [3.88, 3.72, 3.41, 3.11, 2.81],
    "bell_sigma": 0.01,
    "relative_violation": [-32.84, -2.14, 0.78, 0.91, 0.98],
    "theta": [0.10539, 0.19002, 0.32140, 0.45946, 0.7847],
    "theta_star": [None, 0.40059, 0.35369, 0.48907, 0.78536],
    "epsilon": "not reconstructed",
}

FLAG_NO_VIOLATION = "no_bell_violation"
FLAG_NON_INFORMATIVE = "fidelity_non_informative"
FLAG_CERT_ABOVE_ONE = "certificate_above_one"
FLAG_STALLED = "solver_stalled"
FLAG_OUTSIDE = "outside_relaxation"
FLAG_ABOVE_QUANTUM = "fidelity_bound_above_one"


def _count(value: Any, name: str) -> float:
    if isinstance(value, str) and value.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{name} must be a positive number or 'inf', got {value!r}")
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class ExperimentConfig:
    theta_list: tuple[float, ...] = PUBLISHED_THETAS
    visibility: float = 0.997
    white_noise: float = 0.005
    counts_per_setting: float = 1e6
    tomography_counts: float = 1e6
    npa_level: str = LEVEL_2
    x_star: int = 1
    seed: int = 0
    output_dir: str = "results"
    reference_points: int = 25

    def __post_init__(self) -> None:
        thetas = tuple(float(t) for t in self.theta_list)
        if not thetas:
            raise ValueError("theta_list must not be empty")
        for t in thetas:
            if not 0.0 < t <= math.pi / 4 + 1e-12:
                raise ValueError(f"theta {t!r} outside (0, pi/4]")
        object.__setattr__(self, "theta_list", thetas)
        for name in ("visibility", "white_noise"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
            object.__setattr__(self, name, float(v))
        object.__setattr__(self, "counts_per_setting", _count(self.counts_per_setting, "counts_per_setting"))
        object.__setattr__(self, "tomography_counts", _count(self.tomography_counts, "tomography_counts"))
        if self.npa_level not in LEVELS:
            raise ValueError(f"npa_level must be one of {LEVELS}, got {self.npa_level!r}")
        if self.x_star not in (0, 1) or isinstance(self.x_star, bool):
            raise ValueError(f"x_star must be 0 or 1, got {self.x_star!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if isinstance(self.reference_points, bool) or not isinstance(self.reference_points, int) or self.reference_points < 2:
            raise ValueError(f"reference_points must be an integer >= 2, got {self.reference_points!r}")

    @property
    def analytic(self) -> bool:
        return math.isinf(self.counts_per_setting)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["theta_list"] = list(self.theta_list)
        for name in ("counts_per_setting", "tomography_counts"):
            if math.isinf(out[name]):
                out[name] = "inf"
        return out


@dataclass
class ResultRow:
    theta_target: float
    concurrence: float = math.nan
    purity: float = math.nan
    theta_closest: float = math.nan
    fidelity_closest: float = math.nan
    alpha: float = math.nan
    bell_value: float = math.nan
    bell_sigma: float = math.nan
    local_bound: float = math.nan
    quantum_max: float = math.nan
    relative_violation: float = math.nan
    p_guess: float = math.nan
    randomness_bits: float = math.nan
    randomness_sigma: float = math.nan
    theta_star: float = math.nan
    certified_fidelity: float = math.nan
    flags: list[str] = field(default_factory=list)
    status: str = "ok"
    reason: str = ""
    npa_level: str = LEVEL_2
    counts_per_setting: float = math.nan
    seed: int = 0
    # audit trail: the no-signaling behavior the SDP saw and its certificate
    behavior: Behavior | None = field(default=None, repr=False)
    certificate: Certificate | None = field(default=None, repr=False)

    def audit(self, tol: float = 1e-6) -> bool:
        """Stored certificate re-evaluated on the stored behavior gives the stored p_guess."""
        if self.certificate is None or self.behavior is None:
            return False
        return abs(min(1.0, self.certificate.evaluate(self.behavior)) - self.p_guess) <= tol


TABLE_COLUMNS = (
    "theta_target", "concurrence", "purity", "theta_closest", "fidelity_closest", "alpha",
    "bell_value", "bell_sigma", "local_bound", "quantum_max", "relative_violation",
    "p_guess", "randomness_bits", "randomness_sigma", "theta_star", "certified_fidelity",
    "flags", "status", "reason", "npa_level", "counts_per_setting", "seed",
)
SIGMA_COLUMNS = {"bell_sigma", "randomness_sigma", "sigma"}
FIG_COLUMNS = ("series", "theta", "concurrence", "value", "sigma")


def _fmt(name: str, v: Any) -> str:
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.2g}" if name in SIGMA_COLUMNS else f"{v:.6g}"
    return str(v)


def _csv(columns: tuple[str, ...], rows: list[dict[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(c, r.get(c)) for c in columns])
    return buf.getvalue()


def raw_expectations(b: Behavior) -> Expectations:
    """Expectation values as fixed linear forms, defined for signaling tables too."""
    coeffs = expectation_coefficients()
    return Expectations(*(float(np.sum(coeffs[k] * b.p)) for k in Expectations._fields))


def process_theta(config: ExperimentConfig, theta: float, rng: np.random.Generator) -> ResultRow:
    """One column of the summary table. Failures are recorded on the row, never raised."""
    row = ResultRow(theta, npa_level=config.npa_level, counts_per_setting=config.counts_per_setting, seed=config.seed)
    stage = "state"
    try:
        rho = PesState(theta).noisy(config.visibility)
        stage = "tomography"
        if math.isinf(config.tomography_counts):
            tomo = analyze(rho)
        else:
            tomo = analyze(reconstruct(simulate_counts(rho, mean_counts=config.tomography_counts, seed=rng)))
        row.concurrence, row.purity = tomo.concurrence, tomo.purity
        row.theta_closest, row.fidelity_closest = tomo.theta_closest, tomo.fidelity_closest

        stage = "settings"
        if tomo.theta_closest <= 0.0:
            raise ValueError("tomography found no entanglement; tilted settings undefined")
        alpha = alpha_from_theta(tomo.theta_closest)
        row.alpha = alpha
        settings = optimal_settings(tomo.theta_closest).measurements()

        stage = "bell"
        measured = sample_behavior(born_behavior(rho, settings), config.counts_per_setting, rng)
        row.bell_value, row.bell_sigma = propagate_affine(measured, bell_coefficients(alpha))
        row.local_bound, row.quantum_max = local_bound(alpha), quantum_max(alpha)
        if alpha < 2.0:
            row.relative_violation = TiltedBell(alpha).relative_violation(row.bell_value)
        if row.bell_value <= row.local_bound:
            row.flags.append(FLAG_NO_VIOLATION)

        stage = "regularize"
        regular = collins_gisin_regularize(measured.behavior)
        row.behavior = regular

        stage = "randomness"
        # finite statistics can leave the quantum set; the behavior is then
        # mixed toward uniform until it lies just inside the relaxation, and
        # that mixed table is the one certified and stored; exact Born
        # behaviors are quantum by construction and go in unchanged
        sdp_input = regular
        if not measured.is_exact:
            sdp_input, visibility = shrink_into_relaxation(regular, config.npa_level)
            if visibility < 1.0:
                row.flags.append(FLAG_OUTSIDE)
        row.behavior = sdp_input
        result = guessing_probability(sdp_input, config.x_star, config.npa_level)
        row.certificate = result.certificate
        if result.status != "optimal":
            row.flags.append(FLAG_STALLED)
        value = result.certificate.evaluate(sdp_input)
        if value > 1.0:
            row.flags.append(FLAG_CERT_ABOVE_ONE)
        row.p_guess = min(1.0, value)
        _, cert_sigma = propagate_affine(measured, result.certificate.coefficients, result.certificate.constant)
        row.randomness_bits, row.randomness_sigma = propagate_log2(row.p_guess, cert_sigma)

        stage = "selftest"
        fb = di_estimate(raw_expectations(measured.behavior))
        row.theta_star, row.certified_fidelity = fb.theta_star, min(1.0, max(0.0, fb.certified_fidelity))
        if fb.certified_fidelity > 1.0:
            row.flags.append(FLAG_ABOVE_QUANTUM)
        if fb.non_informative:
            row.flags.append(FLAG_NON_INFORMATIVE)
    except (ValueError, ArithmeticError, SolverFailure, np.linalg.LinAlgError) as exc:
        row.status = "failed"
        row.reason = f"{stage}: {exc}"
    return row


def run_rows(config: ExperimentConfig) -> list[ResultRow]:
    # one independent stream per row, so a row's numbers do not depend on the others
    streams = np.random.SeedSequence(config.seed).spawn(len(config.theta_list))
    return [process_theta(config, t, np.random.default_rng(s)) for t, s in zip(config.theta_list, streams)]


def reference_thetas(config: ExperimentConfig) -> np.ndarray:
    return np.linspace(0.05, math.pi / 4, config.reference_points)


def analytic_reference(config: ExperimentConfig) -> list[dict[str, float]]:
    """Certified bits of exact PES behaviors with ``white_noise`` admixture on a dense theta grid."""
    out = []
    for theta in reference_thetas(config):
        theta = float(theta)
        rho = PesState(theta).noisy(1.0 - config.white_noise)
        b = born_behavior(rho, optimal_settings(theta).measurements())
        p = guessing_probability(b, config.x_star, config.npa_level).p_guess_upper
        out.append({"theta": theta, "concurrence": concurrence(rho), "p_guess": p, "bits": randomness_bits(p)})
    return out


def figure_tables(rows: list[ResultRow], reference: list[dict[str, float]] | None) -> dict[str, list[dict[str, Any]]]:
    ok = [r for r in rows if r.status == "ok"]
    dense = np.linspace(0.0, math.pi / 4, 50)
    fig2 = []
    for r in rows:
        fig2.append({"series": "purity", "theta": r.theta_target, "concurrence": r.concurrence, "value": r.purity})
        fig2.append({"series": "fidelity_closest", "theta": r.theta_target, "concurrence": r.concurrence, "value": r.fidelity_closest})
    fig3 = [{"series": "bell_value", "theta": r.theta_closest, "value": r.bell_value, "sigma": r.bell_sigma} for r in ok]
    for t in dense:
        a = alpha_from_theta(float(t))
        fig3.append({"series": "local_bound", "theta": float(t), "value": local_bound(a)})
        fig3.append({"series": "quantum_max", "theta": float(t), "value": quantum_max(a)})
    fig4 = [
        {"series": "measured", "theta": r.theta_target, "concurrence": r.concurrence,
         "value": r.randomness_bits, "sigma": r.randomness_sigma}
        for r in ok
    ]
    for ref in reference or []:
        fig4.append({"series": "reference", "theta": ref["theta"], "concurrence": ref["concurrence"], "value": ref["bits"]})
    fig5 = [{"series": "certified_fidelity", "theta": r.theta_star, "value": r.certified_fidelity} for r in ok]
    for t in dense:
        fig5.append({"series": "separable_reference", "theta": float(t), "value": math.cos(float(t)) ** 2})
    return {"fig2.csv": fig2, "fig3.csv": fig3, "fig4.csv": fig4, "fig5.csv": fig5}


def _versions() -> dict[str, str]:
    return {"pescert": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def _row_json(r: ResultRow) -> dict[str, Any]:
    d = {c: getattr(r, c) for c in TABLE_COLUMNS}
    d = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}
    if math.isinf(r.counts_per_setting):
        d["counts_per_setting"] = "inf"
    d["behavior"] = r.behavior.to_dict() if r.behavior is not None else None
    d["certificate"] = r.certificate.to_dict() if r.certificate is not None else None
    return d


def write_outputs(
    config: ExperimentConfig,
    rows: list[ResultRow],
    reference: list[dict[str, float]] | None,
    out: Path,
    started: str,
) -> dict[str, Path]:
    out.mkdir(parents=True, exist_ok=True)
    files = {"table.csv": _csv(TABLE_COLUMNS, [{c: getattr(r, c) for c in TABLE_COLUMNS} for r in rows])}
    for name, table in figure_tables(rows, reference).items():
        files[name] = _csv(FIG_COLUMNS, table)
    files["rows.json"] = json.dumps([_row_json(r) for r in rows], indent=2) + "\n"
    paths = {}
    for name, text in files.items():
        paths[name] = out / name
        paths[name].write_text(text, newline="")
    manifest = {
        "config": config.to_dict(),
        "seed": config.seed,
        "npa_level": config.npa_level,
        "counts_per_setting": config.to_dict()["counts_per_setting"],
        "versions": _versions(),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "epsilon": "not reconstructed",
        "published_summary": PUBLISHED_SUMMARY,
        "rows": [{"theta_target": r.theta_target, "status": r.status, "reason": r.reason, "flags": r.flags} for r in rows],
        "files": sorted(files),
    }
    paths["manifest.json"] = out / "manifest.json"
    paths["manifest.json"].write_text(json.dumps(manifest, indent=2) + "\n")
    return paths


def run_pipeline(config: ExperimentConfig, output_dir: str | Path | None = None) -> list[ResultRow]:
    """Simulate every theta row, then write table.csv, fig2-5.csv, rows.json and manifest.json."""
    started = datetime.now(timezone.utc).isoformat()
    rows = run_rows(config)
    reference = analytic_reference(config)
    write_outputs(config, rows, reference, Path(output_dir or config.output_dir), started)
    return rows


def run_reference(config: ExperimentConfig, output_dir: str | Path | None = None) -> list[dict[str, float]]:
    """Write only the noisy-PES reference curve (fig4_reference.csv)."""
    reference = analytic_reference(config)
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = [{"series": "reference", "theta": r["theta"], "concurrence": r["concurrence"], "value": r["bits"]} for r in reference]
    (out / "fig4_reference.csv").write_text(_csv(FIG_COLUMNS, table), newline="")
    return reference
