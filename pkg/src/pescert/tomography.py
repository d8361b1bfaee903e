"""Simulated two-qubit state tomography in the nine Pauli-pair bases."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .quantum import (
    PAULIS,
    DensityMatrix,
    Observable,
    concurrence,
    fidelity_with_pes,
    hermitian_eigensystem,
    kron,
    purity,
)

AXES = ("x", "y", "z")
PAULI_SETTINGS = tuple(
    (Observable.pauli(a), Observable.pauli(b)) for a, b in itertools.product(AXES, repeat=2)
)
CSV_COLUMNS = ("setting_a", "setting_b", "n_pp", "n_pm", "n_mp", "n_mm")
_SIGNS = np.array([1.0, -1.0])


@dataclass(frozen=True)
class CountsRecord:
    """Coincidence counts for outcomes (++, +-, -+, --) in one setting pair."""

    setting_a: Observable
    setting_b: Observable
    counts: tuple[int, int, int, int]
    weight: float = 1.0

    def __post_init__(self) -> None:
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != 4:
            raise ValueError(f"need 4 counts, got {len(counts)}")
        if any(c < 0 for c in counts):
            raise ValueError(f"counts must be nonnegative, got {counts}")
        if not self.weight > 0:
            raise ValueError(f"weight must be positive, got {self.weight!r}")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def labels(self) -> tuple[str, str]:
        la, lb = self.setting_a.pauli_label, self.setting_b.pauli_label
        if la is None or lb is None:
            raise ValueError("only Pauli settings have labels")
        return la, lb


def born_probabilities(rho: DensityMatrix, a: Observable, b: Observable) -> np.ndarray:
    """P(++), P(+-), P(-+), P(--) for the setting pair (a, b)."""
    out = np.empty(4)
    for k, (sa, sb) in enumerate(itertools.product((1, -1), repeat=2)):
        out[k] = np.real(np.trace(rho.matrix @ kron(a.projector(sa), b.projector(sb))))
    return np.clip(out, 0.0, None)


def simulate_counts(
    rho: DensityMatrix,
    settings: Iterable[tuple[Observable, Observable]] = PAULI_SETTINGS,
    mean_counts: float = 1e6,
    seed: int | np.random.Generator = 0,
) -> list[CountsRecord]:
    """Independent Poisson counts with means mean_counts * P(outcome | setting)."""
    if not mean_counts > 0 or math.isinf(mean_counts):
        raise ValueError(f"mean_counts must be positive and finite, got {mean_counts!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    records = []
    for a, b in settings:
        n = rng.poisson(mean_counts * born_probabilities(rho, a, b))
        records.append(CountsRecord(a, b, tuple(int(v) for v in n)))
    return records


def _frequency_table(records: Iterable[CountsRecord]) -> dict[tuple[str, str], np.ndarray]:
    pooled: dict[tuple[str, str], np.ndarray] = {}
    for r in records:
        pooled[r.labels] = pooled.get(r.labels, np.zeros(4)) + np.array(r.counts, dtype=float)
    missing = [f"{a}{b}" for a, b in itertools.product(AXES, repeat=2) if (a, b) not in pooled]
    if missing:
        raise ValueError(f"incomplete tomography basis; missing settings {missing}")
    if any(v.sum() == 0 for v in pooled.values()):
        raise ValueError("a tomography setting has no counts")
    return pooled


def linear_inversion(table: dict[tuple[str, str], np.ndarray]) -> np.ndarray:
    """rho = (1/4) sum T_ij sigma_i (x) sigma_j from counts or frequencies per Pauli pair.

    Local terms pool the three settings that share the axis, weighting
    each by its number of counts.
    """
    t = {("i", "i"): 1.0}
    for a, b in itertools.product(AXES, repeat=2):
        n = table[(a, b)].reshape(2, 2)
        t[(a, b)] = float(_SIGNS @ n @ _SIGNS / n.sum())
    for a in AXES:
        n = sum(table[(a, b)].reshape(2, 2) for b in AXES)
        t[(a, "i")] = float(_SIGNS @ n.sum(axis=1) / n.sum())
    for b in AXES:
        n = sum(table[(a, b)].reshape(2, 2) for a in AXES)
        t[("i", b)] = float(_SIGNS @ n.sum(axis=0) / n.sum())
    rho = sum(v * kron(PAULIS[i], PAULIS[j]) for (i, j), v in t.items())
    return rho / 4.0


def project_to_simplex(w: np.ndarray) -> np.ndarray:
    """Euclidean projection of a vector onto {p >= 0, sum p = 1}."""
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(w) + 1)
    rho = int(np.nonzero(u - css / k > 0)[0][-1])
    tau = css[rho] / (rho + 1)
    return np.maximum(w - tau, 0.0)


def physical_projection(m: np.ndarray) -> DensityMatrix:
    """Closest unit-trace PSD matrix in Frobenius norm."""
    w, v = hermitian_eigensystem(m)
    p = project_to_simplex(w)
    return DensityMatrix((v * p) @ v.conj().T)


def reconstruct(records: Iterable[CountsRecord]) -> DensityMatrix:
    return physical_projection(linear_inversion(_frequency_table(records)))


def reconstruct_from_probabilities(rho: DensityMatrix) -> DensityMatrix:
    """Noiseless reconstruction from exact Born probabilities (inversion check)."""
    table = {r: born_probabilities(rho, *s) for r, s in zip(itertools.product(AXES, repeat=2), PAULI_SETTINGS)}
    return physical_projection(linear_inversion(table))


def closest_pes(rho: DensityMatrix) -> tuple[float, float]:
    """theta in [0, pi/4] maximizing <PES(theta)| rho |PES(theta)>, and that fidelity.

    On the {00, 11} block [[a, c], [c*, d]] the fidelity is
    (a + d)/2 + (a - d)/2 cos 2t + Re(c) sin 2t, a sinusoid in 2t, so the
    maximizer is its phase clipped to [0, pi/2]. A flat objective returns pi/4.
    """
    m = rho.matrix
    a, d, c = m[0, 0].real, m[3, 3].real, m[0, 3].real
    amp = math.hypot(0.5 * (a - d), c)
    if amp <= 1e-14:
        theta = math.pi / 4
    else:
        phase = math.atan2(c, 0.5 * (a - d))
        if 0.0 <= phase <= math.pi / 2:
            theta = 0.5 * phase
        else:
            ends = (0.0, math.pi / 4)
            vals = [fidelity_with_pes(rho, t) for t in ends]
            theta = ends[1] if vals[1] >= vals[0] else ends[0]
    return theta, fidelity_with_pes(rho, theta)


@dataclass(frozen=True)
class TomographyResult:
    rho: DensityMatrix
    purity: float
    concurrence: float
    theta_closest: float
    fidelity_closest: float


def analyze(rho: DensityMatrix) -> TomographyResult:
    theta, fid = closest_pes(rho)
    return TomographyResult(rho, purity(rho), concurrence(rho), theta, fid)


def tomography(records: Iterable[CountsRecord]) -> TomographyResult:
    return analyze(reconstruct(records))


def records_to_csv(records: Iterable[CountsRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([*r.labels, *r.counts])
    return buf.getvalue()


def records_from_csv(text: str) -> list[CountsRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"expected columns {CSV_COLUMNS}, got {reader.fieldnames}")
    out = []
    for row in reader:
        if row["setting_a"] not in AXES or row["setting_b"] not in AXES:
            raise ValueError(f"unknown setting {row['setting_a']}{row['setting_b']}")
        counts = tuple(int(row[k]) for k in CSV_COLUMNS[2:])
        out.append(CountsRecord(Observable.pauli(row["setting_a"]), Observable.pauli(row["setting_b"]), counts))
    return out
