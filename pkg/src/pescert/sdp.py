"""Dense primal-dual interior-point solver for small block-diagonal SDPs.

Primal::

    minimize    <C, X>
    subject to  <A_i, X> = b_i,   X = diag(X_1, ..., X_k) >= 0

Dual::

    maximize    b.y
    subject to  C - sum_i y_i A_i = Z >= 0

All blocks are real symmetric. Search directions use Nesterov-Todd scaling
with a Mehrotra predictor-corrector step; the Schur complement is factored by
dense Cholesky.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

OPTIMAL = "optimal"
MAX_ITERATIONS = "max_iterations"
INFEASIBLE = "infeasible"
# numerical breakdown before the target accuracy; the last good iterate is returned
STALLED = "stalled"

log = logging.getLogger(__name__)

MAX_BLOCK_DIM = 64
MAX_CONSTRAINTS = 2000


@dataclass(frozen=True)
class Constraint:
    """<coefficients, X> = rhs; ``coefficients`` maps block index -> symmetric matrix."""

    coefficients: dict[int, np.ndarray]
    rhs: float


@dataclass
class SdpProblem:
    block_dims: list[int]
    objective: dict[int, np.ndarray]
    constraints: list[Constraint]

    def __post_init__(self) -> None:
        if any(d <= 0 or d > MAX_BLOCK_DIM for d in self.block_dims):
            raise ValueError(f"block dimensions must lie in [1, {MAX_BLOCK_DIM}]")
        if len(self.constraints) > MAX_CONSTRAINTS:
            raise ValueError(f"at most {MAX_CONSTRAINTS} constraints are supported")
        self.objective = {k: _check_sym(v, self.block_dims[k]) for k, v in self.objective.items()}
        self.constraints = [
            Constraint({k: _check_sym(v, self.block_dims[k]) for k, v in c.coefficients.items()}, float(c.rhs))
            for c in self.constraints
        ]

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def rhs(self) -> np.ndarray:
        return np.array([c.rhs for c in self.constraints], dtype=float)

    def objective_blocks(self) -> list[np.ndarray]:
        return [self.objective.get(k, np.zeros((d, d))) for k, d in enumerate(self.block_dims)]

    def constraint_tensor(self, k: int) -> np.ndarray:
        """All constraint matrices of block k stacked as (m, n_k, n_k)."""
        d = self.block_dims[k]
        out = np.zeros((self.num_constraints, d, d))
        for i, c in enumerate(self.constraints):
            if k in c.coefficients:
                out[i] = c.coefficients[k]
        return out

    def apply(self, blocks: Sequence[np.ndarray]) -> np.ndarray:
        """A(X): the vector of <A_i, X>."""
        out = np.zeros(self.num_constraints)
        for k, x in enumerate(blocks):
            out += self.constraint_tensor(k).reshape(self.num_constraints, -1) @ x.ravel()
        return out

    def adjoint(self, y: np.ndarray) -> list[np.ndarray]:
        """A*(y) = sum_i y_i A_i, blockwise."""
        return [np.tensordot(y, self.constraint_tensor(k), axes=1) for k in range(len(self.block_dims))]

    def to_dict(self) -> dict:
        return {
            "blocks": list(self.block_dims),
            "objective": [_lower(m) for m in self.objective_blocks()],
            "constraints": [
                {
                    "rhs": c.rhs,
                    "coefficients": {str(k): _lower(v) for k, v in sorted(c.coefficients.items())},
                }
                for c in self.constraints
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SdpProblem":
        dims = [int(d) for d in data["blocks"]]
        objective = {k: _unlower(v, dims[k]) for k, v in enumerate(data["objective"])}
        constraints = [
            Constraint({int(k): _unlower(v, dims[int(k)]) for k, v in c["coefficients"].items()}, c["rhs"])
            for c in data["constraints"]
        ]
        return cls(dims, objective, constraints)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SdpProblem":
        return cls.from_dict(json.loads(text))


@dataclass
class SdpSolution:
    primal_blocks: list[np.ndarray]
    dual_vector: np.ndarray
    dual_slack: list[np.ndarray]
    primal_value: float
    dual_value: float
    status: str
    iterations: int = 0
    message: str = ""

    @property
    def gap(self) -> float:
        return abs(self.primal_value - self.dual_value)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "gap": self.gap,
            "iterations": self.iterations,
            "message": self.message,
            "primal_blocks": [_lower(x) for x in self.primal_blocks],
            "dual_slack": [_lower(z) for z in self.dual_slack],
            "dual_vector": [float(v) for v in self.dual_vector],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SdpSolution":
        xs = [_unlower_auto(v) for v in data["primal_blocks"]]
        zs = [_unlower_auto(v) for v in data["dual_slack"]]
        return cls(
            xs, np.array(data["dual_vector"], dtype=float), zs,
            float(data["primal_value"]), float(data["dual_value"]),
            data["status"], int(data.get("iterations", 0)), data.get("message", ""),
        )


@dataclass(frozen=True)
class SolverOptions:
    gap_tol: float = 1e-9
    feas_tol: float = 1e-10
    max_iterations: int = 100
    step_fraction: float = 0.98
    infeasibility_threshold: float = 1e8
    # accepted as optimal when the iteration cannot make further progress
    acceptable_gap: float = 1e-7
    acceptable_feas: float = 1e-8
    min_step: float = 1e-8
    feasibility_correction: bool = True


@dataclass
class VerificationReport:
    primal_residual: float
    dual_residual: float
    min_primal_eigenvalue: float
    min_dual_eigenvalue: float
    gap: float
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def _check_sym(m: np.ndarray, d: int) -> np.ndarray:
    m = np.asarray(m)
    if np.iscomplexobj(m):
        if np.max(np.abs(m.imag)) > 1e-12:
            raise ValueError("only real symmetric coefficient matrices are supported")
        m = m.real
    m = np.asarray(m, dtype=float)
    if m.shape != (d, d):
        raise ValueError(f"coefficient matrix has shape {m.shape}, block needs {(d, d)}")
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-12:
        raise ValueError("coefficient matrix is not symmetric")
    return 0.5 * (m + m.T)


def _lower(m: np.ndarray) -> list[float]:
    n = m.shape[0]
    return [float(m[i, j]) for i in range(n) for j in range(i + 1)]


def _unlower(values: Sequence[float], n: int) -> np.ndarray:
    if len(values) != n * (n + 1) // 2:
        raise ValueError("lower-triangle length does not match block dimension")
    m = np.zeros((n, n))
    it = iter(values)
    for i in range(n):
        for j in range(i + 1):
            m[i, j] = m[j, i] = float(next(it))
    return m


def _unlower_auto(values: Sequence[float]) -> np.ndarray:
    n = int(round((math.sqrt(8 * len(values) + 1) - 1) / 2))
    return _unlower(values, n)


def _inner(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> float:
    return float(sum(np.vdot(x, y) for x, y in zip(a, b)))


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    """Largest t with x + t dx >= 0, for x positive definite."""
    l = np.linalg.cholesky(x)
    linv_dx = scipy.linalg.solve_triangular(l, dx, lower=True)
    m = scipy.linalg.solve_triangular(l, linv_dx.T, lower=True)
    lmin = np.linalg.eigvalsh(_sym(m))[0]
    return math.inf if lmin >= 0 else -1.0 / lmin


def _independent_rows(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, bool]:
    """Indices of a maximal independent row subset, and whether b is consistent."""
    if a.shape[0] == 0:
        return np.arange(0), True
    _, r, piv = scipy.linalg.qr(a.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(a.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0) * 10
    rank = int(np.sum(diag > tol))
    keep = np.sort(piv[:rank])
    if rank == a.shape[0]:
        return keep, True
    coef, *_ = np.linalg.lstsq(a[keep].T, a.T, rcond=None)
    implied = coef.T @ b[keep]
    consistent = bool(np.max(np.abs(implied - b)) <= 1e-9 * (1.0 + np.max(np.abs(b))))
    return keep, consistent


def solve(p: SdpProblem, options: SolverOptions | None = None) -> SdpSolution:
    """Solve ``p`` and return primal, dual and slack iterates with a status.

    ``status`` is ``optimal`` once primal and dual residuals are below
    ``feas_tol`` and the absolute duality gap is below ``gap_tol``. A dual
    objective growing past ``infeasibility_threshold`` marks the primal
    infeasible (and a primal objective below its negative marks the dual
    infeasible); running out of iterations is reported, never hidden.

    Near the optimum of a degenerate problem the Schur complement becomes
    too ill-conditioned to make progress. The solver then stops and returns
    the best iterate seen: ``optimal`` if it meets ``acceptable_gap`` and
    ``acceptable_feas``, ``stalled`` otherwise.
    """
    opt = options or SolverOptions()
    dims = list(p.block_dims)
    nblocks = len(dims)
    m_all = p.num_constraints
    b_all = p.rhs()
    C = p.objective_blocks()
    tensors_all = [p.constraint_tensor(k) for k in range(nblocks)]
    flat_all = np.hstack([t.reshape(m_all, -1) for t in tensors_all]) if m_all else np.zeros((0, 1))

    keep, consistent = _independent_rows(flat_all, b_all)
    if not consistent:
        zero = [np.zeros((d, d)) for d in dims]
        return SdpSolution(zero, np.zeros(m_all), zero, math.nan, math.nan, INFEASIBLE, 0,
                           "linearly dependent constraints with inconsistent right-hand sides")
    A = [t[keep] for t in tensors_all]
    b = b_all[keep]
    m = len(keep)
    Aflat = [a.reshape(m, -1) for a in A]
    ntot = sum(dims)
    # Gram matrix of the (independent) constraints, used to keep A(dX) = rp exact
    gram = scipy.linalg.cho_factor(sum(af @ af.T for af in Aflat)) if m else None

    def apply(blocks: list[np.ndarray]) -> np.ndarray:
        out = np.zeros(m)
        for af, x in zip(Aflat, blocks):
            out += af @ x.ravel()
        return out

    def adjoint(y: np.ndarray) -> list[np.ndarray]:
        return [np.tensordot(y, a, axes=1) for a in A]

    # cold start: scaled identities
    a_norms = [math.sqrt(sum(float(np.sum(a[i] ** 2)) for a in A)) for i in range(m)]
    c_norm = math.sqrt(sum(float(np.sum(c ** 2)) for c in C))
    xi = max([10.0, math.sqrt(ntot)] + [ntot * (1 + abs(b[i])) / (1 + a_norms[i]) for i in range(m)])
    eta = max([10.0, math.sqrt(ntot), c_norm] + a_norms)
    X = [xi * np.eye(d) for d in dims]
    Z = [eta * np.eye(d) for d in dims]
    y = np.zeros(m)

    status, message = MAX_ITERATIONS, f"iteration cap {opt.max_iterations} reached"
    best: tuple[float, list, np.ndarray, list, int] | None = None
    breakdown = ""
    it = 0
    for it in range(1, opt.max_iterations + 1):
        rp = b - apply(X)
        aty = adjoint(y)
        Rd = [c - z - a for c, z, a in zip(C, Z, aty)]
        pobj = _inner(C, X)
        dobj = float(b @ y)
        mu = _inner(X, Z) / ntot
        pinf = float(np.max(np.abs(rp), initial=0.0))
        dinf = max(float(np.max(np.abs(r))) for r in Rd)
        log.debug("it=%d pobj=%.10g dobj=%.10g pinf=%.2e dinf=%.2e mu=%.2e", it, pobj, dobj, pinf, dinf, mu)
        merit = max(pinf / opt.acceptable_feas, dinf / opt.acceptable_feas, abs(pobj - dobj) / opt.acceptable_gap)
        if best is None or merit <= best[0]:
            best = (merit, X, y, Z, it)
        if pinf <= opt.feas_tol and dinf <= opt.feas_tol and abs(pobj - dobj) <= opt.gap_tol:
            status, message = OPTIMAL, "converged"
            break
        if dobj > opt.infeasibility_threshold and dinf <= 1e-6 * max(1.0, abs(dobj)):
            status, message = INFEASIBLE, "primal infeasible: dual objective diverges"
            break
        if -pobj > opt.infeasibility_threshold and pinf <= 1e-6 * max(1.0, abs(pobj)):
            status, message = INFEASIBLE, "dual infeasible: primal objective diverges"
            break

        # Nesterov-Todd scaling per block: W Z W = X, W = G G^T, G^T Z G = diag(d)
        G, Ginv, d = [], [], []
        try:
            for x, z in zip(X, Z):
                lx = np.linalg.cholesky(x)
                lz = np.linalg.cholesky(z)
                u, sv, vt = np.linalg.svd(lz.T @ lx)
                g = lx @ vt.T / np.sqrt(sv)
                G.append(g)
                Ginv.append((u / np.sqrt(sv)).T @ lz.T)
                d.append(sv)
        except np.linalg.LinAlgError:
            breakdown = "iterates lost positive definiteness"
            break
        W = [g @ g.T for g in G]

        M = np.zeros((m, m))
        for a, af, w in zip(A, Aflat, W):
            waw = np.einsum("ij,mjk,kl->mil", w, a, w, optimize=True)
            M += af @ waw.reshape(m, -1).T
        M = _sym(M)
        try:
            factor = scipy.linalg.cho_factor(M)
            schur = lambda r: scipy.linalg.cho_solve(factor, r)  # noqa: E731
        except np.linalg.LinAlgError:
            pinvM = np.linalg.pinv(M)
            schur = lambda r: pinvM @ r  # noqa: E731

        wrdw = [w @ r @ w for w, r in zip(W, Rd)]

        def direction(Rscaled: list[np.ndarray]):
            Rc = []
            for g, dk, r in zip(G, d, Rscaled):
                s = r / (dk[:, None] + dk[None, :])
                Rc.append(_sym(g @ s @ g.T))
            rhs = rp - apply(Rc) + apply(wrdw)
            dy = schur(rhs)
            dZ = [r - a for r, a in zip(Rd, adjoint(dy))]
            dX = [_sym(rc - w @ dz @ w) for rc, w, dz in zip(Rc, W, dZ)]
            if m and opt.feasibility_correction:
                # the Schur solve loses accuracy as mu -> 0; a least-norm
                # correction restores the primal equations without touching M
                fix = adjoint(scipy.linalg.cho_solve(gram, rp - apply(dX)))
                dX = [dx + f for dx, f in zip(dX, fix)]
            return dX, dy, dZ

        def steps(dX, dZ, frac: float) -> tuple[float, float]:
            ap = min([1.0] + [frac * _max_step(x, dx) for x, dx in zip(X, dX)])
            ad = min([1.0] + [frac * _max_step(z, dz) for z, dz in zip(Z, dZ)])
            return ap, ad

        try:
            # predictor
            dX, dy, dZ = direction([-2.0 * np.diag(dk ** 2) for dk in d])
            ap, ad = steps(dX, dZ, 1.0)
            mu_aff = _inner([x + ap * dx for x, dx in zip(X, dX)], [z + ad * dz for z, dz in zip(Z, dZ)]) / ntot
            # short predictor steps call for more centering
            expon = max(1.0, 3.0 * min(ap, ad) ** 2)
            sigma = min(1.0, max(0.0, (mu_aff / mu) ** expon)) if mu > 0 else 0.0
            frac = min(opt.step_fraction, 0.9 + 0.09 * min(ap, ad))
            # corrector
            Rs = []
            for g, gi, dk, dx, dz in zip(G, Ginv, d, dX, dZ):
                dxs = gi @ dx @ gi.T
                dzs = g.T @ dz @ g
                Rs.append(2.0 * sigma * mu * np.eye(len(dk)) - 2.0 * np.diag(dk ** 2) - (dxs @ dzs + dzs @ dxs))
            dX, dy, dZ = direction(Rs)
            ap, ad = steps(dX, dZ, frac)
        except np.linalg.LinAlgError:
            breakdown = "numerical breakdown while computing the search direction"
            break
        if max(ap, ad) < opt.min_step:
            breakdown = f"step lengths collapsed ({ap:.1e}, {ad:.1e})"
            break

        log.debug("   ap=%.3e ad=%.3e sigma=%.2e", ap, ad, sigma)
        X = [_sym(x + ap * dx) for x, dx in zip(X, dX)]
        y = y + ad * dy
        Z = [_sym(z + ad * dz) for z, dz in zip(Z, dZ)]

    if status == MAX_ITERATIONS and best is not None:
        merit, X, y, Z, best_it = best
        stop = breakdown or message
        if merit <= 1.0:
            status = OPTIMAL
            message = f"converged to acceptable accuracy at iteration {best_it} ({stop})"
        elif breakdown:
            status = STALLED
            message = f"{breakdown}; returning iteration {best_it}"
    y_full = np.zeros(m_all)
    y_full[keep] = y
    return SdpSolution(
        primal_blocks=X,
        dual_vector=y_full,
        dual_slack=Z,
        primal_value=_inner(C, X),
        dual_value=float(b @ y),
        status=status,
        iterations=it,
        message=message,
    )


def verify(
    p: SdpProblem,
    s: SdpSolution,
    *,
    residual_tol: float = 1e-8,
    eig_tol: float = 1e-9,
    gap_tol: float = 1e-7,
) -> VerificationReport:
    """Recompute residuals, eigenvalue floors and the gap from scratch.

    The dual slack is rebuilt as C - A*(y) rather than taken from the
    solution, so a bad dual vector cannot hide behind a good slack.
    """
    b = p.rhs()
    primal_res = float(np.max(np.abs(p.apply(s.primal_blocks) - b), initial=0.0))
    slack = [c - a for c, a in zip(p.objective_blocks(), p.adjoint(s.dual_vector))]
    dual_res = max(float(np.max(np.abs(z - zs))) for z, zs in zip(slack, s.dual_slack))
    min_x = min(float(np.linalg.eigvalsh(_sym(x))[0]) for x in s.primal_blocks)
    min_z = min(float(np.linalg.eigvalsh(_sym(z))[0]) for z in slack)
    pval = _inner(p.objective_blocks(), s.primal_blocks)
    dval = float(b @ s.dual_vector)
    gap = abs(pval - dval)
    violations = []
    if primal_res > residual_tol:
        violations.append(f"primal residual {primal_res:.3e} exceeds {residual_tol:.1e}")
    if dual_res > residual_tol:
        violations.append(f"dual residual {dual_res:.3e} exceeds {residual_tol:.1e}")
    if min_x < -eig_tol:
        violations.append(f"primal block eigenvalue {min_x:.3e} below -{eig_tol:.1e}")
    if min_z < -eig_tol:
        violations.append(f"dual slack eigenvalue {min_z:.3e} below -{eig_tol:.1e}")
    if gap > gap_tol:
        violations.append(f"duality gap {gap:.3e} exceeds {gap_tol:.1e}")
    if dval > pval + max(gap_tol, 1e-9) and min_x >= -eig_tol and min_z >= -eig_tol:
        violations.append("weak duality violated")
    return VerificationReport(primal_res, dual_res, min_x, min_z, gap, violations)
