"""Moment-matrix relaxation of the guessing probability for Alice's outcome.

Operators are the "+1" outcome projectors A_x, B_y (Collins-Gisin basis).
Eve's measurement is folded into one subnormalized moment matrix per Eve
outcome e; block e holds <Psi| S_i^dag S_j (x) Pi_e |Psi>. Moments are
taken real, which loses nothing for real behavior data: the complex
conjugate of a feasible moment matrix is feasible too, and so is the average.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .behaviors import (
    OUTCOMES,
    Behavior,
    apply_white_noise,
    collins_gisin_coordinates,
    collins_gisin_form,
    signaling_report,
)
from .sdp import OPTIMAL, STALLED, Constraint, SdpProblem, SdpSolution, SolverOptions, solve

Word = tuple[tuple[str, int], ...]

LEVEL_1AB = "level1ab"
LEVEL_2 = "level2"
LEVELS = (LEVEL_1AB, LEVEL_2)

BEHAVIOR_KEYS = ("1", "A0", "A1", "B0", "B1", "A0B0", "A0B1", "A1B0", "A1B1")
NS_TOL = 1e-9
EVAL_TOL = 1e-9


def normalize(word: Word) -> Word:
    """Sort Alice before Bob (they commute) and drop repeated projectors."""
    out: list[tuple[str, int]] = []
    for party in ("A", "B"):
        for op in word:
            if op[0] == party and (not out or out[-1] != op):
                out.append(op)
    return tuple(out)


def canonical(word: Word) -> Word:
    """Representative of {w, w^dag}; real moments make the two equal."""
    w = normalize(word)
    return min(w, normalize(tuple(reversed(w))))


@dataclass(frozen=True)
class MomentLayout:
    level: str
    monomials: tuple[Word, ...]
    cell_classes: dict[Word, list[tuple[int, int]]] = field(repr=False)
    behavior_cells: dict[str, tuple[int, int]] = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.monomials)


def moment_layout(level: str = LEVEL_2) -> MomentLayout:
    if level not in LEVELS:
        raise ValueError(f"unknown relaxation level {level!r}; expected one of {LEVELS}")
    A = [("A", x) for x in range(2)]
    B = [("B", y) for y in range(2)]
    mons: list[Word] = [()]
    mons += [(a,) for a in A] + [(b,) for b in B]
    mons += [(a, b) for a in A for b in B]
    if level == LEVEL_2:
        mons += [(A[0], A[1]), (A[1], A[0]), (B[0], B[1]), (B[1], B[0])]
    classes: dict[Word, list[tuple[int, int]]] = {}
    for i, j in itertools.combinations_with_replacement(range(len(mons)), 2):
        key = canonical(tuple(reversed(mons[i])) + mons[j])
        classes.setdefault(key, []).append((i, j))
    index = {w: k for k, w in enumerate(mons)}
    cells = {"1": (0, 0)}
    for x in range(2):
        cells[f"A{x}"] = (0, index[(A[x],)])
    for y in range(2):
        cells[f"B{y}"] = (0, index[(B[y],)])
    for x, y in itertools.product(range(2), repeat=2):
        cells[f"A{x}B{y}"] = (0, index[(A[x], B[y])])
    return MomentLayout(level, tuple(mons), classes, cells)


def class_matrix(layout: MomentLayout, word: Word) -> np.ndarray:
    """0/1 indicator of the cells whose moment equals ``word``."""
    f = np.zeros((layout.dim, layout.dim))
    for i, j in layout.cell_classes[word]:
        f[i, j] = f[j, i] = 1.0
    return f


def behavior_vector(b: Behavior) -> dict[str, float]:
    """Collins-Gisin coordinates of a behavior keyed like ``BEHAVIOR_KEYS``."""
    pa, pb, pab = collins_gisin_coordinates(b.p)
    out = {"1": 1.0}
    for x in range(2):
        out[f"A{x}"] = float(pa[x])
    for y in range(2):
        out[f"B{y}"] = float(pb[y])
    for x, y in itertools.product(range(2), repeat=2):
        out[f"A{x}B{y}"] = float(pab[x, y])
    return out


def _behavior_words(layout: MomentLayout) -> dict[str, Word]:
    out = {}
    for key, (i, j) in layout.behavior_cells.items():
        out[key] = canonical(tuple(reversed(layout.monomials[i])) + layout.monomials[j])
    return out


@dataclass
class GuessingProgram:
    """Moment relaxation of Eve's guessing game, written in the solver's dual form.

    Block e is the subnormalized moment matrix of Eve outcome e. Its cells
    are parametrized by one free real per moment class, so projector
    algebra, commutation and symmetry hold by construction. In the last
    block the behavior cells are fixed to ``Q - sum of the other blocks``,
    which makes the behavior-matching and normalization constraints exact.
    The solver's dual slack ``C - sum_i y_i A_i`` is then the list of
    moment matrices and the solver's primal holds the multipliers that
    become the certificate.
    """

    layout: MomentLayout
    x_star: int
    guesses: tuple[int, ...]
    problem: SdpProblem
    variables: tuple[tuple[int, Word], ...]
    behavior_words: dict[str, Word]
    # objective constant as a linear form over the behavior coordinates
    constant_form: dict[str, float]
    behavior: dict[str, float]

    @property
    def constant(self) -> float:
        return sum(c * self.behavior[k] for k, c in self.constant_form.items())

    def moment_matrices(self, y: np.ndarray) -> list[np.ndarray]:
        """Block moment matrices for the free-moment vector ``y``."""
        c = self.problem.objective_blocks()
        return [ck - ak for ck, ak in zip(c, self.problem.adjoint(np.asarray(y, dtype=float)))]


def build_program(
    b: Behavior, x_star: int = 1, level: str = LEVEL_2, guesses: tuple[int, ...] = (1, -1)
) -> GuessingProgram:
    """Assemble the SDP whose optimum bounds Eve's chance of guessing a for x = x_star.

    ``guesses[e]`` is the value of a that Eve announces on outcome e; two
    outcomes (one per value of a) are enough, more may be given for testing.
    """
    if x_star not in (0, 1):
        raise ValueError(f"x_star must be 0 or 1, got {x_star!r}")
    report = signaling_report(b, NS_TOL)
    if not report.is_no_signaling:
        raise ValueError(
            "behavior must be no-signaling (regularize first); signaling = "
            f"{max(report.max_signaling_A, report.max_signaling_B):.3e}"
        )
    if not guesses or any(g not in OUTCOMES for g in guesses):
        raise ValueError("guesses must be a non-empty sequence of +1/-1")
    layout = moment_layout(level)
    n = layout.dim
    nblocks = len(guesses)
    last = nblocks - 1
    words = _behavior_words(layout)
    fixed = set(words.values())
    key_of = {w: k for k, w in words.items()}
    F = {w: class_matrix(layout, w) for w in layout.cell_classes}
    values = behavior_vector(b)

    def gain(e: int, w: Word) -> float:
        # coefficient of moment w of block e in P(a = guess_e | x_star)
        if guesses[e] == 1:
            return float(w == words[f"A{x_star}"])
        return float(w == words["1"]) - float(w == words[f"A{x_star}"])

    variables = tuple(
        (e, w) for e in range(nblocks) for w in layout.cell_classes if not (e == last and w in fixed)
    )
    constraints = []
    for e, w in variables:
        blocks = {e: -F[w]}
        g = gain(e, w)
        if e != last and w in fixed:
            blocks[last] = F[w]
            g -= gain(last, w)
        constraints.append(Constraint(blocks, g))
    objective = {last: sum(values[key_of[w]] * F[w] for w in fixed)}
    constant_form = {key_of[w]: gain(last, w) for w in fixed if gain(last, w) != 0.0}
    problem = SdpProblem([n] * nblocks, objective, constraints)
    return GuessingProgram(layout, x_star, tuple(guesses), problem, variables, words, constant_form, values)


def bell_program(coefficients: dict[str, float], level: str = LEVEL_1AB) -> tuple[SdpProblem, float]:
    """Maximize sum_k coefficients[k] * moment_k over one normalized moment matrix.

    ``coefficients`` is keyed like ``BEHAVIOR_KEYS``. Returns the problem and
    the constant (coefficient of "1"); the relaxation's maximum is the
    solver's optimal value plus that constant.
    """
    unknown = set(coefficients) - set(BEHAVIOR_KEYS)
    if unknown:
        raise ValueError(f"unknown coefficient keys {sorted(unknown)}")
    layout = moment_layout(level)
    words = _behavior_words(layout)
    key_of = {w: k for k, w in words.items()}
    constraints = []
    for w in layout.cell_classes:
        if w == words["1"]:
            continue
        constraints.append(Constraint({0: -class_matrix(layout, w)}, float(coefficients.get(key_of.get(w, ""), 0.0))))
    problem = SdpProblem([layout.dim], {0: class_matrix(layout, words["1"])}, constraints)
    return problem, float(coefficients.get("1", 0.0))


def relaxation_visibility(b: Behavior, level: str = LEVEL_2, options: SolverOptions | None = None) -> float:
    """Largest v with v * b + (1 - v) * uniform inside the relaxation at ``level``.

    Values >= 1 mean ``b`` itself is compatible with the relaxation; the
    uniform behavior returns ``inf``.
    """
    report = signaling_report(b, NS_TOL)
    if not report.is_no_signaling:
        raise ValueError("behavior must be no-signaling (regularize first)")
    layout = moment_layout(level)
    words = _behavior_words(layout)
    key_of = {w: k for k, w in words.items()}
    target = behavior_vector(b)
    center = behavior_vector(Behavior.uniform())
    shift = sum((target[k] - center[k]) * class_matrix(layout, w) for k, w in words.items())
    if not np.any(np.abs(shift) > 1e-15):
        return math.inf
    constraints = [Constraint({0: -shift}, 1.0)]
    for w in layout.cell_classes:
        if w not in key_of:
            constraints.append(Constraint({0: -class_matrix(layout, w)}, 0.0))
    base = sum(center[k] * class_matrix(layout, w) for k, w in words.items())
    sol = solve(SdpProblem([layout.dim], {0: base}, constraints), options)
    if sol.status not in (OPTIMAL, STALLED):
        raise SolverFailure(sol.status, sol.message)
    # the dual side is the moment matrix: a feasible visibility, hence a safe lower estimate
    return float(sol.dual_value)


def shrink_into_relaxation(
    b: Behavior, level: str = LEVEL_2, margin: float = 1e-3
) -> tuple[Behavior, float]:
    """Mix ``b`` with white noise just enough to sit strictly inside the relaxation.

    Returns the (possibly unchanged) behavior and the relaxation visibility
    of ``b``; a value below 1 means ``b`` lies outside the relaxation.
    """
    v = relaxation_visibility(b, level)
    if v >= 1.0 + margin:
        return b, v
    v_use = max(0.0, min(1.0, v) * (1.0 - margin))
    return apply_white_noise(b, 1.0 - v_use), v


def behavior_hash(b: Behavior) -> str:
    payload = json.dumps(b.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def _key(ia: int, ib: int, x: int, y: int) -> str:
    sym = {0: "+", 1: "-"}
    return f"{sym[ia]}{sym[ib]}|{x}{y}"


@dataclass(frozen=True)
class Certificate:
    """Affine upper bound sum c(ab|xy) P(ab|xy) + constant on the guessing probability."""

    coefficients: np.ndarray
    constant: float
    level: str
    x_star: int
    source_hash: str = ""

    def evaluate(self, b: Behavior | np.ndarray) -> float:
        p = b.p if isinstance(b, Behavior) else np.asarray(b, dtype=float)
        return float(np.sum(self.coefficients * p) + self.constant)

    @property
    def magnitude(self) -> float:
        return float(np.max(np.abs(self.coefficients)))

    def to_dict(self) -> dict:
        return {
            "coefficients": {
                _key(ia, ib, x, y): float(self.coefficients[ia, ib, x, y])
                for ia, ib, x, y in itertools.product(range(2), repeat=4)
            },
            "constant": self.constant,
            "level": self.level,
            "x_star": self.x_star,
            "source_hash": self.source_hash,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Certificate":
        c = np.zeros((2, 2, 2, 2))
        for ia, ib, x, y in itertools.product(range(2), repeat=4):
            c[ia, ib, x, y] = float(data["coefficients"][_key(ia, ib, x, y)])
        return cls(c, float(data["constant"]), data["level"], int(data["x_star"]), data.get("source_hash", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Certificate":
        return cls.from_dict(json.loads(text))


def certificate_from_solution(
    program: GuessingProgram, solution: SdpSolution, source_hash: str = ""
) -> Certificate:
    """Affine bound read off the multipliers of the moment program.

    For any behavior Q the moment program's optimum is at most
    constant(Q) + <C(Q), X> for every X feasible in the solver's primal,
    and both terms are affine in Q, so they define the certificate.
    """
    x_last = solution.primal_blocks[-1]
    g = dict(program.constant_form)
    for key, w in program.behavior_words.items():
        f = class_matrix(program.layout, w)
        g[key] = g.get(key, 0.0) + float(np.vdot(f, x_last))
    coefficients = collins_gisin_form(
        np.array([g.get(f"A{x}", 0.0) for x in range(2)]),
        np.array([g.get(f"B{y}", 0.0) for y in range(2)]),
        np.array([[g.get(f"A{x}B{y}", 0.0) for y in range(2)] for x in range(2)]),
    )
    return Certificate(coefficients, g.get("1", 0.0), program.layout.level, program.x_star, source_hash)


class SolverFailure(RuntimeError):
    def __init__(self, status: str, message: str):
        super().__init__(f"SDP solve failed ({status}): {message}")
        self.status = status


@dataclass(frozen=True)
class GuessingResult:
    p_guess_upper: float
    certificate: Certificate
    # objective reached by the moment matrices (a lower estimate of the relaxation optimum)
    moment_value: float
    status: str
    iterations: int


def guessing_probability(
    b: Behavior,
    x_star: int = 1,
    level: str = LEVEL_2,
    options: SolverOptions | None = None,
    guesses: tuple[int, ...] = (1, -1),
) -> GuessingResult:
    """Upper bound on P_guess for Alice's input ``x_star`` plus its affine certificate.

    The bound is the multiplier side of the program, so it stays an upper
    bound when a degenerate instance (an extremal behavior) stops short of
    full accuracy. Statuses other than optimal or stalled raise
    :class:`SolverFailure`.
    """
    program = build_program(b, x_star, level, guesses)
    sol = solve(program.problem, options)
    if sol.status not in (OPTIMAL, STALLED) or not math.isfinite(sol.primal_value):
        raise SolverFailure(sol.status, sol.message)
    cert = certificate_from_solution(program, sol, behavior_hash(b))
    upper = min(1.0, cert.evaluate(b))
    return GuessingResult(upper, cert, program.constant + sol.dual_value, sol.status, sol.iterations)


def randomness_bits(p_guess: float) -> float:
    if p_guess <= 0:
        raise ValueError(f"guessing probability must be positive, got {p_guess!r}")
    if p_guess > 1.0 + EVAL_TOL:
        raise ValueError(f"guessing probability cannot exceed 1, got {p_guess!r}")
    return max(0.0, -math.log2(p_guess))


def certificate_randomness(cert: Certificate, b: Behavior | np.ndarray) -> float:
    value = cert.evaluate(b)
    if value <= 0 or value > 1.0 + EVAL_TOL:
        raise ValueError(f"certificate evaluates to {value!r}, outside (0, 1]: certificate misuse")
    return randomness_bits(min(value, 1.0))
