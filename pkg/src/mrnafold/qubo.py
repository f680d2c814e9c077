"""From nucleotide sequences to quadratic binary objectives.

Decision variables are quartets: two consecutive base pairs (i, j) and
(i+1, j-1), indexed by 1-based sequence positions. The objective rewards
stacked quartets, penalizes quartets whose outer pair is U-A, and makes
any crossing or base-sharing selection prohibitively expensive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .energies import BASES, VALID_PAIRS, EnergyTable
from .errors import (
    EmptyProblemError,
    EmptySequenceError,
    IllegalCharacterError,
    InvalidPenaltyError,
    KappaTooLargeError,
    LengthMismatchError,
)
from .ising import IsingHamiltonian

DEFAULT_MIN_LOOP = 3
KAPPA_ENUMERATION_CAP = 20  # free eliminated variables, i.e. 2^20 states


@dataclass(frozen=True)
class Sequence:
    """An RNA sequence; positions are 1-indexed throughout."""

    bases: str

    def __len__(self) -> int:
        return len(self.bases)

    def base(self, position: int) -> str:
        return self.bases[position - 1]


def parse_sequence(text: str) -> Sequence:
    """Normalize raw text to an RNA sequence. DNA input (T) is rejected."""
    cleaned = text.strip().upper()
    if not cleaned:
        raise EmptySequenceError("sequence is empty")
    for pos, char in enumerate(cleaned, start=1):
        if char not in BASES:
            raise IllegalCharacterError(pos, char)
    return Sequence(cleaned)


@dataclass(frozen=True)
class Quartet:
    """Stacked pair (i, j) over (i+1, j-1) with its tabulated free energy.

    ``outer_bases`` records the bases at (i, j) so downstream terms (the
    U-A end penalty) need no access to the sequence itself.
    """

    i: int
    j: int
    energy: float
    outer_bases: tuple[str, str] = ("", "")

    @property
    def outer(self) -> tuple[int, int]:
        return (self.i, self.j)

    @property
    def inner(self) -> tuple[int, int]:
        return (self.i + 1, self.j - 1)

    def pairs(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return (self.outer, self.inner)

    def positions(self) -> frozenset[int]:
        return frozenset((self.i, self.i + 1, self.j - 1, self.j))


def is_valid_pair(a: str, b: str) -> bool:
    return (a, b) in VALID_PAIRS


def enumerate_quartets(seq: Sequence, table: EnergyTable, l_min: int = DEFAULT_MIN_LOOP) -> list[Quartet]:
    """All (i, j, i+1, j-1) tuples whose two pairs are valid and whose span
    satisfies j - i > l_min, ordered by (i, j)."""
    if l_min < 0:
        raise ValueError("l_min must be >= 0")
    n = len(seq)
    out = []
    for i in range(1, n + 1):
        for j in range(i + max(l_min + 1, 3), n + 1):
            # inner pair needs j - 1 > i + 1, i.e. j - i > 2
            if is_valid_pair(seq.base(i), seq.base(j)) and is_valid_pair(seq.base(i + 1), seq.base(j - 1)):
                e = table.stack_energy(seq.base(i), seq.base(i + 1), seq.base(j), seq.base(j - 1))
                out.append(Quartet(i, j, e, (seq.base(i), seq.base(j))))
    return out


def pairs_cross(p1: tuple[int, int], p2: tuple[int, int]) -> bool:
    a, b = p1
    c, d = p2
    return (a < c < b < d) or (c < a < d < b)


def quartets_cross(q1: Quartet, q2: Quartet) -> bool:
    return any(pairs_cross(u, v) for u in q1.pairs() for v in q2.pairs())


def quartets_stacked(q1: Quartet, q2: Quartet) -> bool:
    """True when one quartet sits directly inside the other, outer pair on
    the other's inner pair."""
    return q2.outer == q1.inner or q1.outer == q2.inner


def quartets_share_base(q1: Quartet, q2: Quartet) -> bool:
    return bool(q1.positions() & q2.positions())


@dataclass(frozen=True)
class QuartetProvenance:
    """Audit record of the sets and coefficients behind a built objective."""

    quartets: tuple[Quartet, ...]
    r: float
    p: float
    t: float
    stacked_pairs: frozenset[tuple[int, int]]
    conflict_pairs: frozenset[tuple[int, int]]
    ua_vars: frozenset[int]


@dataclass(frozen=True)
class QuboProblem:
    """min sum_i linear_i x_i + sum_{i<j} quadratic_ij x_i x_j + offset over x in {0,1}^n."""

    n_vars: int
    linear: dict[int, float]
    quadratic: dict[tuple[int, int], float]
    offset: float = 0.0
    provenance: QuartetProvenance | None = None

    def __post_init__(self):
        lin = {int(i): float(v) for i, v in self.linear.items() if v != 0.0}
        quad: dict[tuple[int, int], float] = {}
        for (i, j), v in self.quadratic.items():
            if i == j:
                raise ValueError("quadratic keys must pair distinct variables")
            a, b = (i, j) if i < j else (j, i)
            quad[(a, b)] = quad.get((a, b), 0.0) + float(v)
        quad = {k: v for k, v in sorted(quad.items()) if v != 0.0}
        for idx in lin:
            if not 0 <= idx < self.n_vars:
                raise ValueError(f"linear index {idx} out of range")
        for i, j in quad:
            if not (0 <= i < self.n_vars and 0 <= j < self.n_vars):
                raise ValueError(f"quadratic key ({i},{j}) out of range")
        object.__setattr__(self, "linear", dict(sorted(lin.items())))
        object.__setattr__(self, "quadratic", quad)

    def value(self, bits) -> float:
        if isinstance(bits, str):
            bits = [1 if c == "1" else 0 for c in bits]
        bits = np.asarray(bits, dtype=np.float64)
        if bits.shape != (self.n_vars,):
            raise LengthMismatchError(f"got {bits.shape} bits for {self.n_vars} variables")
        total = self.offset
        for i, v in self.linear.items():
            total += v * bits[i]
        for (i, j), v in self.quadratic.items():
            total += v * bits[i] * bits[j]
        return total

    def neighbors(self) -> dict[int, list[tuple[int, float]]]:
        adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(self.n_vars)}
        for (i, j), v in self.quadratic.items():
            adj[i].append((j, v))
            adj[j].append((i, v))
        return adj

    def to_json(self) -> str:
        doc = {
            "n_vars": self.n_vars,
            "linear": {str(i): v for i, v in self.linear.items()},
            "quadratic": {f"{i},{j}": v for (i, j), v in self.quadratic.items()},
            "offset": self.offset,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "QuboProblem":
        doc = json.loads(text)
        linear = {int(k): float(v) for k, v in doc.get("linear", {}).items()}
        quadratic = {}
        for k, v in doc.get("quadratic", {}).items():
            i, j = (int(t) for t in k.split(","))
            quadratic[(i, j)] = float(v)
        return cls(
            n_vars=int(doc["n_vars"]),
            linear=linear,
            quadratic=quadratic,
            offset=float(doc.get("offset", 0.0)),
        )


def default_crossing_penalty(quartets: list[Quartet], r: float) -> float:
    """Penalty large enough that one violated constraint outweighs every
    attainable reward: ceil(2 * (sum |e_i| + |r| * #stackable pairs))."""
    outer_index = {q.outer: k for k, q in enumerate(quartets)}
    n_stacks = sum(1 for q in quartets if q.inner in outer_index)
    raw = 2.0 * (sum(abs(q.energy) for q in quartets) + abs(r) * n_stacks)
    return max(1.0, float(math.ceil(raw)))


def assemble_qubo(quartets: list[Quartet], r: float, p: float, t: float) -> QuboProblem:
    """Build the quartet objective: individual free energies, stacking
    reward r on directly-nested quartets, penalty p * q_i (1 - q_j) against
    every U-A-ended quartet q_j, and penalty t on each conflicting pair
    (crossing, or sharing a base without being stacked)."""
    if t <= 0:
        raise InvalidPenaltyError(f"crossing penalty must be > 0, got {t}")
    if not quartets:
        raise EmptyProblemError("no quartets: the objective has no variables")
    n = len(quartets)
    linear: dict[int, float] = {k: q.energy for k, q in enumerate(quartets)}
    quadratic: dict[tuple[int, int], float] = {}

    def add_quad(a: int, b: int, v: float) -> None:
        key = (a, b) if a < b else (b, a)
        quadratic[key] = quadratic.get(key, 0.0) + v

    outer_index = {q.outer: k for k, q in enumerate(quartets)}
    stacked_pairs = set()
    for a, q in enumerate(quartets):
        b = outer_index.get(q.inner)
        if b is not None:
            add_quad(a, b, r)
            stacked_pairs.add((min(a, b), max(a, b)))

    ua_vars = frozenset(k for k, q in enumerate(quartets) if q.outer_bases == ("U", "A"))
    for j in sorted(ua_vars):
        for i in range(n):
            linear[i] = linear.get(i, 0.0) + p
            if i == j:
                linear[i] -= p
            else:
                add_quad(i, j, -p)

    conflict_pairs = set()
    for a in range(n):
        for b in range(a + 1, n):
            qa, qb = quartets[a], quartets[b]
            if quartets_cross(qa, qb) or (
                quartets_share_base(qa, qb) and not quartets_stacked(qa, qb)
            ):
                conflict_pairs.add((a, b))
                add_quad(a, b, t)

    prov = QuartetProvenance(
        quartets=tuple(quartets),
        r=r,
        p=p,
        t=t,
        stacked_pairs=frozenset(stacked_pairs),
        conflict_pairs=frozenset(conflict_pairs),
        ua_vars=ua_vars,
    )
    return QuboProblem(n_vars=n, linear=linear, quadratic=quadratic, offset=0.0, provenance=prov)


def qubo_to_ising(q: QuboProblem) -> IsingHamiltonian:
    """Substitute x_i = (1 - s_i) / 2. The resulting spin energies agree
    with the binary objective exactly, offset included."""
    n = q.n_vars
    h = np.zeros(n)
    J: dict[tuple[int, int], float] = {}
    offset = q.offset
    for i, a in q.linear.items():
        h[i] -= a / 2.0
        offset += a / 2.0
    for (i, j), b in q.quadratic.items():
        J[(i, j)] = J.get((i, j), 0.0) + b / 4.0
        h[i] -= b / 4.0
        h[j] -= b / 4.0
        offset += b / 4.0
    return IsingHamiltonian(n=n, h=h, J=J, offset=offset)


@dataclass(frozen=True)
class ReductionResult:
    """Outcome of eliminating the all-nonnegative-coupling variable set."""

    reduced: QuboProblem
    kappa: tuple[int, ...]
    back_map: tuple[int, ...]


def reduce_qubo(q: QuboProblem) -> ReductionResult:
    """Drop every variable whose quadratic coefficients are all >= 0
    (vacuously true for uncoupled variables) and keep only the terms among
    the surviving variables."""
    adj = q.neighbors()
    kappa = tuple(k for k in range(q.n_vars) if all(v >= 0 for _, v in adj[k]))
    in_kappa = set(kappa)
    keep = tuple(i for i in range(q.n_vars) if i not in in_kappa)
    new_index = {old: new for new, old in enumerate(keep)}
    linear = {new_index[i]: v for i, v in q.linear.items() if i not in in_kappa}
    quadratic = {
        (new_index[i], new_index[j]): v
        for (i, j), v in q.quadratic.items()
        if i not in in_kappa and j not in in_kappa
    }
    reduced = QuboProblem(n_vars=len(keep), linear=linear, quadratic=quadratic, offset=q.offset)
    return ReductionResult(reduced=reduced, kappa=kappa, back_map=keep)


def recombine_solution(res: ReductionResult, x_red, original: QuboProblem):
    """Extend a reduced-problem solution to the full variable set.

    Eliminated variables adjacent to a selected survivor are forced to 0;
    the rest are assigned by exact enumeration of their residual
    subproblem (capped at 2^20 states, lexicographic tie-break).
    """
    as_str = isinstance(x_red, str)
    if as_str:
        red_bits = np.array([1 if c == "1" else 0 for c in x_red], dtype=np.uint8)
    else:
        red_bits = np.asarray(x_red, dtype=np.uint8)
    if red_bits.shape != (res.reduced.n_vars,):
        raise LengthMismatchError(
            f"reduced solution has {red_bits.shape[0]} bits, expected {res.reduced.n_vars}"
        )
    full = np.zeros(original.n_vars, dtype=np.uint8)
    for new_i, old_i in enumerate(res.back_map):
        full[old_i] = red_bits[new_i]

    in_kappa = set(res.kappa)
    adj = original.neighbors()
    free: list[int] = []
    for k in res.kappa:
        blocked = any(j not in in_kappa and full[j] == 1 for j, _ in adj[k])
        if not blocked:
            free.append(k)

    if len(free) > KAPPA_ENUMERATION_CAP:
        raise KappaTooLargeError(len(free), KAPPA_ENUMERATION_CAP)
    if free:
        full[free] = _enumerate_subqubo(original, free)

    if as_str:
        return "".join("1" if b else "0" for b in full)
    return full


def _enumerate_subqubo(q: QuboProblem, variables: list[int]) -> np.ndarray:
    """Exact minimization of the objective restricted to ``variables``
    (all others held at 0); returns the minimizing assignment."""
    f = len(variables)
    pos = {v: k for k, v in enumerate(variables)}
    size = 1 << f
    codes = np.arange(size, dtype=np.int64)
    values = np.zeros(size, dtype=np.float64)
    var_set = set(variables)
    cols: dict[int, np.ndarray] = {}

    def col(v: int) -> np.ndarray:
        k = pos[v]
        if k not in cols:
            cols[k] = ((codes >> (f - 1 - k)) & 1).astype(np.float64)
        return cols[k]

    for v in variables:
        c = q.linear.get(v, 0.0)
        if c:
            values += c * col(v)
    for (i, j), c in q.quadratic.items():
        if c and i in var_set and j in var_set:
            values += c * col(i) * col(j)
    winner = int(np.flatnonzero(values == values.min())[0])
    bits = (winner >> np.arange(f - 1, -1, -1)) & 1
    return bits.astype(np.uint8)
