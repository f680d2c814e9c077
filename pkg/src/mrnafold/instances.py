"""Seeded problem generation and exact references for experiments.

``solve_feasible_exact`` exploits the dominating conflict penalty: when t
is at least as large as every attainable reward, no conflicting selection
can beat the best conflict-free one, so enumerating independent sets of
the conflict graph yields the exact optimum at any variable count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energies import BASES, EnergyTable
from .errors import MrnafoldError
from .ising import IsingHamiltonian, brute_force_solve
from .qubo import (
    QuboProblem,
    Sequence,
    assemble_qubo,
    default_crossing_penalty,
    enumerate_quartets,
    qubo_to_ising,
)

_CONTEXTS = sorted(
    f"{x}{y}/{w}{z}"
    for x, w in (("A", "U"), ("U", "A"), ("C", "G"), ("G", "C"), ("G", "U"), ("U", "G"))
    for y, z in (("A", "U"), ("U", "A"), ("C", "G"), ("G", "C"), ("G", "U"), ("U", "G"))
)


def synthetic_energy_table() -> EnergyTable:
    """Self-contained stand-in for empirical stacking data: every valid
    context gets a distinct negative value from a fixed formula, so tests
    never depend on external data provenance."""
    values = {ctx: -(1.0 + ((7 * k) % 12) / 10.0) for k, ctx in enumerate(_CONTEXTS)}
    return EnergyTable(values)


def random_sequence(rng, length: int) -> str:
    rng = np.random.default_rng(rng)
    return "".join(rng.choice(list(BASES), size=length))


@dataclass(frozen=True)
class ProblemInstance:
    sequence: Sequence
    qubo: QuboProblem
    ising: IsingHamiltonian


def generate_instance(
    seed,
    min_vars: int,
    max_vars: int,
    min_len: int = 8,
    max_len: int = 36,
    table: EnergyTable | None = None,
    r: float = -1.0,
    p: float = 0.5,
    l_min: int = 3,
    max_tries: int = 10_000,
) -> ProblemInstance:
    """Draw random sequences until one yields between ``min_vars`` and
    ``max_vars`` quartet variables; penalties follow the dominating-t rule."""
    rng = np.random.default_rng(seed)
    table = table or synthetic_energy_table()
    for _ in range(max_tries):
        length = int(rng.integers(min_len, max_len + 1))
        seq = Sequence(random_sequence(rng, length))
        quartets = enumerate_quartets(seq, table, l_min)
        if not (min_vars <= len(quartets) <= max_vars):
            continue
        t = default_crossing_penalty(quartets, r)
        qubo = assemble_qubo(quartets, r=r, p=p, t=t)
        return ProblemInstance(sequence=seq, qubo=qubo, ising=qubo_to_ising(qubo))
    raise MrnafoldError(
        f"no instance with {min_vars}..{max_vars} variables found in {max_tries} tries"
    )


def solve_feasible_exact(qubo: QuboProblem) -> tuple[np.ndarray, float]:
    """Exact optimum of a quartet objective by enumerating independent sets
    of its conflict graph. Requires provenance and a penalty that dominates
    the total attainable reward; raises otherwise."""
    prov = qubo.provenance
    if prov is None:
        raise MrnafoldError("feasible enumeration needs quartet provenance")
    reward_bound = sum(max(0.0, -q.energy) for q in prov.quartets)
    reward_bound += max(0.0, -prov.r) * len(prov.stacked_pairs)
    if prov.t < reward_bound:
        raise MrnafoldError(
            f"conflict penalty {prov.t} does not dominate attainable reward {reward_bound}"
        )
    n = qubo.n_vars
    conflict = [0] * n
    for a, b in prov.conflict_pairs:
        conflict[a] |= 1 << b
        conflict[b] |= 1 << a
    quad = qubo.quadratic
    linear = qubo.linear

    best_value = qubo.offset  # empty selection
    best_set: list[int] = []
    stack: list[int] = []
    visited = 0
    node_cap = 20_000_000

    def extend(candidates: int, value: float) -> None:
        nonlocal best_value, best_set, visited
        rest = candidates
        while rest:
            low = rest & -rest
            v = low.bit_length() - 1
            rest ^= low
            visited += 1
            if visited > node_cap:
                raise MrnafoldError(
                    "conflict graph too sparse for independent-set enumeration"
                )
            gain = linear.get(v, 0.0)
            for u in stack:
                key = (u, v) if u < v else (v, u)
                gain += quad.get(key, 0.0)
            new_value = value + gain
            stack.append(v)
            if new_value < best_value:
                best_value = new_value
                best_set = stack.copy()
            # only higher-numbered, non-conflicting candidates
            extend(rest & ~conflict[v], new_value)
            stack.pop()

    extend((1 << n) - 1, qubo.offset)
    bits = np.zeros(n, dtype=np.uint8)
    bits[best_set] = 1
    return bits, float(best_value)


def reference_optimum(qubo: QuboProblem, cap: int = 24) -> tuple[np.ndarray, float]:
    """Best available exact reference: full enumeration when small enough,
    otherwise the independent-set oracle (needs provenance)."""
    if qubo.n_vars <= cap:
        bits_str, energy = brute_force_solve(qubo_to_ising(qubo))
        bits = np.frombuffer(bits_str.encode("ascii"), dtype=np.uint8) - ord("0")
        return bits.copy(), energy
    return solve_feasible_exact(qubo)
