"""Parameterized diagonal-layer circuits H^n D(theta) H^n: classically
estimated expectations, sinusoidal-fit training, exact small-n sampling
through a fast Hadamard transform, and single-qubit-expectation sample
mitigation.

For an observable selected by mask p, the expectation reduces to an
average over uniform bitstrings y of
    cos( sum_j theta_j [ (-1)^(m_j.(y xor p)) - (-1)^(m_j.y) ] ),
and the bracket is -2 (-1)^(m_j.y) on the gates whose support overlaps p
an odd number of times, zero on the rest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatchError, TooLargeError
from .ising import IsingHamiltonian
from .samples import SampleSet

EXACT_ENUMERATION_CAP = 20
DEFAULT_BITSTRINGS = 2**15
DEFAULT_Z_THRESHOLD = 0.99


@dataclass(frozen=True)
class IqpCircuit:
    """Diagonal-layer gates: rotation exp(-i theta_j Z...Z) on the support
    of each mask; supports have weight 1 or 2."""

    n: int
    supports: tuple[tuple[int, ...], ...]
    thetas: np.ndarray
    layout: dict | None = None

    def __post_init__(self):
        th = np.asarray(self.thetas, dtype=np.float64)
        if th.shape != (len(self.supports),):
            raise ValueError("one angle per gate required")
        if not np.all(np.isfinite(th)):
            raise ValueError("angles must be finite")
        sup = []
        for s in self.supports:
            s = tuple(sorted(int(q) for q in s))
            if len(s) not in (1, 2) or len(set(s)) != len(s):
                raise ValueError(f"gate support {s} must have one or two distinct qubits")
            if not all(0 <= q < self.n for q in s):
                raise ValueError(f"gate support {s} out of range for n={self.n}")
            sup.append(s)
        object.__setattr__(self, "supports", tuple(sup))
        object.__setattr__(self, "thetas", th)

    @property
    def n_gates(self) -> int:
        return len(self.supports)

    def with_thetas(self, thetas) -> "IqpCircuit":
        return IqpCircuit(self.n, self.supports, np.asarray(thetas, dtype=np.float64), self.layout)

    def gates_touching(self) -> list[list[int]]:
        touch: list[list[int]] = [[] for _ in range(self.n)]
        for j, s in enumerate(self.supports):
            for q in s:
                touch[q].append(j)
        return touch

    def to_json(self) -> str:
        gates = []
        for s, t in zip(self.supports, self.thetas):
            mask = "".join("1" if q in s else "0" for q in range(self.n))
            gates.append({"mask": mask, "theta": float(t)})
        return json.dumps({"n": self.n, "gates": gates, "layout": self.layout}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "IqpCircuit":
        doc = json.loads(text)
        supports = []
        thetas = []
        for g in doc["gates"]:
            supports.append(tuple(q for q, c in enumerate(g["mask"]) if c == "1"))
            thetas.append(float(g["theta"]))
        return cls(int(doc["n"]), tuple(supports), np.array(thetas), doc.get("layout"))


def build_circuit(
    n: int,
    edges: list[tuple[int, int]],
    include_singles: bool = True,
    thetas=None,
    layout: dict | None = None,
) -> IqpCircuit:
    """Gate set from a coupling graph: one two-qubit rotation per edge,
    plus (by default) one single-qubit rotation per qubit."""
    supports: list[tuple[int, ...]] = []
    if include_singles:
        supports.extend((q,) for q in range(n))
    supports.extend(tuple(sorted((int(a), int(b)))) for a, b in edges)
    if thetas is None:
        thetas = np.zeros(len(supports))
    return IqpCircuit(n, tuple(supports), np.asarray(thetas, dtype=np.float64), layout)


def heavy_hex_tube_layout(distance: int) -> list[tuple[int, int]]:
    """Heavy-hex rows closed into rings: ``distance`` rows of 4*distance
    line qubits each, wrapped around, joined by bridge qubits every four
    columns with alternating offsets. Every vertex has degree <= 3."""
    if distance < 2:
        raise ValueError("distance must be >= 2")
    rows, width = distance, 4 * distance
    edges: set[tuple[int, int]] = set()

    def row_qubit(r: int, c: int) -> int:
        return r * width + c % width

    for r in range(rows):
        for c in range(width):
            edges.add(_sorted_edge(row_qubit(r, c), row_qubit(r, c + 1)))
    next_id = rows * width
    for r in range(rows - 1):
        offset = 2 * (r % 2)
        for c in range(offset, width, 4):
            bridge = next_id
            next_id += 1
            edges.add(_sorted_edge(row_qubit(r, c), bridge))
            edges.add(_sorted_edge(bridge, row_qubit(r + 1, c)))
    return sorted(edges)


def _sorted_edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def layout_qubit_count(edges: list[tuple[int, int]]) -> int:
    return 1 + max(max(a, b) for a, b in edges)


def _flip_set(circuit: IqpCircuit, p_mask) -> list[int]:
    """Gates whose support overlaps the observable mask an odd number of
    times; only these contribute to the phase difference."""
    p = np.asarray(p_mask, dtype=np.uint8)
    if p.shape != (circuit.n,):
        raise LengthMismatchError(f"observable mask has {p.shape} bits for n={circuit.n}")
    out = []
    for j, s in enumerate(circuit.supports):
        if sum(int(p[q]) for q in s) % 2 == 1:
            out.append(j)
    return out


def _exact_signs(n: int, support: tuple[int, ...]) -> np.ndarray:
    """(-1)^(m.y) over all 2^n basis states; qubit 0 is the most
    significant bit of the state index."""
    y = np.arange(1 << n, dtype=np.int64)
    parity = np.zeros(1 << n, dtype=np.int64)
    for q in support:
        parity ^= (y >> (n - 1 - q)) & 1
    return 1.0 - 2.0 * parity.astype(np.float64)


def exact_expectation(circuit: IqpCircuit, p_mask) -> float:
    """Exact observable expectation by full enumeration (n <= 20)."""
    if circuit.n > EXACT_ENUMERATION_CAP:
        raise TooLargeError(circuit.n, EXACT_ENUMERATION_CAP)
    flips = _flip_set(circuit, p_mask)
    if not flips:
        return 1.0
    phase = np.zeros(1 << circuit.n)
    for j in flips:
        phase += circuit.thetas[j] * _exact_signs(circuit.n, circuit.supports[j])
    return float(np.mean(np.cos(2.0 * phase)))


def _sample_signs(bits: np.ndarray, support: tuple[int, ...]) -> np.ndarray:
    parity = bits[:, support[0]].astype(np.int64)
    for q in support[1:]:
        parity = parity ^ bits[:, q]
    return 1.0 - 2.0 * parity.astype(np.float64)


def estimate_expectation(circuit: IqpCircuit, p_mask, n_bitstrings: int, rng_seed) -> float:
    """Monte-Carlo version of :func:`exact_expectation`: the same cosine
    averaged over uniform bitstrings; unbiased at any sample count."""
    if n_bitstrings < 1:
        raise ValueError("n_bitstrings must be >= 1")
    flips = _flip_set(circuit, p_mask)
    if not flips:
        return 1.0
    rng = np.random.default_rng(rng_seed)
    bits = rng.integers(0, 2, size=(n_bitstrings, circuit.n), dtype=np.uint8)
    phase = np.zeros(n_bitstrings)
    for j in flips:
        phase += circuit.thetas[j] * _sample_signs(bits, circuit.supports[j])
    return float(np.mean(np.cos(2.0 * phase)))


def _term_masks(H: IsingHamiltonian) -> list[tuple[list[int], float]]:
    terms: list[tuple[list[int], float]] = []
    for i in range(H.n):
        if H.h[i] != 0.0:
            terms.append(([i], float(H.h[i])))
    for (i, j), v in H.J.items():
        if v != 0.0:
            terms.append(([i, j], float(v)))
    return terms


def _term_flip_set(touch: list[list[int]], qubits: list[int]) -> list[int]:
    if len(qubits) == 1:
        return list(touch[qubits[0]])
    a, b = (set(touch[qubits[0]]), set(touch[qubits[1]]))
    return sorted(a ^ b)


def hamiltonian_expectation(
    circuit: IqpCircuit,
    H: IsingHamiltonian,
    n_bitstrings: int = DEFAULT_BITSTRINGS,
    rng_seed=None,
) -> float:
    """<H> estimated term by term with one shared batch of uniform
    bitstrings, which both saves draws and correlates the term errors."""
    if H.n != circuit.n:
        raise LengthMismatchError(f"Hamiltonian on {H.n} qubits, circuit on {circuit.n}")
    rng = np.random.default_rng(rng_seed)
    bits = rng.integers(0, 2, size=(n_bitstrings, circuit.n), dtype=np.uint8)
    touch = circuit.gates_touching()
    sign_cache: dict[int, np.ndarray] = {}

    def signs(j: int) -> np.ndarray:
        if j not in sign_cache:
            sign_cache[j] = _sample_signs(bits, circuit.supports[j])
        return sign_cache[j]

    total = H.offset
    for qubits, weight in _term_masks(H):
        flips = _term_flip_set(touch, qubits)
        if not flips:
            total += weight
            continue
        phase = np.zeros(n_bitstrings)
        for j in flips:
            phase += circuit.thetas[j] * signs(j)
        total += weight * float(np.mean(np.cos(2.0 * phase)))
    return float(total)


def hamiltonian_expectation_exact(circuit: IqpCircuit, H: IsingHamiltonian) -> float:
    """<H> with every term evaluated by full enumeration (n <= 20)."""
    if H.n != circuit.n:
        raise LengthMismatchError(f"Hamiltonian on {H.n} qubits, circuit on {circuit.n}")
    if circuit.n > EXACT_ENUMERATION_CAP:
        raise TooLargeError(circuit.n, EXACT_ENUMERATION_CAP)
    touch = circuit.gates_touching()
    sign_cache: dict[int, np.ndarray] = {}

    def signs(j: int) -> np.ndarray:
        if j not in sign_cache:
            sign_cache[j] = _exact_signs(circuit.n, circuit.supports[j])
        return sign_cache[j]

    total = H.offset
    for qubits, weight in _term_masks(H):
        flips = _term_flip_set(touch, qubits)
        if not flips:
            total += weight
            continue
        phase = np.zeros(1 << circuit.n)
        for j in flips:
            phase += circuit.thetas[j] * signs(j)
        total += weight * float(np.mean(np.cos(2.0 * phase)))
    return float(total)


def exact_singles(circuit: IqpCircuit) -> np.ndarray:
    """Exact <Z_i> for every qubit; the classical input to mitigation."""
    out = np.zeros(circuit.n)
    for q in range(circuit.n):
        mask = np.zeros(circuit.n, dtype=np.uint8)
        mask[q] = 1
        out[q] = exact_expectation(circuit, mask)
    return out


def train_iqp(
    H: IsingHamiltonian,
    circuit: IqpCircuit,
    n_iter: int,
    rng_seed,
    exact: bool = False,
    n_bitstrings: int = DEFAULT_BITSTRINGS,
) -> tuple[np.ndarray, list[float]]:
    """Train the circuit angles against <H> with sequential single-angle
    sinusoidal fits (rotation period pi for these full-weight generators).

    Angles start uniform over [0, 2pi); each iteration updates one gate in
    a randomized sweep order and records the objective after the update.
    Returns the optimized angles and the per-iteration objective trace.
    """
    from .vqa import nft_fit  # local import; vqa owns the optimizer

    ss = np.random.SeedSequence(rng_seed)
    s_init, s_order, s_eval = ss.spawn(3)
    rng_order = np.random.default_rng(s_order)
    rng_eval = np.random.default_rng(s_eval)
    thetas = np.random.default_rng(s_init).uniform(0.0, 2.0 * math.pi, size=circuit.n_gates)

    if exact:
        def evaluator(th: np.ndarray) -> float:
            return hamiltonian_expectation_exact(circuit.with_thetas(th), H)
    else:
        def evaluator(th: np.ndarray) -> float:
            return hamiltonian_expectation(circuit.with_thetas(th), H, n_bitstrings, rng_eval)

    trace = [evaluator(thetas)]
    done = 0
    while done < n_iter:
        for idx in rng_order.permutation(circuit.n_gates):
            if done >= n_iter:
                break
            thetas, _ = nft_fit(evaluator, thetas, int(idx), period=math.pi)
            trace.append(evaluator(thetas))
            done += 1
    return thetas, trace


def exact_sample(circuit: IqpCircuit, n_shots: int, rng_seed) -> SampleSet:
    """Sample the circuit's output distribution exactly (n <= 20): build
    the diagonal phases, Hadamard-transform them with an in-place
    butterfly, and draw from the resulting probabilities."""
    n = circuit.n
    if n > EXACT_ENUMERATION_CAP:
        raise TooLargeError(n, EXACT_ENUMERATION_CAP)
    phase = np.zeros(1 << n)
    for j in range(circuit.n_gates):
        phase -= circuit.thetas[j] * _exact_signs(n, circuit.supports[j])
    amps = np.exp(1j * phase)
    amps = _fwht(amps) / (1 << n)
    probs = np.abs(amps) ** 2
    probs /= probs.sum()
    rng = np.random.default_rng(rng_seed)
    counts = rng.multinomial(int(n_shots), probs)
    hit = np.flatnonzero(counts)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    bits = ((hit[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    return SampleSet(bits=bits, counts=counts[hit].astype(np.int64))


def _fwht(vec: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard butterfly."""
    v = vec.copy()
    size = v.shape[0]
    h = 1
    while h < size:
        v = v.reshape(-1, 2 * h)
        a = v[:, :h].copy()
        b = v[:, h:]
        v[:, :h] = a + b
        v[:, h:] = a - b
        v = v.reshape(-1)
        h *= 2
    return v


def probabilities(circuit: IqpCircuit) -> np.ndarray:
    """Exact output distribution over all basis states (n <= 20)."""
    n = circuit.n
    if n > EXACT_ENUMERATION_CAP:
        raise TooLargeError(n, EXACT_ENUMERATION_CAP)
    phase = np.zeros(1 << n)
    for j in range(circuit.n_gates):
        phase -= circuit.thetas[j] * _exact_signs(n, circuit.supports[j])
    amps = _fwht(np.exp(1j * phase)) / (1 << n)
    probs = np.abs(amps) ** 2
    return probs / probs.sum()


def mitigate_samples(samples: SampleSet, singles, z_th: float = DEFAULT_Z_THRESHOLD) -> SampleSet:
    """Overwrite bits whose ideal |<Z_i>| exceeds the threshold: such
    qubits are pinned to the sign-implied value in every shot."""
    singles = np.asarray(singles, dtype=np.float64)
    if singles.shape != (samples.n_qubits,):
        raise LengthMismatchError(
            f"got {singles.shape} expectations for {samples.n_qubits} qubits"
        )
    bits = samples.bits.copy()
    forced = np.abs(singles) > z_th
    for q in np.flatnonzero(forced):
        bits[:, q] = 0 if singles[q] > 0 else 1
    return SampleSet.from_bits(bits, samples.counts.copy())
