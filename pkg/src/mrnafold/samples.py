"""Bitstring sample sets: the unit of exchange between samplers, noise,
mitigation, local search, and the CVaR objective.

Bit conventions used everywhere in this package: samples are (m, n) uint8
arrays with one row per distinct bitstring; column q holds qubit q, and
qubit 0 is the leftmost character of the string form. Bit value 0
corresponds to spin +1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptySampleSetError


def bits_from_str(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0")


def bits_to_str(row: np.ndarray) -> str:
    return "".join("1" if b else "0" for b in row)


def _merge_rows(bits: np.ndarray, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge duplicate rows, summing their counts. Rows come back in
    lexicographic order, which fixes the iteration order downstream."""
    if bits.shape[0] == 0:
        return bits, counts
    # pack to bytes so np.unique sorts whole rows at once
    packed = np.packbits(bits, axis=1)
    view = packed.view([("", packed.dtype)] * packed.shape[1]).ravel()
    order = np.argsort(view, kind="stable")
    sorted_bits = bits[order]
    sorted_counts = counts[order]
    sorted_view = view[order]
    boundaries = np.empty(len(sorted_view), dtype=bool)
    boundaries[0] = True
    boundaries[1:] = sorted_view[1:] != sorted_view[:-1]
    starts = np.flatnonzero(boundaries)
    merged_counts = np.add.reduceat(sorted_counts, starts)
    return np.ascontiguousarray(sorted_bits[starts]), merged_counts


@dataclass(frozen=True)
class SampleSet:
    """Distinct bitstrings with multiplicities and, once scored, energies.

    ``energies`` is None until :meth:`scored` is called; ``hamiltonian_id``
    records the fingerprint of the Hamiltonian the energies refer to.
    """

    bits: np.ndarray
    counts: np.ndarray
    energies: np.ndarray | None = None
    hamiltonian_id: str | None = None

    def __post_init__(self):
        if self.bits.ndim != 2:
            raise ValueError("bits must be a 2-d array")
        if self.counts.shape != (self.bits.shape[0],):
            raise ValueError("counts must parallel bits rows")
        if np.any(self.counts < 1):
            raise ValueError("multiplicities must be >= 1")

    @property
    def n_qubits(self) -> int:
        return self.bits.shape[1]

    @property
    def n_shots(self) -> int:
        return int(self.counts.sum())

    @property
    def n_distinct(self) -> int:
        return self.bits.shape[0]

    @classmethod
    def from_bits(cls, bits: np.ndarray, counts: np.ndarray | None = None) -> "SampleSet":
        """Build from raw shot rows (or pre-counted rows), merging duplicates."""
        bits = np.asarray(bits, dtype=np.uint8)
        if counts is None:
            counts = np.ones(bits.shape[0], dtype=np.int64)
        else:
            counts = np.asarray(counts, dtype=np.int64)
        merged_bits, merged_counts = _merge_rows(bits, counts)
        return cls(bits=merged_bits, counts=merged_counts)

    @classmethod
    def from_strings(cls, pairs: list[tuple[str, int]]) -> "SampleSet":
        if not pairs:
            raise EmptySampleSetError("no samples given")
        n = len(pairs[0][0])
        bits = np.stack([bits_from_str(s) for s, _ in pairs]).reshape(-1, n)
        counts = np.array([c for _, c in pairs], dtype=np.int64)
        return cls.from_bits(bits, counts)

    def scored(self, hamiltonian) -> "SampleSet":
        """Return a copy whose energies are evaluated against ``hamiltonian``."""
        energies = hamiltonian.energies(self.bits)
        return SampleSet(
            bits=self.bits,
            counts=self.counts,
            energies=energies,
            hamiltonian_id=hamiltonian.fingerprint(),
        )

    def weighted_energies(self) -> tuple[np.ndarray, np.ndarray]:
        if self.energies is None:
            raise ValueError("sample set has not been scored")
        return self.energies, self.counts

    def mean_hamming_weight(self) -> float:
        weights = self.bits.sum(axis=1)
        return float((weights * self.counts).sum() / self.n_shots)

    def z_expectations(self) -> np.ndarray:
        """Empirical single-qubit <Z_i> = mean of (1 - 2 x_i) over shots."""
        spins = 1.0 - 2.0 * self.bits.astype(np.float64)
        return (spins * self.counts[:, None]).sum(axis=0) / self.n_shots

    def to_jsonl(self) -> str:
        lines = []
        for i in range(self.n_distinct):
            rec = {"bits": bits_to_str(self.bits[i]), "count": int(self.counts[i])}
            if self.energies is not None:
                rec["energy"] = float(self.energies[i])
            lines.append(json.dumps(rec))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "SampleSet":
        bits_rows, counts, energies = [], [], []
        have_energy = True
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            bits_rows.append(bits_from_str(rec["bits"]))
            counts.append(int(rec["count"]))
            if "energy" in rec:
                energies.append(float(rec["energy"]))
            else:
                have_energy = False
        if not bits_rows:
            raise EmptySampleSetError("no records in JSONL input")
        bits = np.stack(bits_rows)
        counts_arr = np.array(counts, dtype=np.int64)
        if have_energy:
            return cls(bits=bits, counts=counts_arr, energies=np.array(energies))
        return cls(bits=bits, counts=counts_arr)
