"""Spin-form Hamiltonians: energy evaluation, gauge transforms, the CVaR
statistic, single-sweep local search, and the exact enumeration oracle.

Spin convention, fixed globally: bit value 0 maps to spin +1, so
s_i = 1 - 2 x_i.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadAlphaError,
    EmptySampleSetError,
    LengthMismatchError,
    TooLargeError,
)
from .samples import SampleSet

BRUTE_FORCE_CAP = 24


@dataclass(frozen=True)
class IsingHamiltonian:
    """Diagonal spin Hamiltonian: sum_i h_i s_i + sum_{i<j} J_ij s_i s_j + offset."""

    n: int
    h: np.ndarray
    J: dict[tuple[int, int], float]
    offset: float = 0.0

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64)
        if h.shape != (self.n,):
            raise ValueError(f"h must have shape ({self.n},)")
        object.__setattr__(self, "h", h)
        norm: dict[tuple[int, int], float] = {}
        for (i, j), v in self.J.items():
            if i == j:
                raise ValueError("J keys must couple distinct spins")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError("J key index out of range")
            a, b = (i, j) if i < j else (j, i)
            norm[(a, b)] = norm.get((a, b), 0.0) + float(v)
        object.__setattr__(self, "J", dict(sorted(norm.items())))
        if self.J:
            keys = np.array(list(self.J.keys()), dtype=np.int64)
            vals = np.array(list(self.J.values()), dtype=np.float64)
            arrays = (keys[:, 0], keys[:, 1], vals)
        else:
            z = np.zeros(0, dtype=np.int64)
            arrays = (z, z.copy(), np.zeros(0, dtype=np.float64))
        object.__setattr__(self, "_couplings", arrays)

    def coupling_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._couplings

    def energies(self, bits: np.ndarray) -> np.ndarray:
        """Vectorized energy of each row of ``bits``."""
        bits = np.asarray(bits)
        if bits.ndim == 1:
            bits = bits[None, :]
        if bits.shape[1] != self.n:
            raise LengthMismatchError(f"bitstrings have {bits.shape[1]} bits, expected {self.n}")
        s = 1.0 - 2.0 * bits.astype(np.float64)
        e = s @ self.h
        ii, jj, vv = self.coupling_arrays()
        if len(vv):
            e = e + (s[:, ii] * s[:, jj]) @ vv
        return e + self.offset

    def fingerprint(self) -> str:
        digest = hashlib.blake2b(digest_size=8)
        digest.update(np.int64(self.n).tobytes())
        digest.update(self.h.tobytes())
        ii, jj, vv = self.coupling_arrays()
        digest.update(ii.tobytes())
        digest.update(jj.tobytes())
        digest.update(vv.tobytes())
        digest.update(np.float64(self.offset).tobytes())
        return digest.hexdigest()

    def adjacency(self) -> list[list[tuple[int, float]]]:
        adj: list[list[tuple[int, float]]] = [[] for _ in range(self.n)]
        for (i, j), v in self.J.items():
            adj[i].append((j, v))
            adj[j].append((i, v))
        return adj

    def to_json(self) -> str:
        linear = {str(i): float(v) for i, v in enumerate(self.h) if v != 0.0}
        quadratic = {f"{i},{j}": float(v) for (i, j), v in self.J.items()}
        doc = {"n_vars": self.n, "linear": linear, "quadratic": quadratic, "offset": self.offset}
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "IsingHamiltonian":
        doc = json.loads(text)
        n = int(doc["n_vars"])
        h = np.zeros(n)
        for k, v in doc.get("linear", {}).items():
            h[int(k)] = float(v)
        J = {}
        for k, v in doc.get("quadratic", {}).items():
            i, j = (int(t) for t in k.split(","))
            J[(i, j)] = float(v)
        return cls(n=n, h=h, J=J, offset=float(doc.get("offset", 0.0)))


@dataclass(frozen=True)
class GaugeMask:
    """Bit-flip pattern applied to a Hamiltonian's eigenstate labels."""

    m: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "m", np.asarray(self.m, dtype=np.uint8))

    @classmethod
    def zeros(cls, n: int) -> "GaugeMask":
        return cls(np.zeros(n, dtype=np.uint8))

    @property
    def n(self) -> int:
        return len(self.m)

    def is_identity(self) -> bool:
        return not self.m.any()


def energy(H: IsingHamiltonian, x) -> float:
    """Energy of a single bitstring (str or array of 0/1)."""
    if isinstance(x, str):
        bits = np.frombuffer(x.encode("ascii"), dtype=np.uint8) - ord("0")
    else:
        bits = np.asarray(x, dtype=np.uint8)
    if bits.shape != (H.n,):
        raise LengthMismatchError(f"got {bits.shape[0]} bits for {H.n} spins")
    s = 1.0 - 2.0 * bits.astype(np.float64)
    total = 0.0
    for i in range(H.n):
        total += H.h[i] * s[i]
    for (i, j), v in H.J.items():
        total += v * s[i] * s[j]
    return total + H.offset


def gauge_transform(H: IsingHamiltonian, mask: GaugeMask) -> IsingHamiltonian:
    """Conjugate the diagonal Hamiltonian by bit flips on the masked qubits.

    Flips the sign of h_i where m_i = 1 and of J_ij where exactly one of
    m_i, m_j is 1; the spectrum is unchanged and
    energy(H', x) == energy(H, x XOR m) holds exactly.
    """
    if mask.n != H.n:
        raise LengthMismatchError(f"mask length {mask.n} != {H.n}")
    signs = 1.0 - 2.0 * mask.m.astype(np.float64)
    h_new = H.h * signs
    J_new = {(i, j): v * signs[i] * signs[j] for (i, j), v in H.J.items()}
    return IsingHamiltonian(n=H.n, h=h_new, J=J_new, offset=H.offset)


def cvar(energies, alpha: float) -> float:
    """Mean of the lowest alpha-tail, counted with multiplicity.

    ``energies`` is an iterable of (value, multiplicity) pairs or a scored
    SampleSet. The tail size is k = max(1, floor(alpha * N)); the boundary
    value contributes only as many copies as needed.
    """
    if isinstance(energies, SampleSet):
        vals, counts = energies.weighted_energies()
        pairs = list(zip(vals.tolist(), counts.tolist()))
    else:
        pairs = [(float(v), int(c)) for v, c in energies]
    if not pairs:
        raise EmptySampleSetError("cvar of an empty sample set")
    if not (0.0 < alpha <= 1.0):
        raise BadAlphaError(f"alpha must be in (0, 1], got {alpha}")
    total = sum(c for _, c in pairs)
    if total <= 0:
        raise EmptySampleSetError("cvar needs at least one shot")
    k = max(1, math.floor(alpha * total))
    pairs.sort(key=lambda p: p[0])
    remaining = k
    acc = 0.0
    for value, count in pairs:
        take = min(count, remaining)
        acc += value * take
        remaining -= take
        if remaining == 0:
            break
    return acc / k


def local_search(x, H: IsingHamiltonian, rng_seed) -> "str | np.ndarray":
    """One pass of single-bit-flip descent in a uniformly random index order.

    Each index is tried once; a flip is kept only if it strictly lowers the
    energy. The returned string's energy never exceeds the input's.
    """
    as_str = isinstance(x, str)
    if as_str:
        bits = np.frombuffer(x.encode("ascii"), dtype=np.uint8) - ord("0")
        bits = bits.copy()
    else:
        bits = np.array(x, dtype=np.uint8)
    if bits.shape != (H.n,):
        raise LengthMismatchError(f"got {bits.shape[0]} bits for {H.n} spins")
    rng = np.random.default_rng(rng_seed)
    _descend_inplace(bits, H, rng, H.adjacency())
    if as_str:
        return "".join("1" if b else "0" for b in bits)
    return bits


def _descend_inplace(bits: np.ndarray, H: IsingHamiltonian, rng, adj) -> None:
    s = 1.0 - 2.0 * bits.astype(np.float64)
    # local field g_j = h_j + sum_k J_jk s_k; flipping bit j changes the
    # energy by -2 s_j g_j
    g = H.h.astype(np.float64).copy()
    for j in range(H.n):
        for k, v in adj[j]:
            g[j] += v * s[k]
    for j in rng.permutation(H.n):
        delta = -2.0 * s[j] * g[j]
        if delta < 0.0:
            s[j] = -s[j]
            bits[j] ^= 1
            for k, v in adj[j]:
                g[k] += 2.0 * v * s[j]


def local_search_batch(bits: np.ndarray, H: IsingHamiltonian, rng_seed) -> np.ndarray:
    """Local search applied independently to each row, with per-row derived
    seeds so the result does not depend on execution order."""
    bits = np.array(bits, dtype=np.uint8)
    seeds = np.random.SeedSequence(rng_seed).spawn(bits.shape[0])
    adj = H.adjacency()
    for r in range(bits.shape[0]):
        _descend_inplace(bits[r], H, np.random.default_rng(seeds[r]), adj)
    return bits


def brute_force_solve(H: IsingHamiltonian, cap: int = BRUTE_FORCE_CAP) -> tuple[str, float]:
    """Exact argmin over all bitstrings; ties go to the lexicographically
    smallest string. Refuses instances with more than ``cap`` spins."""
    if H.n > cap:
        raise TooLargeError(H.n, cap)
    n = H.n
    size = 1 << n
    # spin of qubit q for every basis state, qubit 0 = most significant bit
    codes = np.arange(size, dtype=np.int64)
    energies = np.full(size, H.offset, dtype=np.float64)
    spin_cols = {}

    def spin_col(q: int) -> np.ndarray:
        if q not in spin_cols:
            bit = (codes >> (n - 1 - q)) & 1
            spin_cols[q] = 1.0 - 2.0 * bit.astype(np.float64)
        return spin_cols[q]

    for i in range(n):
        if H.h[i] != 0.0:
            energies += H.h[i] * spin_col(i)
    for (i, j), v in H.J.items():
        if v != 0.0:
            energies += v * spin_col(i) * spin_col(j)
    best = energies.min()
    # smallest code among minimizers == lexicographically smallest bitstring
    winner = int(np.flatnonzero(energies == best)[0])
    bits = format(winner, f"0{n}b") if n else ""
    return bits, float(best)
