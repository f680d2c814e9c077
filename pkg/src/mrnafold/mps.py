"""Exact matrix-product-state simulation of the two-local ansatz.

The circuit alternates layers of nearest-neighbor CZ gates with
parameterized Y rotations. Each layer is a bond-dimension-2 MPO, so p
layers contracted exactly into the initial product state give an MPS of
bond dimension at most 2^p; nothing is ever truncated.

Tensor index order is (left bond, physical, right bond) for MPS sites and
(left bond, physical out, physical in, right bond) for MPO sites.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    IndexOutOfRangeError,
    LengthMismatchError,
    OverlappingLinksError,
    SizeMismatchError,
)
from .samples import SampleSet

_P0 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=np.complex128)
_P1 = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=np.complex128)
_EYE = np.eye(2, dtype=np.complex128)
_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128)


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def entangler_links(n: int, layer: int) -> list[tuple[int, int]]:
    """Pairwise CZ pattern: odd layers couple (0,1),(2,3),..., even layers
    couple (1,2),(3,4),...; layers count from 1."""
    start = 0 if layer % 2 == 1 else 1
    return [(i, i + 1) for i in range(start, n - 1, 2)]


@dataclass(frozen=True)
class AnsatzParams:
    """Rotation angles, one row per layer: row 0 is the initial rotation
    layer, rows 1..p follow each entangling layer."""

    theta: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=np.float64)
        if th.ndim != 2:
            raise ValueError("theta must be a (p+1, n) matrix")
        if not np.all(np.isfinite(th)):
            raise ValueError("angles must be finite")
        object.__setattr__(self, "theta", th)

    @property
    def n_layers(self) -> int:
        return self.theta.shape[0] - 1

    @property
    def n_qubits(self) -> int:
        return self.theta.shape[1]

    @classmethod
    def zeros(cls, n: int, p: int) -> "AnsatzParams":
        return cls(np.zeros((p + 1, n)))


class Mps:
    """A chain of site tensors; immutable once built."""

    def __init__(self, tensors: list[np.ndarray]):
        for q in range(len(tensors) - 1):
            if tensors[q].shape[2] != tensors[q + 1].shape[0]:
                raise SizeMismatchError("neighboring bond dimensions disagree")
        if tensors and (tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1):
            raise SizeMismatchError("boundary bonds must have dimension 1")
        self.tensors = tensors

    @property
    def n(self) -> int:
        return len(self.tensors)

    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def max_bond(self) -> int:
        dims = self.bond_dims()
        return max(dims) if dims else 1

    def dense(self) -> np.ndarray:
        """Full state vector; index order puts qubit 0 on the most
        significant bit. Only for small n."""
        acc = self.tensors[0][0]  # (2, chi)
        for t in self.tensors[1:]:
            acc = np.tensordot(acc, t, axes=([acc.ndim - 1], [0]))
        return acc.reshape(-1)

    def norm(self) -> float:
        env = np.ones((1, 1), dtype=np.complex128)
        for t in self.tensors:
            env = np.einsum("ab,apc,bpd->cd", env, t, t.conj(), optimize=True)
        return float(np.sqrt(abs(env[0, 0].real)))

    def right_environments(self) -> list[np.ndarray]:
        """R[q] contracts sites q..n-1 of the state with its conjugate;
        R[n] is the trivial 1x1 identity."""
        envs = [None] * (self.n + 1)
        envs[self.n] = np.ones((1, 1), dtype=np.complex128)
        for q in range(self.n - 1, -1, -1):
            t = self.tensors[q]
            envs[q] = np.einsum("apc,bpd,cd->ab", t, t.conj(), envs[q + 1], optimize=True)
        return envs

    def describe(self) -> dict:
        return {
            "sites": self.n,
            "shapes": [list(t.shape) for t in self.tensors],
            "norm": self.norm(),
        }


def init_product_mps(n: int, first_layer_angles) -> Mps:
    """chi = 1 state: each site holds Ry(theta)|0> = cos(t/2)|0> + sin(t/2)|1>."""
    angles = np.asarray(first_layer_angles, dtype=np.float64)
    if angles.shape != (n,):
        raise LengthMismatchError(f"need {n} angles, got {angles.shape}")
    tensors = []
    for q in range(n):
        vec = ry_matrix(angles[q])[:, 0]
        tensors.append(vec.reshape(1, 2, 1))
    return Mps(tensors)


class LayerMpo:
    """One circuit layer (CZ links, then per-qubit Ry) as an MPO with bond
    dimension 2 across each link and 1 elsewhere."""

    def __init__(self, tensors: list[np.ndarray]):
        self.tensors = tensors

    @property
    def n(self) -> int:
        return len(self.tensors)

    def max_bond(self) -> int:
        dims = [t.shape[3] for t in self.tensors[:-1]]
        return max(dims) if dims else 1

    def dense(self) -> np.ndarray:
        acc = self.tensors[0][0]  # (out, in, chi)
        n = self.n
        for t in self.tensors[1:]:
            acc = np.tensordot(acc, t, axes=([acc.ndim - 1], [0]))
        # interleaved (out, in) pairs -> group outs then ins
        acc = acc.reshape([2] * (2 * n))
        perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
        return acc.transpose(perm).reshape(2**n, 2**n)


def _link_roles(n: int, cz_links: list[tuple[int, int]]) -> tuple[set[int], set[int]]:
    used: set[int] = set()
    for a, b in cz_links:
        if b != a + 1 or not (0 <= a < n - 1):
            raise OverlappingLinksError(f"link ({a},{b}) is not a nearest-neighbor pair")
        if a in used or b in used:
            raise OverlappingLinksError(f"link ({a},{b}) touches an already-linked qubit")
        used.add(a)
        used.add(b)
    return {a for a, _ in cz_links}, {b for _, b in cz_links}


def _mpo_site(q: int, angle: float, left_of_link: set[int], right_of_link: set[int]) -> np.ndarray:
    if q in left_of_link:
        w = np.zeros((1, 2, 2, 2), dtype=np.complex128)
        w[0, :, :, 0] = _P0
        w[0, :, :, 1] = _P1
    elif q in right_of_link:
        w = np.zeros((2, 2, 2, 1), dtype=np.complex128)
        w[0, :, :, 0] = _EYE
        w[1, :, :, 0] = _Z
    else:
        w = _EYE.reshape(1, 2, 2, 1).copy()
    # rotation acts on the output physical index
    return np.einsum("ou,lunr->lonr", ry_matrix(angle), w, optimize=True)


def layer_to_mpo(n: int, cz_links: list[tuple[int, int]], angles) -> LayerMpo:
    """Build the layer operator. ``cz_links`` must be disjoint
    nearest-neighbor pairs; ``angles`` gives the Ry applied after the CZs."""
    angles = np.asarray(angles, dtype=np.float64)
    if angles.shape != (n,):
        raise LengthMismatchError(f"need {n} angles, got {angles.shape}")
    left_of_link, right_of_link = _link_roles(n, cz_links)
    return LayerMpo([_mpo_site(q, angles[q], left_of_link, right_of_link) for q in range(n)])


def contract_layer(mps: Mps, mpo: LayerMpo) -> Mps:
    """Exact MPO application; bond dimensions multiply, nothing truncated."""
    if mps.n != mpo.n:
        raise SizeMismatchError(f"state has {mps.n} sites, operator has {mpo.n}")
    tensors = [_apply_site(a, w) for a, w in zip(mps.tensors, mpo.tensors)]
    return Mps(tensors)


def _apply_site(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    # a: (al, in, ar), w: (wl, out, in, wr) -> (wl*al, out, wr*ar)
    t = np.einsum("lour,aub->laorb", w, a, optimize=True)
    wl, al, out, wr, ar = t.shape
    return np.ascontiguousarray(t.reshape(wl * al, out, wr * ar))


class AnsatzState:
    """The circuit's MPS with the per-layer structure kept around so a
    single-angle change only recomputes one site column.

    Because contraction is exact (no canonicalization), the final tensor at
    site q depends on layer tensors at site q alone; an update therefore
    costs the same no matter how many updates preceded it.
    """

    def __init__(self, params: AnsatzParams, link_layers: list[list[tuple[int, int]]] | None = None):
        self.params = params
        n, p = params.n_qubits, params.n_layers
        if link_layers is None:
            link_layers = [entangler_links(n, ell) for ell in range(1, p + 1)]
        if len(link_layers) != p:
            raise SizeMismatchError(f"need {p} link layers, got {len(link_layers)}")
        self.link_layers = link_layers
        self._mpos = [
            layer_to_mpo(n, link_layers[ell - 1], params.theta[ell]) for ell in range(1, p + 1)
        ]
        self._init = init_product_mps(n, params.theta[0])
        self._columns = [self._column(q) for q in range(n)]

    @property
    def n(self) -> int:
        return self.params.n_qubits

    @property
    def n_layers(self) -> int:
        return self.params.n_layers

    def _column(self, q: int) -> np.ndarray:
        t = self._init.tensors[q]
        for mpo in self._mpos:
            t = _apply_site(t, mpo.tensors[q])
        return t

    def mps(self) -> Mps:
        return Mps(list(self._columns))

    def update_parameter(self, layer: int, qubit: int, new_angle: float) -> "AnsatzState":
        """Return a new handle with one angle replaced; shares all site
        columns except the affected one."""
        p, n = self.n_layers, self.n
        if not (0 <= layer <= p) or not (0 <= qubit < n):
            raise IndexOutOfRangeError(f"no parameter at layer {layer}, qubit {qubit}")
        clone = object.__new__(AnsatzState)
        theta = self.params.theta.copy()
        theta[layer, qubit] = new_angle
        clone.params = AnsatzParams(theta)
        clone.link_layers = self.link_layers
        clone._mpos = list(self._mpos)
        clone._init = self._init
        if layer == 0:
            tensors = list(self._init.tensors)
            tensors[qubit] = ry_matrix(new_angle)[:, 0].reshape(1, 2, 1)
            clone._init = Mps(tensors)
        else:
            mpo = self._mpos[layer - 1]
            tensors = list(mpo.tensors)
            left_of_link, right_of_link = _link_roles(n, self.link_layers[layer - 1])
            tensors[qubit] = _mpo_site(qubit, new_angle, left_of_link, right_of_link)
            clone._mpos[layer - 1] = LayerMpo(tensors)
        columns = list(self._columns)
        columns[qubit] = clone._column(qubit)
        clone._columns = columns
        return clone

    def with_params(self, params: AnsatzParams) -> "AnsatzState":
        """Apply all angle differences relative to the current handle."""
        if params.theta.shape != self.params.theta.shape:
            raise SizeMismatchError("parameter shapes differ")
        state = self
        changed = np.argwhere(params.theta != self.params.theta)
        for layer, qubit in changed:
            state = state.update_parameter(int(layer), int(qubit), params.theta[layer, qubit])
        return state


def sample(mps: Mps, n_samples: int, rng_seed) -> SampleSet:
    """Draw bitstrings from |<x|psi>|^2.

    Implementation walks the qubits left to right, computing the
    conditional single-site density from the accumulated left vectors and
    precomputed right environments. Shots with identical prefixes are kept
    grouped and split with binomial draws, which is distributionally
    identical to independent per-shot draws.
    """
    rng = np.random.default_rng(rng_seed)
    envs = mps.right_environments()
    n = mps.n
    # active branches: left vectors (B, chi) and shot counts (B,); the bits
    # themselves are reconstructed afterwards from per-site parent links
    vecs = np.ones((1, 1), dtype=np.complex128)
    counts = np.array([int(n_samples)], dtype=np.int64)
    links: list[tuple[np.ndarray, int]] = []
    for q in range(n):
        t = mps.tensors[q]
        w0 = vecs @ t[:, 0, :]
        w1 = vecs @ t[:, 1, :]
        r = envs[q + 1]
        p0 = np.einsum("sa,ab,sb->s", w0, r, w0.conj(), optimize=True).real
        p1 = np.einsum("sa,ab,sb->s", w1, r, w1.conj(), optimize=True).real
        p0 = np.clip(p0, 0.0, None)
        p1 = np.clip(p1, 0.0, None)
        denom = p0 + p1
        frac0 = np.clip(np.divide(p0, denom, out=np.full_like(p0, 0.5), where=denom > 0), 0.0, 1.0)
        n0 = rng.binomial(counts, frac0)
        n1 = counts - n0
        keep0 = np.flatnonzero(n0 > 0)
        keep1 = np.flatnonzero(n1 > 0)
        v0 = w0[keep0] / np.sqrt(p0[keep0])[:, None]
        v1 = w1[keep1] / np.sqrt(p1[keep1])[:, None]
        vecs = np.concatenate([v0, v1], axis=0)
        counts = np.concatenate([n0[keep0], n1[keep1]])
        links.append((np.concatenate([keep0, keep1]), len(keep0)))
    bits = np.zeros((len(counts), n), dtype=np.uint8)
    pos = np.arange(len(counts))
    for q in range(n - 1, -1, -1):
        parent, n_zero = links[q]
        bits[:, q] = pos >= n_zero
        pos = parent[pos]
    return SampleSet.from_bits(bits, counts)


def conditional_distribution(mps: Mps, prefix: list[int]) -> tuple[float, float]:
    """P(x_q = 0 | prefix), P(x_q = 1 | prefix) for the next site; test hook
    for walking the full sampling tree."""
    envs = mps.right_environments()
    vec = np.ones(1, dtype=np.complex128)
    for q, bit in enumerate(prefix):
        vec = vec @ mps.tensors[q][:, bit, :]
    q = len(prefix)
    r = envs[q + 1]
    probs = []
    for bit in (0, 1):
        w = vec @ mps.tensors[q][:, bit, :]
        probs.append(float((w @ r @ w.conj()).real))
    total = probs[0] + probs[1]
    return probs[0] / total, probs[1] / total
