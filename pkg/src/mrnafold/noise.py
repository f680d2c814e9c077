"""Synthetic readout noise: independent, direction-dependent bit flips."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .samples import SampleSet


@dataclass(frozen=True)
class ReadoutNoise:
    """Per-qubit flip probabilities: p01 reads 0 as 1, p10 reads 1 as 0.
    Scalar rates apply to every qubit unless overridden per qubit."""

    p01: float = 0.0
    p10: float = 0.0
    overrides_p01: dict[int, float] | None = None
    overrides_p10: dict[int, float] | None = None

    def __post_init__(self):
        for name, v in (("p01", self.p01), ("p10", self.p10)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for ov in (self.overrides_p01, self.overrides_p10):
            if ov:
                for q, v in ov.items():
                    if not 0.0 <= v <= 1.0:
                        raise ValueError(f"override for qubit {q} must be in [0, 1], got {v}")

    def rates(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        r01 = np.full(n, self.p01)
        r10 = np.full(n, self.p10)
        for q, v in (self.overrides_p01 or {}).items():
            r01[q] = v
        for q, v in (self.overrides_p10 or {}).items():
            r10[q] = v
        return r01, r10

    def is_trivial(self) -> bool:
        return (
            self.p01 == 0.0
            and self.p10 == 0.0
            and not any((self.overrides_p01 or {}).values())
            and not any((self.overrides_p10 or {}).values())
        )


def apply_noise(samples: SampleSet, noise: ReadoutNoise, rng_seed) -> SampleSet:
    """Flip each bit of each shot independently at its direction-dependent
    rate. Shot count is preserved exactly; duplicates are re-merged."""
    rng = np.random.default_rng(rng_seed)
    n = samples.n_qubits
    r01, r10 = noise.rates(n)
    expanded = np.repeat(samples.bits, samples.counts, axis=0)
    u = rng.random(expanded.shape)
    flip_prob = np.where(expanded == 0, r01[None, :], r10[None, :])
    expanded ^= (u < flip_prob).astype(np.uint8)
    return SampleSet.from_bits(expanded)


class NoisySampler:
    """Wraps a sampler so every draw passes through the readout channel."""

    def __init__(self, base, noise: ReadoutNoise, rng_seed):
        self.base = base
        self.noise = noise
        self.rng = np.random.default_rng(rng_seed)

    def __call__(self, theta, n_shots: int, rng) -> SampleSet:
        clean = self.base(theta, n_shots, rng)
        return apply_noise(clean, self.noise, self.rng)
