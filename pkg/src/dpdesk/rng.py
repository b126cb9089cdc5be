"""Seeded randomness.

All stochastic components (initialization, lot sampling, noise, synthetic
data) draw from an `Rng` so a run is fully determined by its seed. Gaussian
variates are produced by the basic Box-Muller transform over the generator's
uniform stream, which keeps seeded draws reproducible and easy to document
(no rejection steps, a fixed number of uniforms per sample pair).
"""

from __future__ import annotations

import hashlib

import numpy as np


class Rng:
    """Deterministic random stream, fully determined by a 64-bit seed."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, n: int) -> np.ndarray:
        """n i.i.d. uniforms in [0, 1)."""
        return self._gen.random(int(n))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(int(n))

    def spawn(self, label: str) -> "Rng":
        """Derive an independent child stream from a string label.

        Child seed is a stable 64-bit hash of (seed, label), so the whole
        stream tree is reproducible from the root seed alone.
        """
        h = hashlib.blake2b(f"{self.seed}:{label}".encode(), digest_size=8)
        return Rng(int.from_bytes(h.digest(), "little"))


def gaussian(rng: Rng, std: float, shape) -> np.ndarray:
    """I.i.d. zero-mean Gaussian samples with standard deviation `std`.

    Uses the basic (trigonometric) Box-Muller transform: each pair of
    uniforms (u1, u2) yields z0 = sqrt(-2 ln u1) cos(2 pi u2) and the matching
    sin variate. u1 is mapped to (0, 1] to avoid log(0).
    """
    if std < 0:
        raise ValueError(f"std must be non-negative, got {std}")
    shape = (shape,) if np.isscalar(shape) else tuple(int(s) for s in shape)
    n = int(np.prod(shape)) if shape else 1
    if std == 0 or n == 0:
        return np.zeros(shape)
    npairs = (n + 1) // 2
    u1 = 1.0 - rng.uniform(npairs)
    u2 = rng.uniform(npairs)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
    return (std * z[:n]).reshape(shape)


def l2_norm(v: np.ndarray) -> float:
    """Euclidean norm of a tensor of any shape (flattened)."""
    return float(np.sqrt(np.sum(np.asarray(v, dtype=np.float64) ** 2)))
