"""Random primitives and counter-based per-trajectory streams.

Every random word a trajectory consumes is a hash of
``(seed, trajectory index, step number, slot)``, so a trajectory's path does
not depend on which other trajectories share its batch or worker.
"""

from __future__ import annotations

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_STEP = np.uint64(0xD1B54A32D192ED03)
_S30, _S27, _S31, _S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)


def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, elementwise on uint64 (wraps mod 2^64)."""
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


class CounterStreams:
    """Stateless random words addressed by (trajectory index, step, slot)."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._key = _mix64(np.array([self.seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) ^ _GOLDEN)[0]

    def words(self, index: np.ndarray, step: np.ndarray, slots: int) -> np.ndarray:
        index = np.asarray(index, dtype=np.uint64)
        step = np.asarray(step, dtype=np.uint64)
        with np.errstate(over="ignore"):
            traj = _mix64(self._key ^ (index * _GOLDEN))
            base = _mix64(traj + step * _STEP)
            slot = np.arange(1, slots + 1, dtype=np.uint64) * _GOLDEN
            return _mix64(base[..., None] + slot)

    def uniform(self, index, step, slots: int) -> np.ndarray:
        """Uniforms in (0, 1), shape (n, slots)."""
        w = self.words(index, step, slots)
        return ((w >> _S11).astype(np.float64) + 0.5) * 2.0**-53

    def normal(self, index, step, dim: int) -> np.ndarray:
        """Standard normals by Box-Muller, shape (n, dim)."""
        pairs = (dim + 1) // 2
        u = self.uniform(index, step, 2 * pairs)
        rad = np.sqrt(-2.0 * np.log(u[:, :pairs]))
        ang = 2.0 * np.pi * u[:, pairs:]
        z = np.concatenate([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
        return z[:, :dim]

    def sphere(self, index, step, dim: int) -> np.ndarray:
        return normalize_rows(self.normal(index, step, dim))

    def signs(self, index, step, count: int) -> np.ndarray:
        """Independent +-1 entries, shape (n, count), count <= 64."""
        if count > 64:
            raise ValueError("at most 64 signs per step")
        w = self.words(index, step, 1)[:, 0]
        bits = (w[:, None] >> np.arange(count, dtype=np.uint64)) & np.uint64(1)
        return np.where(bits == 1, 1.0, -1.0)


def normalize_rows(g: np.ndarray) -> np.ndarray:
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def sample_sphere(dim: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform point(s) on the unit sphere in R^dim from normalized Gaussians."""
    if dim < 2:
        raise ValueError("dimension must be >= 2")
    g = rng.standard_normal(dim if size is None else (size, dim))
    return normalize_rows(g)


def sample_signs(n: int, rng: np.random.Generator) -> np.ndarray:
    """n independent Rademacher variables."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.where(rng.integers(0, 2, size=n) == 1, 1.0, -1.0)
