"""Deterministic Gaussian substreams and refinable Brownian paths.

Every stream is identified by ``(master_seed, path_index, noise_index, level)``
and is produced by a Philox counter-based generator keyed by a SplitMix64
hash of those four integers. A stream therefore never depends on how many other
streams were consumed before it, which is what makes Monte Carlo results
independent of worker count and evaluation order.

Brownian increments are stored on the dyadic lattice ``QUANTUM * Z``. On that
lattice the bridge split ``D -> (D1, D - D1)`` and the pair sum ``D1 + D2`` are
exact in binary floating point, so a refined path aggregates back to its
parent bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .params import GridSpec

QUANTUM = 2.0**-40
# Lattice values must stay below 2**12 in magnitude for the sums to be exact.
MAX_INCREMENT = 2.0**12

_MASK64 = (1 << 64) - 1
_PATH_BITS = 44
_NOISE_BITS = 8
_LEVEL_BITS = 12


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    path_index: int = 0
    noise_index: int = 0


def _philox_key(master_seed: int, path_index: int, noise_index: int, level: int) -> tuple[int, int]:
    if not 0 <= path_index < 1 << _PATH_BITS:
        raise UsageError(f"path_index out of range: {path_index}")
    if not 0 <= noise_index < 1 << _NOISE_BITS:
        raise UsageError(f"noise_index out of range: {noise_index}")
    if not 0 <= level < 1 << _LEVEL_BITS:
        raise UsageError(f"refinement level out of range: {level}")
    packed = (path_index << (_NOISE_BITS + _LEVEL_BITS)) | (noise_index << _LEVEL_BITS) | level
    # Philox needs well-mixed keys: nearby raw keys give visibly correlated first draws.
    h = _splitmix64(_splitmix64(int(master_seed) & _MASK64) ^ packed)
    return h, _splitmix64(h ^ _GOLDEN)


_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class _Rekeyable:
    """One Philox generator re-keyed per substream; not shared across threads."""

    def __init__(self):
        self._bits = np.random.Philox(key=[0, 0])
        self._gen = np.random.Generator(self._bits)
        self._state = self._bits.state

    def normals(self, master_seed: int, path_index: int, noise_index: int, level: int, count: int) -> np.ndarray:
        key = _philox_key(master_seed, path_index, noise_index, level)
        st = self._state
        st["state"]["key"][:] = key
        st["state"]["counter"][:] = 0
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bits.state = st
        return self._gen.standard_normal(count)


def gaussian_stream(seed: SeedSpec, count: int, level: int = 0) -> np.ndarray:
    """``count`` i.i.d. N(0, 1) draws from the substream named by ``seed``."""
    if count < 0:
        raise UsageError("count must be >= 0")
    return _Rekeyable().normals(seed.master_seed, seed.path_index, seed.noise_index, level, count)


def gaussian_block(
    master_seed: int,
    path_indices,
    noise_index: int,
    count: int,
    level: int = 0,
) -> np.ndarray:
    """Stack per-path streams into an array of shape ``(len(path_indices), count)``."""
    path_indices = np.asarray(path_indices, dtype=np.int64).ravel()
    out = np.empty((path_indices.size, count))
    rk = _Rekeyable()
    for row, idx in enumerate(path_indices):
        out[row] = rk.normals(master_seed, int(idx), noise_index, level, count)
    return out


def quantize(x: np.ndarray) -> np.ndarray:
    """Round onto the increment lattice."""
    x = np.asarray(x, dtype=float)
    if x.size and np.max(np.abs(x)) >= MAX_INCREMENT:
        raise UsageError("Brownian increment too large for the exact lattice; use a finer grid")
    return np.round(x / QUANTUM) * QUANTUM


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Brownian increments for a batch of paths on a dyadically refined grid.

    ``increments`` has shape ``(n_noise, n_paths, base_steps * 2**level)``; row
    ``p`` of noise ``j`` belongs to stream ``(master_seed, path_indices[p], j)``.
    """

    master_seed: int
    path_indices: np.ndarray
    base_delta: float
    base_steps: int
    level: int
    increments: np.ndarray

    @property
    def n_noise(self) -> int:
        return self.increments.shape[0]

    @property
    def n_paths(self) -> int:
        return self.increments.shape[1]

    @property
    def n_steps(self) -> int:
        return self.base_steps * 2**self.level

    @property
    def delta(self) -> float:
        return self.base_delta / 2**self.level

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.base_delta * self.base_steps, self.n_steps)

    @classmethod
    def generate(cls, master_seed: int, path_indices, grid: GridSpec, n_noise: int = 1) -> BrownianPath:
        """Level-0 increments sqrt(delta) * Z on ``grid``."""
        idx = np.atleast_1d(np.asarray(path_indices, dtype=np.int64))
        scale = math.sqrt(grid.delta)
        inc = np.empty((n_noise, idx.size, grid.n_steps))
        for j in range(n_noise):
            inc[j] = quantize(scale * gaussian_block(master_seed, idx, j, grid.n_steps, level=0))
        return cls(int(master_seed), idx, grid.delta, grid.n_steps, 0, inc)

    def noise(self, j: int = 0) -> np.ndarray:
        return self.increments[j]

    def path(self, p: int) -> BrownianPath:
        """The single-path view for batch row ``p``."""
        return BrownianPath(
            self.master_seed,
            self.path_indices[p : p + 1],
            self.base_delta,
            self.base_steps,
            self.level,
            self.increments[:, p : p + 1, :],
        )

    def refine(self) -> BrownianPath:
        return refine(self)

    def aggregate(self) -> BrownianPath:
        return aggregate(self)


def refine(path: BrownianPath) -> BrownianPath:
    """Split every increment by Brownian bridge conditioning.

    Midpoint draws for level ``m + 1`` come from substream
    ``(master_seed, path_index, noise_index, m + 1)``. The first half is
    ``D/2 + sqrt(h/4) * xi`` rounded to the lattice and the second half is
    ``D`` minus the first, so pair sums give back ``D`` exactly.
    """
    level = path.level + 1
    coarse = path.increments
    n_coarse = coarse.shape[2]
    bridge_sd = math.sqrt(path.delta / 4.0)
    fine = np.empty(coarse.shape[:2] + (2 * n_coarse,))
    for j in range(path.n_noise):
        xi = gaussian_block(path.master_seed, path.path_indices, j, n_coarse, level=level)
        first = quantize(0.5 * coarse[j] + bridge_sd * xi)
        fine[j, :, 0::2] = first
        fine[j, :, 1::2] = coarse[j] - first
    return BrownianPath(path.master_seed, path.path_indices, path.base_delta, path.base_steps, level, fine)


def aggregate(path: BrownianPath) -> BrownianPath:
    """Sum consecutive increment pairs (even index first), giving the parent level."""
    if path.level == 0:
        raise UsageError("level-0 path has no coarser parent")
    inc = path.increments[..., 0::2] + path.increments[..., 1::2]
    return BrownianPath(path.master_seed, path.path_indices, path.base_delta, path.base_steps, path.level - 1, inc)


def refine_to(path: BrownianPath, level: int) -> list[BrownianPath]:
    """All paths from ``path.level`` up to ``level`` inclusive."""
    out = [path]
    while out[-1].level < level:
        out.append(refine(out[-1]))
    return out
