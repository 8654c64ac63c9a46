"""Reproducible Gaussian increments keyed by (seed, path, step, channel).

Every standard normal is a pure function of its key: the counter
(step, channel, path_lo, path_hi) and the key (seed_lo, seed_hi) go through
ten Philox4x32 rounds, the first two output words form a 52-bit uniform in
the open interval (0, 1), and ``scipy.special.ndtri`` (inverse normal CDF)
turns it into a Gaussian.  Paths can therefore be split across any number
of workers without changing a single draw.

Brownian increments over a coarse step are built from the increments of
the finest resolution by pairwise summation, so runs at dt and at dt / 2**L
share the same underlying Brownian path (common random numbers).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

MASK32 = np.uint64(0xFFFFFFFF)
SHIFT32 = np.uint64(32)

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)
PHILOX_ROUNDS = 10

TWO_POW_M52 = 2.0 ** -52


@dataclass(frozen=True)
class MasterSeed:
    seed: int

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("master seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def key(self):
        return np.uint64(self.seed & 0xFFFFFFFF), np.uint64(self.seed >> 32)


def philox4x32(counter, key):
    """Philox4x32-10 on broadcastable uint64 arrays holding 32-bit words."""
    c0, c1, c2, c3 = np.broadcast_arrays(*(np.asarray(c, dtype=np.uint64) for c in counter))
    k0, k1 = np.uint64(key[0]), np.uint64(key[1])
    for _ in range(PHILOX_ROUNDS):
        p0 = c0 * PHILOX_M0
        p1 = c2 * PHILOX_M1
        c0, c1, c2, c3 = (
            (p1 >> SHIFT32) ^ c1 ^ k0,
            p1 & MASK32,
            (p0 >> SHIFT32) ^ c3 ^ k1,
            p0 & MASK32,
        )
        k0 = (k0 + PHILOX_W0) & MASK32
        k1 = (k1 + PHILOX_W1) & MASK32
    return c0, c1, c2, c3


def uniforms(master, paths, steps, channels):
    """Uniforms in (0, 1) for broadcastable arrays of path, step and channel indices."""
    paths = np.asarray(paths, dtype=np.uint64)
    steps = np.asarray(steps, dtype=np.uint64)
    channels = np.asarray(channels, dtype=np.uint64)
    if np.any(steps > MASK32) or np.any(channels > MASK32):
        raise ValueError("step and channel indices must be below 2**32")
    counter = (steps, channels, paths & MASK32, paths >> SHIFT32)
    w0, w1, _, _ = philox4x32(counter, master.key)
    bits = ((w0 >> np.uint64(6)) << np.uint64(26)) | (w1 >> np.uint64(6))
    return (bits.astype(np.float64) + 0.5) * TWO_POW_M52


def standard_normals(master, paths, steps, channels):
    return ndtri(uniforms(master, paths, steps, channels))


def coarse_from_fine(fine_pair):
    """Increment over a step from the increments over its two half steps."""
    first, second = fine_pair
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    if first.shape != second.shape:
        raise ValueError("fine increments must have the same length")
    return first + second


def coarsen(fine, axis=-2):
    """Collapse 2**L fine increments along ``axis`` by repeated pairwise summation."""
    fine = np.moveaxis(np.asarray(fine, dtype=float), axis, 0)
    size = fine.shape[0]
    if size & (size - 1):
        raise ValueError("the number of fine increments must be a power of two")
    while fine.shape[0] > 1:
        fine = coarse_from_fine((fine[0::2], fine[1::2]))
    return fine[0]


class PathBlock:
    """Increment source for a set of paths, advanced one step at a time by the caller.

    ``refine`` is the number of dyadic levels between the step size and the
    resolution at which draws are keyed: a step n of size dt consumes the
    keyed draws n * 2**refine ... (n + 1) * 2**refine - 1 at size dt / 2**refine.
    """

    def __init__(self, master, path_indices, refine=0):
        if refine < 0:
            raise ValueError("refine must be nonnegative")
        self.master = master
        self.path_indices = np.asarray(path_indices, dtype=np.uint64).reshape(-1)
        self.refine = int(refine)

    def __len__(self):
        return self.path_indices.size

    def increments(self, step_index, dt, K, rows=None):
        """Wiener increments of shape (n_rows, K) for the given step."""
        if not dt > 0:
            raise ValueError("dt must be positive")
        paths = self.path_indices if rows is None else self.path_indices[rows]
        channels = np.arange(K, dtype=np.uint64)
        if self.refine == 0:
            z = standard_normals(self.master, paths[:, None], step_index, channels[None, :])
            return np.sqrt(dt) * z
        n_fine = 1 << self.refine
        fine_steps = np.uint64(step_index) * np.uint64(n_fine) + np.arange(n_fine, dtype=np.uint64)
        z = standard_normals(self.master, paths[:, None, None], fine_steps[None, :, None], channels[None, None, :])
        return coarsen(np.sqrt(dt / n_fine) * z, axis=1)


@dataclass
class NoiseStream:
    """Single-owner increment cursor for one path."""

    master: MasterSeed
    path_index: int
    step_index: int = 0
    refine: int = 0

    def block(self):
        return PathBlock(self.master, [self.path_index], refine=self.refine)


def make_stream(master, path_index, refine=0):
    if path_index < 0:
        raise ValueError("path_index must be nonnegative")
    return NoiseStream(master=master, path_index=int(path_index), refine=refine)


def gaussian_increments(stream, dt, K):
    """K independent N(0, dt) draws; advances the stream by one step."""
    draws = stream.block().increments(stream.step_index, dt, K)[0]
    stream.step_index += 1
    return draws
