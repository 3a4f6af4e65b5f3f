"""Reproducible random streams.

Every stream is a Philox-4x64-10 counter-based generator whose key is drawn
from ``numpy.random.SeedSequence(seed, spawn_key=(purpose, index))``. One
integer master seed therefore fixes every stream of a study, and the stream of
sample ``i`` never depends on how many other samples exist or in which batch
they are run. Normal variates use the Box-Muller transform on consecutive
uniform pairs ``(u1, u2)`` with ``u1`` mapped into ``(0, 1]``.
"""

from __future__ import annotations

import numpy as np

NOISE = 1
REGIME = 2


def derive_seed(master: int, purpose: int) -> int:
    """Sub-seed for one purpose (noise, regime) from the master seed."""
    ss = np.random.SeedSequence(int(master), spawn_key=(0, int(purpose)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream(seed: int, purpose: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def box_muller(rng: np.random.Generator, count: int) -> np.ndarray:
    pairs = (count + 1) // 2
    u = rng.random(2 * pairs).reshape(pairs, 2)
    radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
    angle = 2.0 * np.pi * u[:, 1]
    z = np.empty((pairs, 2))
    z[:, 0] = radius * np.cos(angle)
    z[:, 1] = radius * np.sin(angle)
    return z.reshape(-1)[:count]
