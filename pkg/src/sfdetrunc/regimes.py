"""Finite-state Markov chains driving the regime switches.

States are 1-indexed everywhere a caller can see them.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NonGeneratorError, ReducibleError

ROW_TOL = 1e-12
CLIP_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class RegimeGenerator:
    matrix: np.ndarray

    def __post_init__(self):
        g = np.array(self.matrix, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] == 0:
            raise NonGeneratorError(f"generator must be square, got shape {g.shape}")
        off = g - np.diag(np.diag(g))
        if np.any(off < 0):
            raise NonGeneratorError("off-diagonal rates must be nonnegative")
        rows = g.sum(axis=1)
        bad = np.flatnonzero(np.abs(rows) > ROW_TOL)
        if bad.size:
            i = int(bad[0])
            raise NonGeneratorError(f"row {i + 1} sums to {float(rows[i])!r}, not 0")
        g.setflags(write=False)
        object.__setattr__(self, "matrix", g)

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    matrix: np.ndarray
    dt: float

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class RegimePath:
    states: np.ndarray  # 1-indexed, length steps + 1
    n_states: int

    def __len__(self):
        return len(self.states)

    def subsample(self, factor: int) -> "RegimePath":
        return RegimePath(self.states[::factor].copy(), self.n_states)


def transition_matrix(g: RegimeGenerator, dt: float) -> TransitionMatrix:
    """One-step transition probabilities ``exp(dt * Gamma)``."""
    if not isinstance(g, RegimeGenerator):
        g = RegimeGenerator(g)
    if not dt > 0:
        raise ValueError("step must be positive")
    p = scipy.linalg.expm(dt * g.matrix)
    p[p < CLIP_TOL] = 0.0
    p /= p.sum(axis=1, keepdims=True)
    p.setflags(write=False)
    return TransitionMatrix(p, dt)


def stationary_distribution(g: RegimeGenerator) -> np.ndarray:
    """Solve ``pi @ Gamma = 0`` with ``sum(pi) = 1``."""
    if not isinstance(g, RegimeGenerator):
        g = RegimeGenerator(g)
    n = g.n_states
    a = g.matrix.T.copy()
    a[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    # the normalized system is singular exactly when the chain has more than one closed class
    if np.linalg.svd(a, compute_uv=False)[-1] < 1e-10:
        raise ReducibleError("generator has no unique stationary distribution")
    pi = np.linalg.solve(a, rhs)
    if np.max(np.abs(pi @ g.matrix)) > 1e-10 or np.any(pi < -1e-10):
        raise ReducibleError("stationary solve failed its residual check")
    return np.clip(pi, 0.0, None)


def sample_regime_path(P: TransitionMatrix, i0: int, steps: int, rng: np.random.Generator) -> RegimePath:
    """Inverse-CDF sampling of the discrete chain; exactly one uniform per step."""
    n = P.n_states
    if not 1 <= i0 <= n:
        raise ValueError(f"initial state {i0} outside 1..{n}")
    u = rng.random(steps)
    states = np.empty(steps + 1, dtype=np.int64)
    states[0] = i0
    if n == 1:
        states[1:] = 1
        return RegimePath(states, n)
    cum = [np.cumsum(row).tolist() for row in P.matrix]
    last = n - 1
    s = i0 - 1
    out = [s]
    for uj in u.tolist():
        s = min(bisect.bisect_right(cum[s], uj), last)
        out.append(s)
    states[:] = out
    states += 1
    return RegimePath(states, n)
