"""Euler-Maruyama integration of the truncated equation.

The recursion is

    X_{j+1} = X_j + F(X_j, psi_1j, theta_j, t_j) dt + G(X_j, psi_2j, theta_j, t_j) dB_j

with ``psi`` the discrete delay aggregates over the window ``[t_j - k, t_j]``.
The truncated variant evaluates ``F`` and ``G`` at arguments radially clamped
to the ball of radius ``h(dt) = H * dt**exponent`` (default exponent -1/4).

Brownian increments are always generated on the finest grid of a run and
summed up to coarser dyadic steps, so runs at different step sizes share one
Brownian path per sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .errors import BlowUpError, NonDyadicError, NonFiniteError
from .history import Aggregator, HistoryWindow, fading_norm
from .measures import check_step
from .model import SUPERLINEAR, CoefficientModel
from .regimes import RegimePath, sample_regime_path, transition_matrix

EM = "em"
TRUNCATED_EM = "truncated-em"
DEFAULT_GUARD = 1e8
DEFAULT_EXPONENT = -0.25


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid with ``dt = 1/k1`` on ``[0, T]`` and truncation horizon ``k``."""

    k1: int
    k: int
    T: float

    def __post_init__(self):
        if int(self.k1) != self.k1 or self.k1 < 1:
            raise ValueError(f"k1 must be a positive integer, got {self.k1}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        steps = self.T * self.k1
        if self.T <= 0 or abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"T*k1 must be a positive integer, got {steps}")

    @classmethod
    def from_dt(cls, dt: float, k: int, T: float) -> "GridSpec":
        return cls(check_step(dt), int(k), T)

    @property
    def dt(self) -> float:
        return 1.0 / self.k1

    @property
    def n_steps(self) -> int:
        return int(round(self.T * self.k1))

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


def dyadic_factor(dt: float, fine_dt: float) -> int:
    ratio = dt / fine_dt
    f = int(round(ratio))
    if f < 1 or abs(ratio - f) > 1e-9 * max(1.0, ratio) or f & (f - 1):
        raise NonDyadicError(f"step {dt} is not a power-of-two multiple of {fine_dt}")
    return f


def coarse_increments(fine: np.ndarray, level: int) -> np.ndarray:
    """Sum consecutive blocks of ``level`` fine increments along axis ``-2``.

    Each block is summed left to right, so the result does not depend on the
    shape of the leading batch axes.
    """
    level = int(level)
    if level < 1 or level & (level - 1):
        raise NonDyadicError(f"aggregation level {level} is not a power of two")
    n = fine.shape[-2]
    if n % level:
        raise NonDyadicError(f"{n} fine increments do not split into blocks of {level}")
    if level == 1:
        return fine.copy()
    blocks = fine.reshape(fine.shape[:-2] + (n // level, level, fine.shape[-1]))
    acc = blocks[..., 0, :].copy()
    for i in range(1, level):
        acc += blocks[..., i, :]
    return acc


@dataclass(frozen=True)
class NoiseSource:
    """Brownian increments for sample ``i`` drawn from stream ``(seed, NOISE, i)``."""

    seed: int
    dim: int
    fine_dt: float
    T: float

    @property
    def n_fine(self) -> int:
        n = self.T / self.fine_dt
        if abs(n - round(n)) > 1e-9:
            raise ValueError("horizon is not a whole number of fine steps")
        return int(round(n))

    def fine(self, sample: int) -> np.ndarray:
        rng = streams.stream(self.seed, streams.NOISE, sample)
        z = streams.box_muller(rng, self.n_fine * self.dim)
        return math.sqrt(self.fine_dt) * z.reshape(self.n_fine, self.dim)

    def fine_batch(self, samples) -> np.ndarray:
        return np.stack([self.fine(s) for s in samples])

    def increments(self, sample: int, dt: float) -> np.ndarray:
        return coarse_increments(self.fine(sample), dyadic_factor(dt, self.fine_dt))


def regime_paths(mod: CoefficientModel, dt: float, steps: int, seed: int, samples) -> np.ndarray:
    """Regime paths for the given samples, stacked to shape ``(B, steps + 1)``."""
    if mod.generator.n_states == 1:
        # the chain cannot move, so no uniforms are needed
        return np.ones((len(samples), steps + 1), dtype=np.int64)
    P = transition_matrix(mod.generator, dt)
    return np.stack([
        sample_regime_path(P, mod.initial_state, steps, streams.stream(seed, streams.REGIME, s)).states
        for s in samples
    ])


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    regimes: np.ndarray
    scheme: str
    grid: GridSpec

    def __post_init__(self):
        if not len(self.times) == len(self.states) == len(self.regimes):
            raise ValueError("trajectory columns differ in length")

    def to_csv(self, path):
        n = self.states.shape[1]
        header = ",".join(["t"] + [f"x_{c + 1}" for c in range(n)] + ["regime"])
        with open(path, "w", newline="\n") as fh:
            fh.write(header + "\n")
            for t, x, i in zip(self.times.tolist(), self.states.tolist(), self.regimes.tolist()):
                fh.write(",".join(["%.17g" % t] + ["%.17g" % v for v in x] + [str(int(i))]) + "\n")


def resolve_scheme(mod: CoefficientModel, scheme: str) -> str:
    if scheme == "auto":
        return TRUNCATED_EM if mod.lipschitz_class == SUPERLINEAR else EM
    if scheme not in (EM, TRUNCATED_EM):
        raise ValueError(f"unknown scheme {scheme!r}")
    return scheme


def default_truncation_scale(mod: CoefficientModel, grid: GridSpec) -> float:
    """``2 * max(1, ||xi||_r)`` measured on the grid window."""
    w = HistoryWindow(mod.initial, grid.dt, grid.k)
    return 2.0 * max(1.0, fading_norm(w, mod.r))


def truncation_level(H: float, dt: float, exponent: float = DEFAULT_EXPONENT) -> float:
    return H * dt ** exponent


def _clamp(v, radius):
    mag = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))
    return v * np.minimum(1.0, radius / mag)


@dataclass
class BatchResult:
    """Output of :func:`integrate_batch`.

    ``states`` has shape ``(B, n_rec, n)``: every ``record_every``-th grid
    state, or only the terminal one when ``record_every`` is ``None``.
    ``blown_step[b]`` is the first step whose state left the guard ball (-1 if
    none) and ``nonfinite[b]`` tells whether that state was NaN/inf.
    """

    states: np.ndarray
    blown_step: np.ndarray
    nonfinite: np.ndarray
    samples: list = field(default_factory=list)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[:, -1]


def integrate_batch(
    mod: CoefficientModel,
    grid: GridSpec,
    regimes: np.ndarray,
    increments: np.ndarray,
    scheme: str = EM,
    H: float | None = None,
    exponent: float = DEFAULT_EXPONENT,
    guard: float = DEFAULT_GUARD,
    record_every: int | None = 1,
    samples=None,
    on_blowup: str = "raise",
    resync_every: int = 1024,
    call_log: list | None = None,
) -> BatchResult:
    """Advance ``B`` independent sample paths together.

    ``regimes`` is ``(B, >= N+1)`` with 1-indexed states and ``increments`` is
    ``(B, N, m)``. Each sample's arithmetic is elementwise, so its result is
    bitwise independent of the other samples in the batch. With
    ``on_blowup="raise"`` the first path to leave the guard ball raises
    :class:`BlowUpError`; with ``"mask"`` it is set to NaN and integration
    continues for the rest.
    """
    scheme = resolve_scheme(mod, scheme)
    regimes = np.asarray(regimes)
    increments = np.asarray(increments, dtype=float)
    B = increments.shape[0]
    N, dt = grid.n_steps, grid.dt
    samples = list(range(B)) if samples is None else list(samples)
    if increments.shape[1:] != (N, mod.noise_dim):
        raise ValueError(f"increments must have shape (B, {N}, {mod.noise_dim}), got {increments.shape}")
    if regimes.shape[0] != B or regimes.shape[1] < N + 1:
        raise ValueError(f"need {N + 1} regime states per sample, got {regimes.shape}")

    radius = None
    if scheme == TRUNCATED_EM:
        if H is None:
            H = default_truncation_scale(mod, grid)
        radius = truncation_level(H, dt, exponent)

    win = HistoryWindow(mod.initial, dt, grid.k, batch=(B,))
    drift_aggs = [Aggregator(win, s, resync_every=resync_every) for s in mod.drift_aggregates]
    diff_aggs = [Aggregator(win, s, resync_every=resync_every) for s in mod.diffusion_aggregates]
    every = drift_aggs + diff_aggs

    if record_every is None:
        rec = None
    else:
        if N % record_every:
            raise ValueError("record_every must divide the number of steps")
        rec = np.empty((B, N // record_every + 1, mod.dim))
        rec[:, 0] = win.newest
    blown = np.full(B, -1, dtype=np.int64)
    nonfinite = np.zeros(B, dtype=bool)

    x = win.newest.copy()
    with np.errstate(all="ignore" if on_blowup == "mask" else "warn"):
        for j in range(N):
            t = j * dt
            i = regimes[:, j]
            y = [a.value() for a in drift_aggs]
            z = [a.value() for a in diff_aggs]
            xd = xg = x
            if radius is not None:
                xd = xg = _clamp(x, radius)
                y = [_clamp(v, radius) for v in y]
                z = [_clamp(v, radius) for v in z]
            if call_log is not None:
                call_log.append((j, x.copy(), [v.copy() for v in y], [v.copy() for v in z], i.copy(), t))
            f = mod.drift(xd, y, i, t)
            g = mod.diffusion(xg, z, i, t)
            dB = increments[:, j]
            noise = g[..., 0] * dB[:, None, 0]
            for l in range(1, mod.noise_dim):
                noise = noise + g[..., l] * dB[:, None, l]
            x_new = x + f * dt + noise

            mag = np.sqrt(np.sum(x_new * x_new, axis=-1))
            bad = ~(mag <= guard)
            if bad.any():
                fresh = bad & (blown < 0)
                if fresh.any():
                    b = int(np.flatnonzero(fresh)[0])
                    fin = np.isfinite(mag)
                    if on_blowup == "raise":
                        cls = BlowUpError if fin[b] else NonFiniteError
                        msg = f"sample {samples[b]} left |x| <= {guard:g} at step {j + 1} (t={(j + 1) * dt:g})"
                        if cls is BlowUpError:
                            raise BlowUpError(msg, sample=samples[b], step=j + 1)
                        raise NonFiniteError(msg)
                    blown[fresh] = j + 1
                    nonfinite[fresh & ~fin] = True
                x_new[bad] = np.nan

            for a in every:
                a.advance()
            win.push(x_new)
            for a in every:
                a.after_push()
            x = x_new
            if rec is not None and (j + 1) % record_every == 0:
                rec[:, (j + 1) // record_every] = x

    if rec is None:
        rec = x[:, None, :].copy()
    return BatchResult(rec, blown, nonfinite, samples)


def _single(mod, grid, regime, noise, sample, scheme, guard, H=None, exponent=DEFAULT_EXPONENT):
    if isinstance(noise, NoiseSource):
        dB = noise.increments(sample, grid.dt)
    else:
        dB = np.asarray(noise, dtype=float).reshape(grid.n_steps, mod.noise_dim)
    states = regime.states if isinstance(regime, RegimePath) else np.asarray(regime)
    res = integrate_batch(mod, grid, states[None, : grid.n_steps + 1], dB[None], scheme=scheme,
                          H=H, exponent=exponent, guard=guard, samples=[sample])
    return Trajectory(grid.times(), res.states[0], states[: grid.n_steps + 1].copy(), scheme, grid)


def em_integrate(mod, grid: GridSpec, regime, noise, guard=DEFAULT_GUARD, sample: int = 0) -> Trajectory:
    """Plain Euler-Maruyama trajectory on ``[0, T]``.

    ``noise`` is a :class:`NoiseSource` (read at ``sample``) or an explicit
    ``(N, m)`` array of increments.
    """
    return _single(mod, grid, regime, noise, sample, EM, guard)


def truncated_em_integrate(mod, grid: GridSpec, regime, noise, guard=DEFAULT_GUARD, H=None,
                           exponent=DEFAULT_EXPONENT, sample: int = 0) -> Trajectory:
    """Euler-Maruyama with coefficient arguments clamped to radius ``H*dt**exponent``."""
    return _single(mod, grid, regime, noise, sample, TRUNCATED_EM, guard, H, exponent)
