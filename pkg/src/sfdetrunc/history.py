"""Grid history of a path over the truncation window ``[t - k, t]``.

A :class:`HistoryWindow` keeps the last ``k*k1 + 1`` grid states in a ring
buffer. Values older than ``t - k`` are never stored: delay integrals charge
the mass of ``(-inf, -k]`` to the oldest stored sample, which is exactly the
effect of freezing the path at ``t - k``.

Windows may carry a leading batch shape so that many independent sample paths
advance together; every operation acts elementwise over the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConsistencyError, FastPathUnavailable, GridMismatchError
from .measures import DelayMeasure, DiracAtZero, DiscretizedMeasure, ExponentialDensity, check_step, discretize


# ----------------------------------------------------------------------------
# initial segments


def _component(cfg) -> Callable[[np.ndarray], np.ndarray]:
    kind = cfg.get("kind")
    if kind == "exp_scaled":
        coeff, rate = float(cfg.get("coeff", 1.0)), float(cfg.get("rate", 1.0))
        return lambda u: coeff * np.exp(rate * u)
    if kind == "constant":
        value = float(cfg["value"])
        return lambda u: np.full(np.shape(u), value)
    if kind == "polynomial":
        coeffs = [float(c) for c in cfg["coeffs"]]
        return lambda u: np.polynomial.polynomial.polyval(u, coeffs)
    raise ValueError(f"unknown initial segment kind {kind!r}")


@dataclass(frozen=True, eq=False)
class InitialSegment:
    """Closed-form initial path ``u -> xi(u)`` for ``u <= 0``.

    ``beta`` is the claimed Hoelder exponent; it is carried as metadata only.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    dim: int
    r: float
    beta: float = 0.5
    config: object = None

    def __call__(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.asarray(self.evaluator(u), dtype=float)
        return out.reshape(u.shape + (self.dim,))

    @classmethod
    def from_config(cls, cfg, dim: int, r: float, beta: float = 0.5) -> "InitialSegment":
        """``cfg`` is one component spec (used for every coordinate) or a list of them."""
        specs = list(cfg) if isinstance(cfg, (list, tuple)) else [cfg] * dim
        if len(specs) != dim:
            raise ValueError(f"initial segment has {len(specs)} components, model needs {dim}")
        parts = [_component(s) for s in specs]

        def evaluator(u):
            return np.stack([p(u) for p in parts], axis=-1)

        return cls(evaluator, dim, float(r), beta, cfg)


# ----------------------------------------------------------------------------
# delay aggregates


TRANSFORMS = {
    "identity": lambda y: y,
    "square": lambda y: y * y,
}


@dataclass(frozen=True)
class DelayAggregateSpec:
    """A delay functional ``int transform(x(t+u)) measure(du)``."""

    measure: DelayMeasure
    transform: str = "identity"

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")

    def apply(self, y):
        return TRANSFORMS[self.transform](y)


# ----------------------------------------------------------------------------
# the window


class HistoryWindow:
    def __init__(self, initial: InitialSegment, dt: float, k: int, batch=()):
        self.k1 = check_step(dt)
        self.dt = dt
        self.k = int(k)
        self.K = self.k * self.k1
        self.dim = initial.dim
        self.batch = tuple(batch)
        u = np.arange(-self.K, 1) * dt
        xi = initial(u)
        if not np.all(np.isfinite(xi)):
            raise ValueError("initial segment is not finite on the truncation window")
        shape = (self.K + 1,) + self.batch + (self.dim,)
        self._buf = np.empty(shape)
        self._buf[...] = xi.reshape((self.K + 1,) + (1,) * len(self.batch) + (self.dim,))
        self._pos = 0  # slot of the oldest sample
        self.index = 0  # grid index j of the newest sample

    def __len__(self):
        return self.K + 1

    @property
    def newest(self) -> np.ndarray:
        return self._buf[(self._pos - 1) % (self.K + 1)]

    @property
    def oldest(self) -> np.ndarray:
        return self._buf[self._pos]

    def sample(self, h: int) -> np.ndarray:
        """State at grid time ``t_{j+h}`` for ``-K <= h <= 0``."""
        if not -self.K <= h <= 0:
            raise IndexError(f"lag {h} outside the window [-{self.K}, 0]")
        return self._buf[(self._pos + self.K + h) % (self.K + 1)]

    def ordered(self) -> np.ndarray:
        """Copy of the window from oldest to newest."""
        return np.concatenate((self._buf[self._pos:], self._buf[: self._pos]))

    def push(self, x) -> "HistoryWindow":
        self._buf[self._pos] = x
        self._pos = (self._pos + 1) % (self.K + 1)
        self.index += 1
        return self

    def lags(self) -> np.ndarray:
        """Grid offsets ``u_h = h*dt`` matching :meth:`ordered`."""
        return np.arange(-self.K, 1) * self.dt


def fading_norm(w: HistoryWindow, r: float):
    """Grid restriction of ``sup_u exp(r*u) |x(t+u)|`` over ``u in [-k, 0]``."""
    if not r > 0:
        raise ValueError("fading rate must be positive")
    x = w.ordered()
    mag = np.sqrt(np.sum(x * x, axis=-1))
    scale = np.exp(r * w.lags()).reshape((-1,) + (1,) * len(w.batch))
    out = np.max(scale * mag, axis=0)
    return float(out) if out.ndim == 0 else out


def _weighted_rows(y: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # Reduce along a contiguous trailing axis so every batch element sees the
    # same summation order whatever the batch size.
    rows = np.ascontiguousarray(np.moveaxis(y, 0, -1))
    return np.sum(rows * weights, axis=-1)


def _check_grid(w: HistoryWindow, d: DiscretizedMeasure):
    if d.k != w.k or check_step(d.dt) != w.k1:
        raise GridMismatchError(
            f"measure grid (dt={d.dt}, k={d.k}) differs from window (dt={w.dt}, k={w.k})"
        )


def aggregate_naive(w: HistoryWindow, d: DiscretizedMeasure, spec: DelayAggregateSpec) -> np.ndarray:
    """Direct evaluation of the discrete delay integral.

    ``sum_h w_h * T(X(t_{j+h})) + tail * T(X(t_{j-K}))`` with ``h = -K..-1``.
    """
    _check_grid(w, d)
    y = spec.apply(w.ordered())
    return _weighted_rows(y[:-1], d.weights) + d.tail * y[0]


# ----------------------------------------------------------------------------
# recursive convolution for exponential kernels


class _ExponentialKernel:
    """Constants of the geometric recurrence for ``a * exp(a*u)`` on the grid.

    With ``q = exp(-a*dt)`` the cell weights are ``c*q**(m-1)`` for the cell
    ``m`` steps back, ``c = 1 - q``, and the tail is ``q**K``. The partial sum
    ``S_j = sum_m c*q**(m-1) Y_{j-m}`` obeys
    ``S_{j+1} = q*S_j + c*Y_j - c*q**K * Y_{j-K}``.
    """

    def __init__(self, rate: float, dt: float, k: int):
        self.q = math.exp(-rate * dt)
        self.c = -math.expm1(-rate * dt)
        self.tail = math.exp(-rate * k)
        self.c_tail = self.c * self.tail

    def value(self, carry, y_old):
        return carry + self.tail * y_old

    def advance(self, carry, y_new, y_old):
        return self.q * carry + self.c * y_new - self.c_tail * y_old


def _require_exponential(spec: DelayAggregateSpec) -> ExponentialDensity:
    if not isinstance(spec.measure, ExponentialDensity):
        raise FastPathUnavailable(
            f"no recursive convolution for measure kind {spec.measure.kind!r}"
        )
    return spec.measure


def init_exponential_carry(w: HistoryWindow, spec: DelayAggregateSpec) -> np.ndarray:
    """Seed the running sum with one direct pass over the window."""
    m = _require_exponential(spec)
    d = discretize(m, w.dt, w.k)
    return _weighted_rows(spec.apply(w.ordered())[:-1], d.weights)


def aggregate_fast_exponential(w: HistoryWindow, spec: DelayAggregateSpec, carry):
    """O(1) delay integral for an exponential measure.

    Returns ``(value at the window's current time, carry for the next time)``;
    push the next state only after this call.
    """
    m = _require_exponential(spec)
    kern = _ExponentialKernel(m.rate, w.dt, w.k)
    y_old = spec.apply(w.oldest)
    value = kern.value(carry, y_old)
    return value, kern.advance(carry, spec.apply(w.newest), y_old)


# ----------------------------------------------------------------------------
# per-step aggregation used by the integrator


@dataclass
class _Leaf:
    weight: float
    kind: str
    kernel: _ExponentialKernel = None
    cells: DiscretizedMeasure = None
    carry: np.ndarray = None


class Aggregator:
    """Evaluates one delay aggregate at every step of an integration.

    Measures are split into leaves: atoms at zero read the previous sample,
    exponential densities run the geometric recurrence, anything else is summed
    directly. Recurrence leaves are re-seeded from a direct sum every
    ``resync_every`` steps; a relative gap above ``tol`` raises
    :class:`ConsistencyError`.
    """

    def __init__(self, w: HistoryWindow, spec: DelayAggregateSpec, resync_every=1024, tol=1e-8):
        self.w = w
        self.spec = spec
        self.resync_every = resync_every
        self.tol = tol
        self._steps = 0
        self.leaves = []
        for weight, leaf in spec.measure.leaves():
            if weight == 0.0:
                continue
            if isinstance(leaf, DiracAtZero):
                self.leaves.append(_Leaf(weight, "dirac"))
            elif isinstance(leaf, ExponentialDensity):
                node = _Leaf(weight, "exp", kernel=_ExponentialKernel(leaf.rate, w.dt, w.k),
                             cells=discretize(leaf, w.dt, w.k))
                self.leaves.append(node)
            else:
                self.leaves.append(_Leaf(weight, "direct", cells=discretize(leaf, w.dt, w.k)))
        self._resync(check=False)

    def _direct_partial(self, leaf, y):
        return _weighted_rows(y[:-1], leaf.cells.weights)

    def _resync(self, check=True):
        if not any(l.kind == "exp" for l in self.leaves):
            return
        y = self.spec.apply(self.w.ordered())
        for leaf in self.leaves:
            if leaf.kind != "exp":
                continue
            exact = self._direct_partial(leaf, y)
            if check:
                scale = _weighted_rows(np.abs(y[:-1]), leaf.cells.weights)
                gap = np.abs(leaf.carry - exact)
                if np.any(gap > self.tol * scale + 1e-300):
                    worst = float(np.max(gap / np.maximum(scale, 1e-300)))
                    raise ConsistencyError(f"recursive convolution drifted by {worst:.3e} (relative)")
            leaf.carry = exact

    def _leaf_value(self, leaf, y_old):
        if leaf.kind == "dirac":
            return self.spec.apply(self.w.sample(-1))
        if leaf.kind == "exp":
            return leaf.kernel.value(leaf.carry, y_old)
        y = self.spec.apply(self.w.ordered())
        return self._direct_partial(leaf, y) + leaf.cells.tail * y[0]

    def value(self) -> np.ndarray:
        y_old = self.spec.apply(self.w.oldest)
        if len(self.leaves) == 1 and self.leaves[0].weight == 1.0:
            return self._leaf_value(self.leaves[0], y_old)
        out = None
        for leaf in self.leaves:
            v = leaf.weight * self._leaf_value(leaf, y_old)
            out = v if out is None else out + v
        return out

    def advance(self):
        """Move carries from time ``j`` to ``j+1``. Call before pushing ``X(t_{j+1})``."""
        y_old = y_new = None
        for leaf in self.leaves:
            if leaf.kind == "exp":
                if y_old is None:
                    y_old = self.spec.apply(self.w.oldest)
                    y_new = self.spec.apply(self.w.newest)
                leaf.carry = leaf.kernel.advance(leaf.carry, y_new, y_old)
        self._steps += 1

    def after_push(self):
        if self.resync_every and self._steps % self.resync_every == 0:
            self._resync(check=True)
