"""Probability measures on the negative half-line and their grid discretization.

Three closed-form kinds are supported: the unit atom at zero, the exponential
density ``a * exp(a*u)`` on ``u <= 0`` and finite mixtures of those. Masses of
grid cells are taken over half-open intervals ``(t_h, t_{h+1}]`` so that the
atom at zero always lands in the last cell before the present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergentMomentError, MassError

MASS_TOL = 1e-12


class DelayMeasure:
    """Common interface of the measure kinds below."""

    kind: str

    def exp_moment(self, b: float) -> float:
        raise NotImplementedError

    def interval_mass(self, a, b):
        raise NotImplementedError

    def tail_mass(self, k: float) -> float:
        raise NotImplementedError

    @property
    def moment_boundary(self) -> float:
        """Supremum of the ``b`` for which the exponential moment is finite."""
        raise NotImplementedError

    def leaves(self):
        """Flatten into ``[(weight, leaf_measure), ...]``."""
        return [(1.0, self)]

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class DiracAtZero(DelayMeasure):
    kind: str = field(default="dirac0", init=False)

    def exp_moment(self, b):
        return 1.0

    def interval_mass(self, a, b):
        b = np.asarray(b, dtype=float)
        return np.where(b == 0.0, 1.0, 0.0)

    def tail_mass(self, k):
        return 0.0

    @property
    def moment_boundary(self):
        return math.inf

    def to_config(self):
        return {"kind": "dirac0"}


@dataclass(frozen=True)
class ExponentialDensity(DelayMeasure):
    rate: float = 1.0
    kind: str = field(default="exp", init=False)

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"exponential rate must be positive, got {self.rate}")

    def exp_moment(self, b):
        if b >= self.rate:
            raise DivergentMomentError(
                f"exp moment of order {b} diverges for rate {self.rate}"
            )
        return self.rate / (self.rate - b)

    def interval_mass(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        # exp(rate*b) - exp(rate*a), written to keep relative accuracy on short cells
        return -np.exp(self.rate * b) * np.expm1(self.rate * (a - b))

    def tail_mass(self, k):
        return math.exp(-self.rate * k)

    @property
    def moment_boundary(self):
        return self.rate

    def to_config(self):
        return {"kind": "exp", "rate": self.rate}


@dataclass(frozen=True)
class Mixture(DelayMeasure):
    parts: tuple = ()
    kind: str = field(default="mixture", init=False)

    def __post_init__(self):
        parts = tuple((float(w), m) for w, m in self.parts)
        object.__setattr__(self, "parts", parts)
        if not parts:
            raise MassError("mixture needs at least one component")
        if any(w < 0 for w, _ in parts):
            raise MassError("mixture weights must be nonnegative")
        total = math.fsum(w for w, _ in parts)
        if abs(total - 1.0) > MASS_TOL:
            raise MassError(f"mixture weights sum to {total!r}, not 1")

    def exp_moment(self, b):
        return math.fsum(w * m.exp_moment(b) for w, m in self.parts)

    def interval_mass(self, a, b):
        out = 0.0
        for w, m in self.parts:
            out = out + w * m.interval_mass(a, b)
        return out

    def tail_mass(self, k):
        return math.fsum(w * m.tail_mass(k) for w, m in self.parts)

    @property
    def moment_boundary(self):
        return min(m.moment_boundary for _, m in self.parts)

    def leaves(self):
        out = []
        for w, m in self.parts:
            out.extend((w * lw, leaf) for lw, leaf in m.leaves())
        return out

    def to_config(self):
        return {"kind": "mixture", "parts": [[w, m.to_config()] for w, m in self.parts]}


@dataclass(frozen=True)
class DiscretizedMeasure:
    """Cell masses of a measure on the grid ``t_h = h*dt``, ``h = -k*k1 .. -1``.

    ``weights[0]`` belongs to the oldest cell ``(t_{-k*k1}, t_{-k*k1+1}]`` and
    ``weights[-1]`` to ``(t_{-1}, 0]``. ``tail`` is the mass of ``(-inf, -k]``.
    """

    dt: float
    k: int
    weights: np.ndarray
    tail: float

    @property
    def k1(self) -> int:
        return int(round(1.0 / self.dt))

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights.tolist()) + self.tail


def exp_moment(m: DelayMeasure, b: float) -> float:
    """``int exp(-b*u) m(du)`` over ``(-inf, 0]``; raises if infinite."""
    if b < 0:
        raise ValueError("moment order b must be nonnegative")
    return m.exp_moment(b)


def interval_mass(m: DelayMeasure, a: float, b: float) -> float:
    """Mass of the half-open interval ``(a, b]`` with ``a < b <= 0``."""
    if not a < b <= 0:
        raise ValueError(f"need a < b <= 0, got ({a}, {b}]")
    return float(m.interval_mass(a, b))


def tail_mass(m: DelayMeasure, k: float) -> float:
    """Mass of ``(-inf, -k]``."""
    if not k > 0:
        raise ValueError("k must be positive")
    return float(m.tail_mass(k))


def check_step(dt: float) -> int:
    """Return ``k1`` for ``dt = 1/k1``; reject steps that are not reciprocals."""
    if not 0 < dt <= 1:
        raise ValueError(f"step must lie in (0, 1], got {dt}")
    k1 = int(round(1.0 / dt))
    if abs(k1 * dt - 1.0) > 1e-12:
        raise ValueError(f"step {dt} is not 1/k1 for an integer k1")
    return k1


def discretize(m: DelayMeasure, dt: float, k: int) -> DiscretizedMeasure:
    k1 = check_step(dt)
    if int(k) != k or k < 1:
        raise ValueError(f"truncation horizon must be a positive integer, got {k}")
    k = int(k)
    h = np.arange(-k * k1, 0)
    weights = np.asarray(m.interval_mass(h * dt, (h + 1) * dt), dtype=float)
    weights = np.ascontiguousarray(np.broadcast_to(weights, h.shape))
    weights.setflags(write=False)
    d = DiscretizedMeasure(dt=dt, k=k, weights=weights, tail=float(m.tail_mass(k)))
    if abs(d.total_mass - 1.0) > MASS_TOL or np.any(weights < 0) or d.tail < 0:
        raise MassError(f"discretization lost mass: total {d.total_mass!r}")
    return d


def from_config(cfg) -> DelayMeasure:
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValueError(f"measure config needs a 'kind': {cfg!r}")
    kind = cfg["kind"]
    if kind == "dirac0":
        return DiracAtZero()
    if kind == "exp":
        return ExponentialDensity(float(cfg.get("rate", 1.0)))
    if kind == "mixture":
        return Mixture(tuple((w, from_config(sub)) for w, sub in cfg["parts"]))
    raise ValueError(f"unknown measure kind {kind!r}")
