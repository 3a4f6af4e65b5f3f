"""Structured drift/diffusion coefficients and the built-in models.

Coefficients have the form ``F(x(t), y, i, t)`` and ``G(x(t), z, i, t)`` where
``y`` and ``z`` are lists of delay aggregates declared alongside the model.
All callables act on arrays with arbitrary leading batch dimensions:
``x`` has shape ``(..., n)``, each aggregate ``(..., n)``, the regime ``i``
(1-indexed) is an integer or an integer array of shape ``(...)``, and ``t`` is
a Python float. ``G`` returns shape ``(..., n, m)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFiniteError, UnknownModelError
from .history import DelayAggregateSpec, InitialSegment
from .measures import exp_moment, from_config
from .regimes import RegimeGenerator

GLOBAL_LIPSCHITZ = "GlobalLipschitz"
SUPERLINEAR = "Superlinear"


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    id: str
    dim: int
    noise_dim: int
    drift: Callable
    diffusion: Callable
    drift_aggregates: tuple = ()
    diffusion_aggregates: tuple = ()
    lipschitz_class: str = GLOBAL_LIPSCHITZ
    r: float = 0.2
    initial: InitialSegment = None
    generator: RegimeGenerator = None
    initial_state: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lipschitz_class not in (GLOBAL_LIPSCHITZ, SUPERLINEAR):
            raise ValueError(f"unknown lipschitz class {self.lipschitz_class!r}")
        if self.generator is None:
            object.__setattr__(self, "generator", RegimeGenerator(np.zeros((1, 1))))
        if not 1 <= self.initial_state <= self.generator.n_states:
            raise ValueError(f"initial state {self.initial_state} outside 1..{self.generator.n_states}")

    @property
    def aggregates(self):
        return tuple(self.drift_aggregates) + tuple(self.diffusion_aggregates)

    @property
    def moment_margin(self) -> float:
        """Distance from ``r`` to the nearest moment boundary of the aggregate measures."""
        bounds = [a.measure.moment_boundary for a in self.aggregates]
        return (min(bounds) if bounds else math.inf) - self.r

    def check_phase_space(self):
        """Every aggregate measure must have a finite exponential moment of order ``r``."""
        for a in self.aggregates:
            exp_moment(a.measure, self.r)

    def check_origin(self, times=np.linspace(0.0, 100.0, 101)):
        """``F(0, 0, i, t)`` and ``G(0, 0, i, t)`` must be finite."""
        x = np.zeros(self.dim)
        y = [np.zeros(self.dim) for _ in self.drift_aggregates]
        z = [np.zeros(self.dim) for _ in self.diffusion_aggregates]
        for i in range(1, self.generator.n_states + 1):
            for t in times:
                eval_drift(self, x, y, i, float(t))
                eval_diffusion(self, x, z, i, float(t))


def _finite(value, what):
    value = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{what} is not finite")
    return value


def eval_drift(mod: CoefficientModel, x, aggs, i, t) -> np.ndarray:
    if len(aggs) != len(mod.drift_aggregates):
        raise ValueError(f"{mod.id} drift takes {len(mod.drift_aggregates)} aggregates, got {len(aggs)}")
    x = np.asarray(x, dtype=float)
    aggs = [np.asarray(a, dtype=float) for a in aggs]
    return _finite(mod.drift(x, aggs, i, t), f"{mod.id} drift")


def eval_diffusion(mod: CoefficientModel, x, aggs, i, t) -> np.ndarray:
    if len(aggs) != len(mod.diffusion_aggregates):
        raise ValueError(f"{mod.id} diffusion takes {len(mod.diffusion_aggregates)} aggregates, got {len(aggs)}")
    x = np.asarray(x, dtype=float)
    aggs = [np.asarray(a, dtype=float) for a in aggs]
    return _finite(mod.diffusion(x, aggs, i, t), f"{mod.id} diffusion")


def _regime_index(i):
    return np.asarray(i, dtype=np.int64) - 1


# ----------------------------------------------------------------------------
# built-in models


def _volatility54(params):
    # f = c0 + c1*x + c3*x^3 per regime; g = scale * int x^2 dmu
    poly = np.array(params.get("drift_coeffs", [[1.0, 4.0, -4.0], [2.0, 3.0, -5.0]]), dtype=float)
    scale = np.array(params.get("diffusion_scale", [1.0, 0.5]), dtype=float)
    mu = from_config(params.get("mu", {"kind": "exp", "rate": 1.0}))
    gen = RegimeGenerator(params.get("generator", [[-1.0, 1.0], [2.0, -2.0]]))
    if poly.shape != (gen.n_states, 3) or scale.shape != (gen.n_states,):
        raise ValueError("volatility54 needs one coefficient row per regime")

    def drift(x, aggs, i, t):
        idx = _regime_index(i)
        c = poly[idx]
        return c[..., 0:1] + c[..., 1:2] * x + c[..., 2:3] * (x * x * x)

    def diffusion(x, aggs, i, t):
        s = scale[_regime_index(i)][..., None]
        return (s * aggs[0])[..., None]

    return CoefficientModel(
        id="volatility54",
        dim=1,
        noise_dim=1,
        drift=drift,
        diffusion=diffusion,
        diffusion_aggregates=(DelayAggregateSpec(mu, "square"),),
        lipschitz_class=SUPERLINEAR,
        r=float(params.get("r", 0.2)),
        initial=InitialSegment.from_config(
            params.get("initial", {"kind": "exp_scaled", "coeff": 1.0, "rate": 1.0}), 1, params.get("r", 0.2)
        ),
        generator=gen,
        initial_state=int(params.get("initial_state", 1)),
        params=dict(params),
    )


def _lotka55(params):
    mu = from_config(params.get("mu", {"kind": "exp", "rate": 1.0}))
    r = float(params.get("r", 0.2))
    initial = params.get(
        "initial",
        [{"kind": "exp_scaled", "coeff": 0.8, "rate": 1.0}, {"kind": "constant", "value": 0.6}],
    )

    def drift(x, aggs, i, t):
        x1, x2 = x[..., 0], x[..., 1]
        psi = aggs[0][..., 0]
        out = np.empty(np.shape(x))
        out[..., 0] = x1 * ((0.5 + 0.1 * math.sin(t)) - 0.8 * x1 - 0.2 * x2)
        out[..., 1] = x2 * ((0.3 + 0.2 * math.sin(2.0 * t)) - 0.6 * x2 - 0.12 * psi)
        return out

    def diffusion(x, aggs, i, t):
        out = np.zeros(np.shape(x) + (2,))
        out[..., 0, 0] = 0.5 * x[..., 0]
        out[..., 1, 1] = 0.5 * x[..., 1]
        return out

    return CoefficientModel(
        id="lotka55",
        dim=2,
        noise_dim=2,
        drift=drift,
        diffusion=diffusion,
        drift_aggregates=(DelayAggregateSpec(mu, "identity"),),
        lipschitz_class=SUPERLINEAR,
        r=r,
        initial=InitialSegment.from_config(initial, 2, r),
        params=dict(params),
    )


def _linear_test(params):
    a = float(params.get("a", 0.5))
    sigma = float(params.get("sigma", 0.3))
    c = float(params.get("c", 0.0))
    mu = from_config(params.get("aggregate", {"kind": "dirac0"}))
    r = float(params.get("r", 0.2))
    x0 = float(params.get("x0", 1.0))
    initial = params.get("initial", {"kind": "constant", "value": x0})

    if c == 0.0:
        def drift(x, aggs, i, t):
            return a * x
    else:
        def drift(x, aggs, i, t):
            return a * x + c * aggs[0]

    def diffusion(x, aggs, i, t):
        return (sigma * x)[..., None]

    gen = params.get("generator")
    return CoefficientModel(
        id="linear_test",
        dim=1,
        noise_dim=1,
        drift=drift,
        diffusion=diffusion,
        drift_aggregates=(DelayAggregateSpec(mu, "identity"),),
        lipschitz_class=GLOBAL_LIPSCHITZ,
        r=r,
        initial=InitialSegment.from_config(initial, 1, r),
        generator=RegimeGenerator(gen) if gen is not None else None,
        initial_state=int(params.get("initial_state", 1)),
        params=dict(params),
    )


BUILTINS = {
    "volatility54": _volatility54,
    "lotka55": _lotka55,
    "linear_test": _linear_test,
}


def builtin(id: str, params: dict | None = None, **overrides) -> CoefficientModel:
    """Construct a built-in model. Parameters not given take their defaults.

    ``volatility54`` is the two-regime cubic-drift volatility equation with
    diffusion ``scale_i * int x(t+u)^2 mu(du)``, ``mu(du) = e^u du``,
    generator ``[[-1, 1], [2, -2]]``, ``xi(u) = e^u`` and ``r = 1/5``.
    ``lotka55`` is the two-species Lotka-Volterra system whose second species
    feels ``int x_1(t+u) mu(du)``; ``x_2`` has no delayed term so its history
    is held at the constant ``x_2(0) = 0.6``. ``linear_test`` is
    ``dx = (a x + c psi) dt + sigma x dB`` with ``psi`` an identity aggregate.
    """
    try:
        factory = BUILTINS[id]
    except KeyError:
        raise UnknownModelError(f"unknown model {id!r}; choose from {sorted(BUILTINS)}") from None
    p = dict(params or {})
    p.update(overrides)
    return factory(p)
