"""Invariant checks run by ``sfdetrunc validate`` and by the test-suite."""

from __future__ import annotations

import numpy as np

from .history import Aggregator, HistoryWindow, _weighted_rows, aggregate_naive
from .integrator import GridSpec, integrate_batch
from .measures import MASS_TOL, discretize
from .model import builtin
from .regimes import transition_matrix


def fast_naive_deviation(initial, dt, k, spec, states, resync_every=1024) -> float:
    """Largest relative gap between recursive and direct delay integrals.

    ``states`` is ``(B, N+1, n)``; the path is replayed through a fresh window
    and both evaluations are compared at every step. The gap is measured
    relative to ``sum_h w_h |T(X_h)| + tail |T(X_old)|``.
    """
    states = np.asarray(states, dtype=float)
    B = states.shape[0]
    w = HistoryWindow(initial, dt, k, batch=(B,))
    agg = Aggregator(w, spec, resync_every=resync_every)
    d = discretize(spec.measure, dt, k)
    worst = 0.0
    for j in range(states.shape[1]):
        if j > 0:
            agg.advance()
            w.push(states[:, j])
            agg.after_push()
        fast = agg.value()
        naive = aggregate_naive(w, d, spec)
        y = np.abs(spec.apply(w.ordered()))
        scale = _weighted_rows(y[:-1], d.weights) + d.tail * y[0]
        gap = np.abs(fast - naive) / np.maximum(scale, 1e-300)
        worst = max(worst, float(np.max(gap)))
    return worst


def mass_check(measure, dt, k):
    d = discretize(measure, dt, k)
    err = abs(d.total_mass - 1.0)
    return err <= MASS_TOL, f"|sum w + tail - 1| = {err:.2e} at dt={dt:g}, k={k}"


def generator_check(gen, dts=(1e-6, 1e-3, 0.1, 1.0)):
    worst_row = worst_semi = 0.0
    for dt in dts:
        P = transition_matrix(gen, dt).matrix
        P2 = transition_matrix(gen, 2 * dt).matrix
        worst_row = max(worst_row, float(np.max(np.abs(P.sum(axis=1) - 1.0))))
        worst_semi = max(worst_semi, float(np.max(np.abs(P2 - P @ P))))
    ok = worst_row <= 1e-12 and worst_semi <= 1e-10 and np.all(P >= 0)
    return ok, f"row-sum error {worst_row:.2e}, semigroup error {worst_semi:.2e}"


def deterministic_check(grid: GridSpec):
    """``dx = -x dt`` must reproduce ``(1 - dt)^N`` exactly up to rounding."""
    mod = builtin("linear_test", a=-1.0, sigma=0.0, c=0.0)
    N = grid.n_steps
    dB = np.zeros((1, N, 1))
    res = integrate_batch(mod, grid, np.ones((1, N + 1), dtype=np.int64), dB, record_every=None)
    expected = (1.0 - grid.dt) ** N
    err = abs(float(res.terminal[0, 0]) - expected)
    return err <= 1e-12, f"|X(T) - (1-dt)^N| = {err:.2e}"


def origin_check(mod):
    mod.check_origin()
    return True, "F(0,0,i,t) and G(0,0,i,t) finite on sampled (i, t)"


def fast_path_check(mod, grid: GridSpec, regimes, dB, scheme, H=None):
    res = integrate_batch(mod, grid, regimes, dB, scheme=scheme, H=H, on_blowup="mask")
    keep = res.blown_step < 0
    if not keep.any():
        return False, "every probe path blew up"
    worst = 0.0
    for spec in mod.aggregates:
        worst = max(worst, fast_naive_deviation(mod.initial, grid.dt, grid.k, spec, res.states[keep]))
    return worst <= 1e-10, f"max relative gap {worst:.2e} over {int(keep.sum())} paths"


def fmt(ok: bool, name: str, detail: str) -> str:
    return f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
