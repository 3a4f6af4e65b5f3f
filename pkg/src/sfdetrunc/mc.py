"""Coupled Monte Carlo error studies in the truncation horizon and the step size.

All runs inside one study share, per sample, the same Brownian path and the
same regime path; only ``k`` (or ``dt``) changes. Per-sample errors are
gathered into one array ordered by sample index before any reduction, so the
numbers do not depend on batch size or on the number of worker threads.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import integrator as integ
from . import streams
from .errors import BlowUpError, DegenerateFitError
from .integrator import GridSpec, NoiseSource, integrate_batch, regime_paths, resolve_scheme
from .model import CoefficientModel


@dataclass(frozen=True)
class ErrorEstimate:
    param: float
    mse: float
    stderr: float
    samples: int

    @property
    def rmse(self) -> float:
        return math.sqrt(self.mse)


@dataclass
class StudyResult:
    kind: str
    estimates: list
    slope: float | None
    intercept: float | None
    residual: float | None
    metadata: dict = field(default_factory=dict)
    errors: np.ndarray | None = field(default=None, repr=False)

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("param,mse,rmse,stderr,samples\n")
            for e in self.estimates:
                fh.write("%.17g,%.17g,%.17g,%.17g,%d\n" % (e.param, e.mse, e.rmse, e.stderr, e.samples))

    def summary(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "config": self.metadata,
        }

    def to_json(self, path):
        with open(path, "w", newline="\n") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def fit_loglinear(points, base: float = math.e):
    """Least-squares line through ``(x, log_base(v))``.

    Returns ``(slope, intercept, residual)`` with ``residual`` the root mean
    square of the fit residuals in log units.
    """
    pts = list(points)
    if len(pts) < 3:
        raise DegenerateFitError("need at least three points")
    x = np.array([p[0] for p in pts], dtype=float)
    v = np.array([p[1] for p in pts], dtype=float)
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise DegenerateFitError("values must be positive and finite")
    if len(np.unique(x)) != len(x):
        raise DegenerateFitError("abscissas must be distinct")
    y = np.log(v) / math.log(base)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid * resid)))


def _chunks(n, size):
    return [list(range(s, min(s + size, n))) for s in range(0, n, size)]


def _gather(fn, samples, batch_size, workers):
    chunks = _chunks(samples, batch_size)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(c) for c in chunks]
    return np.concatenate(parts, axis=-1)


def _estimates(params, errors):
    out = []
    n = errors.shape[1]
    for p, row in zip(params, errors):
        mse = float(np.mean(row))
        se = float(np.std(row, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        out.append(ErrorEstimate(float(p), mse, se, n))
    return out


def _seeds(seed, noise_seed, regime_seed):
    if noise_seed is None:
        noise_seed = streams.derive_seed(seed, streams.NOISE)
    if regime_seed is None:
        regime_seed = streams.derive_seed(seed, streams.REGIME)
    return int(noise_seed), int(regime_seed)


def _sq_error(a, b, sup):
    d = a - b
    e = np.sum(d * d, axis=-1)
    return np.max(e, axis=1) if sup else e[:, -1]


def _run(mod, grid, regimes, dB, scheme, H, guard, samples, param, record_every):
    try:
        return integrate_batch(mod, grid, regimes, dB, scheme=scheme, H=H, guard=guard,
                               record_every=record_every, samples=samples).states
    except BlowUpError as exc:
        raise BlowUpError(f"{exc} [study parameter {param}]", sample=exc.sample, step=exc.step,
                          param=param) from None


def k_study(mod: CoefficientModel, k_values, k_ref: int, grid: GridSpec, samples: int, seed: int,
            scheme="auto", H=None, guard=integ.DEFAULT_GUARD, batch_size=256, workers=1,
            sup_error=False, noise_seed=None, regime_seed=None) -> StudyResult:
    """Mean-square gap between horizon ``k`` and horizon ``k_ref`` at time ``T``.

    ``grid`` supplies ``k1`` and ``T``; its own ``k`` is ignored. The slope is
    fitted to ``ln(mse)`` against ``k``.
    """
    k_values = [int(k) for k in k_values]
    if not (k_ref > max(k_values) > grid.T):
        raise ValueError(f"need k_ref > max(k) > T, got k_ref={k_ref}, k={k_values}, T={grid.T}")
    if samples < 2:
        raise ValueError("a study needs at least two samples")
    scheme = resolve_scheme(mod, scheme)
    noise_seed, regime_seed = _seeds(seed, noise_seed, regime_seed)
    ref_grid = GridSpec(grid.k1, int(k_ref), grid.T)
    if scheme == integ.TRUNCATED_EM and H is None:
        H = integ.default_truncation_scale(mod, ref_grid)
    noise = NoiseSource(noise_seed, mod.noise_dim, grid.dt, grid.T)
    rec = 1 if sup_error else None

    def work(chunk):
        dB = noise.fine_batch(chunk)
        regimes = regime_paths(mod, grid.dt, grid.n_steps, regime_seed, chunk)
        ref = _run(mod, ref_grid, regimes, dB, scheme, H, guard, chunk, k_ref, rec)
        out = np.empty((len(k_values), len(chunk)))
        for row, k in enumerate(k_values):
            g = GridSpec(grid.k1, k, grid.T)
            out[row] = _sq_error(_run(mod, g, regimes, dB, scheme, H, guard, chunk, k, rec), ref, sup_error)
        return out

    errors = _gather(work, samples, batch_size, workers)
    est = _estimates(k_values, errors)
    fit = _maybe_fit([(e.param, e.mse) for e in est])
    meta = {
        "study": "k", "model": mod.id, "model_params": mod.params, "scheme": scheme, "H": H,
        "k_values": k_values, "k_ref": int(k_ref), "dt": grid.dt, "T": grid.T, "samples": samples,
        "seed": seed, "noise_seed": noise_seed, "regime_seed": regime_seed, "guard": guard,
        "sup_error": sup_error,
    }
    return StudyResult("k", est, *fit, metadata=meta, errors=errors)


def dt_study(mod: CoefficientModel, dt_values, dt_ref: float, k: int, T: float, samples: int, seed: int,
             scheme="auto", H=None, guard=integ.DEFAULT_GUARD, batch_size=256, workers=1,
             sup_error=False, noise_seed=None, regime_seed=None) -> StudyResult:
    """Mean-square gap between step ``dt`` and step ``dt_ref`` at time ``T``.

    Every coarse run sums the reference increments and subsamples the
    reference regime path. The slope is fitted to ``log2(rmse)`` against
    ``log2(dt)``.
    """
    dt_values = [float(d) for d in dt_values]
    factors = [integ.dyadic_factor(d, dt_ref) for d in dt_values]
    if samples < 1:
        raise ValueError("a study needs at least one sample")
    scheme = resolve_scheme(mod, scheme)
    noise_seed, regime_seed = _seeds(seed, noise_seed, regime_seed)
    ref_grid = GridSpec.from_dt(dt_ref, k, T)
    grids = [GridSpec.from_dt(d, k, T) for d in dt_values]
    if scheme == integ.TRUNCATED_EM and H is None:
        H = integ.default_truncation_scale(mod, ref_grid)
    noise = NoiseSource(noise_seed, mod.noise_dim, dt_ref, T)
    if sup_error:
        coarsest = max(factors)
        for f in factors:
            if coarsest % f:
                raise ValueError("sup-over-grid errors need nested step sizes")
    ref_rec = 1 if sup_error else None

    def work(chunk):
        fine = noise.fine_batch(chunk)
        regimes = regime_paths(mod, dt_ref, ref_grid.n_steps, regime_seed, chunk)
        ref = _run(mod, ref_grid, regimes, fine, scheme, H, guard, chunk, dt_ref, ref_rec)
        out = np.empty((len(dt_values), len(chunk)))
        for row, (g, f) in enumerate(zip(grids, factors)):
            dB = integ.coarse_increments(fine, f)
            coarse = _run(mod, g, regimes[:, ::f], dB, scheme, H, guard, chunk, g.dt, 1 if sup_error else None)
            target = ref[:, ::f] if sup_error else ref
            out[row] = _sq_error(coarse, target, sup_error)
        return out

    errors = _gather(work, samples, batch_size, workers)
    est = _estimates(dt_values, errors)
    fit = _maybe_fit([(math.log2(e.param), e.rmse) for e in est], base=2.0)
    meta = {
        "study": "dt", "model": mod.id, "model_params": mod.params, "scheme": scheme, "H": H,
        "dt_values": dt_values, "dt_ref": dt_ref, "k": int(k), "T": T, "samples": samples,
        "seed": seed, "noise_seed": noise_seed, "regime_seed": regime_seed, "guard": guard,
        "sup_error": sup_error,
    }
    return StudyResult("dt", est, *fit, metadata=meta, errors=errors)


def _maybe_fit(points, base=math.e):
    # zero errors (e.g. a truncation that changes nothing) leave nothing to fit
    if len(points) < 3 or any(v <= 0 for _, v in points):
        return None, None, None
    return fit_loglinear(points, base=base)


@dataclass
class MomentProbe:
    value: float
    stderr: float
    time: float
    means: np.ndarray


def moment_probe(mod: CoefficientModel, grid: GridSpec, samples: int, p: float, seed: int,
                 scheme="auto", H=None, guard=integ.DEFAULT_GUARD, batch_size=256, workers=1) -> MomentProbe:
    """Largest sample mean of ``|X(t_j)|^p`` over the grid."""
    if p < 2:
        raise ValueError("moment order must be at least 2")
    scheme = resolve_scheme(mod, scheme)
    noise_seed, regime_seed = _seeds(seed, None, None)
    noise = NoiseSource(noise_seed, mod.noise_dim, grid.dt, grid.T)
    if scheme == integ.TRUNCATED_EM and H is None:
        H = integ.default_truncation_scale(mod, grid)

    def work(chunk):
        dB = noise.fine_batch(chunk)
        regimes = regime_paths(mod, grid.dt, grid.n_steps, regime_seed, chunk)
        x = _run(mod, grid, regimes, dB, scheme, H, guard, chunk, grid.k, 1)
        return np.sum(x * x, axis=-1).T  # (N+1, B)

    sq = _gather(work, samples, batch_size, workers).T  # (samples, N+1)
    vals = sq ** (p / 2.0)
    means = np.mean(vals, axis=0)
    j = int(np.argmax(means))
    se = float(np.std(vals[:, j], ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return MomentProbe(float(means[j]), se, float(j * grid.dt), means)
