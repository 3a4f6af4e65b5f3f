"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 invariant or slope-band
failure, 4 blow-up (every simulated sample, or any path inside a study).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__, diagnostics, mc
from . import config as cfgmod
from .errors import BlowUpError, ConfigError, MassError, NonFiniteError, NonGeneratorError, SfdeError
from .integrator import (
    GridSpec,
    NoiseSource,
    Trajectory,
    default_truncation_scale,
    integrate_batch,
    regime_paths,
    resolve_scheme,
)

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_BLOWUP = 0, 2, 3, 4

K_PLOT = """\
# Mean-square truncation error against the horizon k.
set datafile separator ','
set terminal pngcairo size 800,600
set output 'study.png'
set logscale y
set xlabel 'truncation horizon k'
set ylabel 'E|X^k(T) - X^{k_ref}(T)|^2'
set key top right
plot 'study.csv' every ::1 using 1:2:4 with yerrorlines title 'mean square error'
"""

DT_PLOT = """\
# Root-mean-square error against the step size, with a fitted power law.
set datafile separator ','
set terminal pngcairo size 800,600
set output 'study.png'
set logscale xy 2
set xlabel 'step size'
set ylabel '(E|X_dt(T) - X_ref(T)|^2)^{1/2}'
set key top left
f(x) = c * x**p
c = 1; p = 0.5
fit f(x) 'study.csv' every ::1 using 1:3 via c, p
plot 'study.csv' every ::1 using 1:3 with linespoints title 'rmse', \\
     f(x) title sprintf('fit: slope %.3f', p), \\
     (c * 2**(-5*0.5)) * (x / 2**-5)**0.5 dashtype 2 title 'slope 1/2'
"""


def _write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _setup(cfg, want_study):
    mod = cfgmod.checked_model(cfg)
    kind = cfg["study"]["kind"]
    if want_study and kind == "none":
        raise ConfigError("a study command needs study.kind 'k' or 'dt'", "study/kind")
    if not want_study and kind != "none":
        raise ConfigError("simulate runs without a study; set study.kind to 'none'", "study/kind")
    return mod


def cmd_simulate(cfg, out=None) -> int:
    mod = _setup(cfg, want_study=False)
    g = cfg["grid"]
    grid = GridSpec(g["k1"], g["k"], g["T"])
    scheme = resolve_scheme(mod, cfg["scheme"])
    noise_seed, regime_seed = cfgmod.seeds(cfg)
    H = cfg["truncation"]["H"]
    if scheme == "truncated-em" and H is None:
        H = default_truncation_scale(mod, grid)
    indices = cfg["sample_indices"] if cfg["sample_indices"] is not None else list(range(cfg["samples"]))
    noise = NoiseSource(noise_seed, mod.noise_dim, grid.dt, grid.T)
    outdir = cfgmod.output_dir(cfg, out)
    os.makedirs(outdir, exist_ok=True)

    records = []
    for s in indices:
        regimes = regime_paths(mod, grid.dt, grid.n_steps, regime_seed, [s])
        res = integrate_batch(mod, grid, regimes, noise.increments(s, grid.dt)[None], scheme=scheme, H=H,
                              exponent=cfg["truncation"]["exponent"], guard=cfg["guard"], samples=[s],
                              on_blowup="mask")
        traj = Trajectory(grid.times(), res.states[0], regimes[0], scheme, grid)
        name = f"trajectory_{s:05d}.csv"
        traj.to_csv(os.path.join(outdir, name))
        step = int(res.blown_step[0])
        status = "ok" if step < 0 else ("nonfinite" if res.nonfinite[0] else "blowup")
        rec = {"index": s, "file": name, "status": status}
        if step >= 0:
            rec["step"] = step
            print(f"sample {s}: {status} at step {step}", file=sys.stderr)
        records.append(rec)

    manifest = {
        "version": __version__,
        "config": cfgmod.replay_config(cfg),
        "derived": {
            "scheme": scheme, "H": H, "dt": grid.dt, "n_steps": grid.n_steps,
            "noise_seed": noise_seed, "regime_seed": regime_seed,
            "seed_derivation": "SeedSequence(master, spawn_key=(0, purpose)); purpose 1=noise, 2=regime",
        },
        "samples": records,
    }
    _write_json(os.path.join(outdir, "manifest.json"), manifest)
    if records and all(r["status"] != "ok" for r in records):
        return EXIT_BLOWUP
    return EXIT_OK


def run_study(cfg) -> mc.StudyResult:
    mod = _setup(cfg, want_study=True)
    g, st = cfg["grid"], cfg["study"]
    noise_seed, regime_seed = cfgmod.seeds(cfg)
    common = dict(
        scheme=cfg["scheme"], H=cfg["truncation"]["H"], guard=cfg["guard"], batch_size=cfg["batch_size"],
        workers=cfg["workers"], sup_error=cfg["sup_error"], noise_seed=noise_seed, regime_seed=regime_seed,
    )
    seed = cfg["seeds"]["master"]
    if st["kind"] == "k":
        grid = GridSpec(g["k1"], max(g["k"], st["k_ref"]), g["T"])
        res = mc.k_study(mod, st["k_values"], st["k_ref"], grid, cfg["samples"], seed, **common)
    else:
        res = mc.dt_study(mod, st["dt_values"], st["dt_ref"], g["k"], g["T"], cfg["samples"], seed, **common)
    res.metadata["run_config"] = cfgmod.replay_config(cfg)
    return res


def _slope_band(cfg):
    band = cfg["study"].get("slope_band")
    if band is None:
        band = [0.2, 0.8] if cfg["study"]["kind"] == "dt" else [None, 0.0]
    return band


def cmd_study(cfg, out=None) -> int:
    res = run_study(cfg)
    outdir = cfgmod.output_dir(cfg, out)
    os.makedirs(outdir, exist_ok=True)
    res.to_csv(os.path.join(outdir, "study.csv"))
    res.to_json(os.path.join(outdir, "summary.json"))
    with open(os.path.join(outdir, "plot.gp"), "w", newline="\n") as fh:
        fh.write(K_PLOT if res.kind == "k" else DT_PLOT)
    for e in res.estimates:
        print(f"{res.kind}={e.param:g}  mse={e.mse:.6e}  rmse={e.rmse:.6e}  stderr={e.stderr:.2e}")
    if res.slope is None:
        print("slope: not fitted (some errors are zero)")
        return EXIT_OK
    lo, hi = _slope_band(cfg)
    ok = (lo is None or res.slope >= lo) and (hi is None or res.slope <= hi)
    print(f"slope: {res.slope:.4f} (band [{lo}, {hi}]) {'ok' if ok else 'OUTSIDE BAND'}")
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_validate(cfg) -> int:
    results = []

    def add(name, ok, detail):
        results.append((ok, name, detail))

    g = cfg["grid"]
    try:
        grid = GridSpec(g["k1"], g["k"], g["T"])
    except ValueError as exc:
        print(diagnostics.fmt(False, "grid", str(exc)))
        return EXIT_INVARIANT

    mod = None
    try:
        mod = cfgmod.build_model(cfg)
    except MassError as exc:
        add("measure mass", False, str(exc))
    except NonGeneratorError as exc:
        add("generator", False, f"NonGenerator: {exc}")
    except (SfdeError, ValueError) as exc:
        add("model", False, str(exc))

    if mod is not None:
        for a in mod.aggregates:
            for dt in (grid.dt, 2.0 ** -10):
                add("measure mass", *diagnostics.mass_check(a.measure, dt, grid.k))
        try:
            mod.check_phase_space()
            add("phase space", True, f"r={mod.r} below every moment boundary")
        except SfdeError as exc:
            add("phase space", False, str(exc))
        add("generator", *diagnostics.generator_check(mod.generator))
        try:
            add("coefficients at origin", *diagnostics.origin_check(mod))
        except NonFiniteError as exc:
            add("coefficients at origin", False, str(exc))
        # a few short paths are enough to exercise the recurrences
        B = 4
        noise_seed, regime_seed = cfgmod.seeds(cfg)
        probe = GridSpec(grid.k1, grid.k, min(grid.T, 2048 / grid.k1))
        noise = NoiseSource(noise_seed, mod.noise_dim, probe.dt, probe.T)
        reg = regime_paths(mod, probe.dt, probe.n_steps, regime_seed, range(B))
        add("fast/naive aggregate", *diagnostics.fast_path_check(
            mod, probe, reg, noise.fine_batch(range(B)), resolve_scheme(mod, cfg["scheme"]),
            H=cfg["truncation"]["H"]))
    add("deterministic reduction", *diagnostics.deterministic_check(grid))

    failed = False
    for ok, name, detail in results:
        print(diagnostics.fmt(ok, name, detail))
        failed |= not ok
    return EXIT_INVARIANT if failed else EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="sfdetrunc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_out=True):
        sp.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                        help="override one config key, e.g. grid.k1=128 (value parsed as JSON)")
        if with_out:
            sp.add_argument("--out", help="output directory (overrides output_dir)")

    for name, helptext in (("simulate", "write sample trajectories"),
                           ("study", "run a k- or dt-convergence study"),
                           ("validate", "check invariants for a config")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", nargs="?", help="JSON config (a simulate manifest also works)")
        common(sp, with_out=name != "validate")

    sp = sub.add_parser("preset", help="run a built-in study preset")
    sp.add_argument("name", choices=sorted(cfgmod.PRESETS))
    sp.add_argument("--print", action="store_true", help="print the resolved config and exit")
    common(sp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "preset":
            cfg = cfgmod.resolve(cfgmod.preset(args.name), args.set)
            if args.print:
                print(json.dumps(cfg, indent=2, sort_keys=True))
                return EXIT_OK
            return cmd_study(cfg, args.out)
        cfg = cfgmod.load(args.config, args.set)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "study":
            return cmd_study(cfg, args.out)
        return cmd_validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
