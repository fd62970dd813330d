"""Command line: ``graphop-mf [global flags] {simulate,solve,regularize,triangle,metrics}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance-trend violation in ``triangle --check``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .densities import density_from_spec, quantile_family
from .errors import ConfigError, NumericalFailure
from .experiments import ExperimentConfig, emit_plots, regularization_resolution, run_triangle
from .graphop import from_spec
from .kuramoto import OscillatorState, empirical_family, integrate, sample_initial, sample_weights
from .metrics import d_bA, d_bm, fiber_distances
from .summability import kernel_from_spec, o_convergence_gap, regularize
from .vfpe import fv_transport_solve, picard_solve

log = logging.getLogger("graphop_mf")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_TREND = 0, 2, 3, 4
DEFAULT_GRAPHOP = {"variant": "graphon", "kernel": "constant", "value": 1.0}


def _global_flags(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=d, help="override the seed (single-seed runs) or seed list start")
    parser.add_argument("--threads", type=int, default=d, help="worker processes for the triangle run")
    parser.add_argument("--out-dir", default=d, help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true", default=d if suppress else False)


def build_parser():
    p = argparse.ArgumentParser(prog="graphop-mf", description=__doc__.splitlines()[0])
    _global_flags(p, False)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, True)

    s = sub.add_parser("simulate", parents=[common], help="finite Kuramoto model only")
    s.add_argument("--dump-weights", action="store_true", help="also write the dense weight matrix")

    s = sub.add_parser("solve", parents=[common], help="mean-field (VFPE) solution only")
    s.add_argument("--fv", action="store_true", help="also run the finite-volume cross-check")

    s = sub.add_parser("regularize", parents=[common], help="emit the regularized graphon grid")
    s.add_argument("--n", type=int, default=None, help="kernel index (default: first of the schedule)")

    s = sub.add_parser("triangle", parents=[common], help="full convergence-triangle experiment")
    s.add_argument("--check", action="store_true", help="exit 4 if an acceptance trend fails")

    s = sub.add_parser("metrics", parents=[common], help="distances between stored measure families")
    s.add_argument("a", help="measure-family file")
    s.add_argument("b", help="measure-family file")
    s.add_argument("--graphop", default=None, help="JSON graphop spec for d̄^{b,A}")
    return p


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seeds = (args.seed,) if args.command != "triangle" else tuple(args.seed + k for k in range(len(cfg.seeds)))
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    cfg.validate()
    return cfg


def _out(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(cfg, args, **extra):
    m = {"command": args.command, "argv": sys.argv[1:], "config": cfg.to_dict()}
    m.update(extra)
    return m


def _graphop(cfg):
    return from_spec(cfg.graphop or DEFAULT_GRAPHOP)


def cmd_simulate(cfg, args):
    out = _out(cfg)
    A = _graphop(cfg)
    if cfg.K is not None:
        k = kernel_from_spec(cfg.kernel_family, cfg.K)
        A = regularize(A, k, regularization_resolution(k, cfg.fibers))
    N = cfg.n * cfg.M
    W = sample_weights(A, N)
    seed = cfg.seeds[0]
    u0 = sample_initial(density_from_spec(cfg.rho0), cfg.n, cfg.M, seed)
    t0 = time.perf_counter()
    traj = integrate(OscillatorState(u0, W), cfg.coupling(), cfg.T, cfg.dt, cfg.dt_out)
    io.write_trajectory(out / "trajectory.txt", traj.times, traj.phases)
    io.write_families(out / "empirical.txt",
                      [empirical_family(traj.phases[s], cfg.n, cfg.M, traj.times[s]) for s in range(traj.times.size)])
    if args.dump_weights:
        np.savetxt(out / "weights.txt", W)
    io.write_manifest(out / "manifest.json", _manifest(cfg, args, seed=seed, N=N,
                                                       runtime_s=time.perf_counter() - t0))
    print(f"wrote {out / 'trajectory.txt'} ({traj.times.size} stamps, N={N})")
    return EXIT_OK


def cmd_solve(cfg, args):
    out = _out(cfg)
    A = _graphop(cfg)
    if cfg.K is not None:
        k = kernel_from_spec(cfg.kernel_family, cfg.K)
        A = regularize(A, k, regularization_resolution(k, cfg.fibers))
    rho0 = density_from_spec(cfg.rho0)
    pos, w = quantile_family(rho0, cfg.fibers, cfg.particles)
    t0 = time.perf_counter()
    res = picard_solve(A, (pos, w), cfg.coupling(), T=cfg.T, dt=cfg.dt, alpha=cfg.alpha, tol=cfg.tol,
                       dt_out=cfg.dt_out)
    io.write_families(out / "solution.txt", res.families())
    extra = {"iterations": res.iterations, "gaps": res.gaps, "ratios": res.ratios, "alpha": res.alpha,
             "rate_bound": res.rate_bound}
    if args.fv:
        fv = fv_transport_solve(A, rho0, cfg.coupling(), cfg.T, min(cfg.dt, 0.005), cfg.u_cells,
                                fibers=cfg.fibers, dt_out=cfg.dt_out)
        io.write_fv(out / "fv.txt", fv.times, fv.density)
        extra["fv_particle_dbm_at_T"] = d_bm(res.family(-1), fv.family(-1))
        extra["fv_max_cfl"] = fv.max_cfl
    extra["runtime_s"] = time.perf_counter() - t0
    io.write_manifest(out / "manifest.json", _manifest(cfg, args, **extra))
    print(f"converged in {res.iterations} iterations; gaps {[f'{g:.3e}' for g in res.gaps]}")
    return EXIT_OK


def cmd_regularize(cfg, args):
    out = _out(cfg)
    A = _graphop(cfg)
    n = args.n if args.n is not None else (cfg.K if cfg.K is not None else cfg.kernel_schedule[0])
    k = kernel_from_spec(cfg.kernel_family, n)
    R = regularize(A, k)
    gap = o_convergence_gap(A, R)
    np.savetxt(out / "graphon.txt", R.W, header=f"regularized graphon, {k.family} n={n}, grid {R.grid.resolution}")
    io.write_manifest(out / "manifest.json", _manifest(cfg, args, n=n, resolution=R.grid.resolution,
                                                       o_convergence_gap=gap,
                                                       degree_range=[float(R.degree().min()),
                                                                     float(R.degree().max())]))
    print(f"grid {R.grid.resolution}, o-convergence gap {gap:.6g}")
    return EXIT_OK


def cmd_triangle(cfg, args):
    out = _out(cfg)
    t0 = time.perf_counter()
    report = run_triangle(cfg)
    report.to_csv(out / "report.csv")
    plots = emit_plots(report, out)
    ok, violations = report.check()
    io.write_manifest(out / "manifest.json", _manifest(
        cfg, args, rows=len(report.rows), check_ok=ok, violations=violations, timings=report.timings,
        plots=[p.name for p in plots], runtime_s=time.perf_counter() - t0))
    for (inst, n, M, K), med in sorted(report.medians().items()):
        print(f"{inst:22s} n={n:3d} M={M:4d} K={K:3d}  " + "  ".join(f"{v:.5f}" for v in med.values()))
    if violations:
        print("\n".join(f"VIOLATION {v}" for v in violations))
    print("trend check: " + ("PASS" if ok else "FAIL"))
    if args.check and not ok:
        return EXIT_TREND
    return EXIT_OK


def cmd_metrics(cfg, args):
    try:
        a = io.read_families(args.a)
        b = io.read_families(args.b)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if len(a) != len(b):
        raise ConfigError(f"{args.a} has {len(a)} families, {args.b} has {len(b)}")
    result = {"d_bm": [d_bm(x, y) for x, y in zip(a, b)], "times": [x.time for x in a]}
    if len(a) == 1:
        result["fiber_d_bl"] = fiber_distances(*_same_grid(a[0], b[0])).tolist()
    spec = json.loads(args.graphop) if args.graphop else cfg.graphop
    if spec is not None:
        A = from_spec(spec)
        result["d_bA"] = [d_bA(A, *_same_grid(x, y)) for x, y in zip(a, b)]
    out = _out(cfg)
    io.write_manifest(out / "metrics.json", {"command": "metrics", "a": args.a, "b": args.b, **result})
    print(json.dumps(result))
    return EXIT_OK


def _same_grid(x, y):
    n, m = x.grid.resolution, y.grid.resolution
    r = max(n, m)
    return (x.refine(r) if n < r else x), (y.refine(r) if m < r else y)


COMMANDS = {"simulate": cmd_simulate, "solve": cmd_solve, "regularize": cmd_regularize,
            "triangle": cmd_triangle, "metrics": cmd_metrics}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except (NumericalFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
