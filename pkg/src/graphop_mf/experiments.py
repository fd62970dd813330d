"""Experiment runner for the Kuramoto → VFPE^K → VFPE^∞ convergence triangle.

For every instance (graphop + initial density), kernel index K, partition
(n, M) and seed, three gaps are measured in ``sup_t d̄^{b,m}``:

* ``gap_emp_vfpeK``: empirical measures of the Kuramoto model with weights
  sampled from the regularized graphop ``A^K`` against the mean-field
  solution for ``A^K``;
* ``gap_vfpeK_vfpeInf``: mean-field solution for ``A^K`` against the one for ``A``;
* ``gap_emp_vfpeInf``: empirical measures against the mean-field solution for ``A``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .densities import density_from_spec, quantile_family
from .errors import ConfigError
from .graphop import from_spec
from .kuramoto import CouplingSpec, OscillatorState, coupling_from_spec, integrate, sample_initial, sample_weights
from .metrics import d_bl_rows
from .plots import write_plot
from .summability import kernel_from_spec, regularize
from .vfpe import default_alpha, picard_solve

log = logging.getLogger(__name__)

GAP_COLUMNS = ("gap_emp_vfpeK", "gap_vfpeK_vfpeInf", "gap_emp_vfpeInf")
CSV_COLUMNS = ("instance", "n", "M", "K", "seed") + GAP_COLUMNS + ("error",)
TREND_ATOL = 1e-9
TRIANGLE_ATOL = 1e-9

_COMPLETE = {"variant": "graphon", "kernel": "constant", "value": 1.0}
DEFAULT_GRAPHOPS = {
    "complete": _COMPLETE,
    "band": {"variant": "band", "halfwidth": 0.1, "height": 5.0},
    "shift_quarter": {"variant": "atomic_shift", "r": 0.25},
    "mixture": {"variant": "mixture", "components": [
        {"coefficient": 0.5, "graphop": {"variant": "atomic_shift", "r": 0.125}},
        {"coefficient": 0.5, "graphop": _COMPLETE},
    ]},
}
DEFAULT_DENSITIES = ("uniform", "bump")


def default_instances():
    return [{"name": f"{g}/{r}", "graphop": spec, "rho0": r}
            for g, spec in DEFAULT_GRAPHOPS.items() for r in DEFAULT_DENSITIES]


@dataclass
class ExperimentConfig:
    """All parameters of a run; JSON keys mirror the field names.

    Nested JSON forms ``{"kernel": {"family", "schedule"}}``,
    ``{"coupling": {"C", "D", "beta"}}`` and ``{"schedule": [[n, M], ...]}`` are accepted.
    """

    graphop: dict | None = None
    instances: list | None = None
    rho0: object = "bump"
    kernel_family: str = "fejer"
    kernel_schedule: tuple = (4, 9, 19, 49)
    nm_schedule: tuple = ((8, 25), (16, 50), (32, 100))
    C: float = 1.0
    D: str = "sin"
    beta: float = 0.0
    T: float = 1.0
    dt: float = 0.01
    dt_out: float = 0.05
    alpha: float | None = None
    tol: float = 1e-4
    seeds: tuple = (0, 1, 2, 3, 4)
    fibers: int = 32
    particles: int = 200
    u_cells: int = 256
    n: int = 8
    M: int = 25
    K: int | None = None
    out_dir: str = "runs"
    threads: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        kern = data.pop("kernel", None)
        if kern is not None:
            if not isinstance(kern, dict):
                raise ConfigError("'kernel' must be an object with 'family' and 'schedule'")
            if "family" in kern:
                data["kernel_family"] = kern["family"]
            if "schedule" in kern:
                data["kernel_schedule"] = kern["schedule"]
        coup = data.pop("coupling", None)
        if coup is not None:
            for key in ("C", "D", "beta"):
                if key in coup:
                    data[key] = coup[key]
        if "schedule" in data:
            data["nm_schedule"] = data.pop("schedule")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "kernel_schedule" in data:
            data["kernel_schedule"] = tuple(int(k) for k in data["kernel_schedule"])
        if "nm_schedule" in data:
            data["nm_schedule"] = tuple((int(a), int(b)) for a, b in data["nm_schedule"])
        if "seeds" in data:
            data["seeds"] = tuple(int(s) for s in data["seeds"])
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def coupling(self) -> CouplingSpec:
        return CouplingSpec(coupling_from_spec(self.D, self.beta), self.C)

    def resolved_instances(self):
        if self.instances:
            out = []
            for k, inst in enumerate(self.instances):
                if "graphop" not in inst:
                    raise ConfigError(f"instance {k} has no graphop")
                out.append({"name": inst.get("name", f"instance{k}"), "graphop": inst["graphop"],
                            "rho0": inst.get("rho0", self.rho0)})
            return out
        if self.graphop is not None:
            name = self.graphop.get("variant", "graphop")
            return [{"name": name, "graphop": self.graphop, "rho0": self.rho0}]
        return default_instances()

    def validate(self):
        try:
            if not self.kernel_schedule or not self.nm_schedule or not self.seeds:
                raise ConfigError("schedules and seed list must be non-empty")
            ks = list(self.kernel_schedule)
            if any(b <= a for a, b in zip(ks, ks[1:])) or ks[0] < 0:
                raise ConfigError(f"kernel schedule must be increasing, got {ks}")
            Ns = [n * m for n, m in self.nm_schedule]
            if any(b <= a for a, b in zip(Ns, Ns[1:])) or min(min(p) for p in self.nm_schedule) < 1:
                raise ConfigError(f"(n, M) schedule must be increasing in N = nM, got {self.nm_schedule}")
            kernel_from_spec(self.kernel_family, ks[0])
            coupling = self.coupling()
            coupling.D.check()
            if self.C < 0 or self.T <= 0 or self.dt <= 0 or self.dt_out <= 0 or self.tol <= 0:
                raise ConfigError("C must be nonnegative and T, dt, dt_out, tol positive")
            for v, name in ((self.T / self.dt, "T/dt"), (self.dt_out / self.dt, "dt_out/dt"),
                            (self.T / self.dt_out, "T/dt_out")):
                if abs(v - round(v)) > 1e-9 * max(1.0, v):
                    raise ConfigError(f"{name} = {v} is not an integer")
            for n, _ in self.nm_schedule:
                if self.fibers % n and n % self.fibers:
                    raise ConfigError(f"fiber count {self.fibers} and n={n} are not nested")
            if self.fibers < 1 or self.particles < 1 or self.u_cells < 1 or self.threads < 1:
                raise ConfigError("fibers, particles, u_cells and threads must be positive")
            for inst in self.resolved_instances():
                A = from_spec(inst["graphop"])
                density_from_spec(inst["rho0"])
                gamma = float(np.max(A.cell_matrix(self.fibers).sum(axis=1)))
                if gamma > 1 + 1e-9:
                    raise ConfigError(f"instance {inst['name']}: maximal degree {gamma:.4g} exceeds 1")
                if self.alpha is not None and self.alpha <= 2 * self.C + gamma:
                    raise ConfigError(f"alpha={self.alpha} must exceed 2Cb + bγ_A = {2 * self.C + gamma:.4g}")
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc


def regularization_resolution(k, fibers: int) -> int:
    """Smallest multiple of ``fibers`` that resolves the kernel, so cell matrices aggregate exactly."""
    need = k.min_resolution() + 1
    return fibers * math.ceil(need / fibers)


def sup_dbm(emp_pos, sol_pos, sol_w) -> float:
    """``max_t d̄^{b,m}`` between stamped empirical families ``(S, n, M)`` and a solution ``(S, F, P)``."""
    S, n, M = emp_pos.shape
    _, F, P = sol_pos.shape
    if F % n == 0:
        emp_pos = np.repeat(emp_pos, F // n, axis=1)
    elif n % F == 0:
        sol_pos = np.repeat(sol_pos, n // F, axis=1)
        sol_w = np.repeat(sol_w, n // F, axis=0)
    else:
        raise ValueError(f"grids with {n} and {F} cells are not nested")
    R = emp_pos.shape[1]
    w_sol = np.broadcast_to(sol_w, (S, R, P)).reshape(S * R, P)
    d = d_bl_rows(emp_pos.reshape(S * R, M), 1.0 / M, sol_pos.reshape(S * R, P), w_sol)
    return float(np.max(d.reshape(S, R).mean(axis=1)))


def sup_dbm_solutions(a, b) -> float:
    S, F, P = a.positions.shape
    w = np.broadcast_to(a.weights, (S, F, P)).reshape(S * F, P)
    wb = np.broadcast_to(b.weights, b.positions.shape).reshape(S * F, -1)
    d = d_bl_rows(a.positions.reshape(S * F, P), w, b.positions.reshape(S * F, -1), wb)
    return float(np.max(d.reshape(S, F).mean(axis=1)))


def _solve(cfg, A, pos0, w0, coupling):
    return picard_solve(A, (pos0, w0), coupling, T=cfg.T, dt=cfg.dt, alpha=cfg.alpha, tol=cfg.tol,
                        dt_out=cfg.dt_out)


def _kuramoto_stamps(cfg, AK, rho0, n, M, coupling):
    N = n * M
    W = sample_weights(AK, N)
    u0 = np.stack([sample_initial(rho0, n, M, s) for s in cfg.seeds], axis=1)
    traj = integrate(OscillatorState(u0, W), coupling, cfg.T, cfg.dt, cfg.dt_out)
    # (stamps, N, seeds) -> per seed (stamps, n, M)
    return [traj.phases[:, :, j].reshape(-1, n, M) for j in range(len(cfg.seeds))]


def _instance_rows(cfg: ExperimentConfig, inst: dict, Ks, with_limit: bool = True):
    A = from_spec(inst["graphop"])
    rho0 = density_from_spec(inst["rho0"])
    coupling = cfg.coupling()
    pos0, w0 = quantile_family(rho0, cfg.fibers, cfg.particles)
    rows, timings = [], {}
    t0 = time.perf_counter()
    sol_inf = _solve(cfg, A, pos0, w0, coupling) if with_limit else None
    timings["vfpe_inf"] = time.perf_counter() - t0
    for K in Ks:
        k = kernel_from_spec(cfg.kernel_family, K)
        try:
            t0 = time.perf_counter()
            AK = regularize(A, k, regularization_resolution(k, cfg.fibers))
            sol_K = _solve(cfg, AK, pos0, w0, coupling)
            mid = sup_dbm_solutions(sol_K, sol_inf) if with_limit else float("nan")
            timings[f"vfpe_K{K}"] = time.perf_counter() - t0
        except Exception as exc:  # recorded per row, the run continues
            log.error("%s K=%d: %s", inst["name"], K, exc)
            for n, M in cfg.nm_schedule:
                for s in cfg.seeds:
                    rows.append(_row(inst, n, M, K, s, error=f"{type(exc).__name__}: {exc}"))
            continue
        for n, M in cfg.nm_schedule:
            try:
                t0 = time.perf_counter()
                stamped = _kuramoto_stamps(cfg, AK, rho0, n, M, coupling)
                for s, emp in zip(cfg.seeds, stamped):
                    g1 = sup_dbm(emp, sol_K.positions, sol_K.weights)
                    g3 = sup_dbm(emp, sol_inf.positions, sol_inf.weights) if with_limit else float("nan")
                    rows.append(_row(inst, n, M, K, s, g1, mid, g3))
                timings[f"kuramoto_K{K}_n{n}_M{M}"] = time.perf_counter() - t0
            except Exception as exc:
                log.error("%s K=%d n=%d M=%d: %s", inst["name"], K, n, M, exc)
                for s in cfg.seeds:
                    rows.append(_row(inst, n, M, K, s, error=f"{type(exc).__name__}: {exc}"))
    return rows, timings


def _row(inst, n, M, K, seed, g1=float("nan"), g2=float("nan"), g3=float("nan"), error=""):
    return {"instance": inst["name"], "n": n, "M": M, "K": K, "seed": seed,
            "gap_emp_vfpeK": g1, "gap_vfpeK_vfpeInf": g2, "gap_emp_vfpeInf": g3, "error": error}


def _run_instances(cfg, worker_args):
    if cfg.threads > 1 and len(worker_args) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(_instance_rows, *zip(*worker_args)))
    return [_instance_rows(*a) for a in worker_args]


@dataclass
class ConvergenceReport:
    rows: list
    timings: dict = field(default_factory=dict)

    def medians(self):
        """Median of every gap column over seeds, keyed by ``(instance, n, M, K)``."""
        groups = {}
        for r in self.rows:
            groups.setdefault((r["instance"], r["n"], r["M"], r["K"]), []).append(r)
        out = {}
        for key, rs in groups.items():
            out[key] = {c: float(np.nanmedian([r[c] for r in rs])) if any(np.isfinite(r[c]) for r in rs)
                        else float("nan") for c in GAP_COLUMNS}
        return out

    def check(self):
        """Acceptance trends; returns ``(ok, violations)``."""
        bad = []
        for r in self.rows:
            if r["error"]:
                bad.append(f"{r['instance']} n={r['n']} M={r['M']} K={r['K']} seed={r['seed']}: {r['error']}")
                continue
            lhs = r["gap_emp_vfpeInf"]
            rhs = r["gap_emp_vfpeK"] + r["gap_vfpeK_vfpeInf"] + TRIANGLE_ATOL
            if np.isfinite(lhs) and not lhs <= rhs:
                bad.append(f"triangle: {r['instance']} n={r['n']} M={r['M']} K={r['K']} seed={r['seed']}: "
                           f"{lhs:.6g} > {rhs:.6g}")
        med = self.medians()
        insts = sorted({k[0] for k in med})
        Ks = sorted({k[3] for k in med})
        nms = sorted({(k[1], k[2]) for k in med}, key=lambda p: p[0] * p[1])
        for inst in insts:
            for n, M in nms:
                seq = [med[(inst, n, M, K)]["gap_vfpeK_vfpeInf"] for K in Ks if (inst, n, M, K) in med]
                for a, b in zip(seq, seq[1:]):
                    if np.isfinite(a) and np.isfinite(b) and b > a + TREND_ATOL:
                        bad.append(f"middle column increases in K: {inst} n={n} M={M}: {seq}")
                        break
            for K in Ks:
                seq = [med[(inst, n, M, K)]["gap_emp_vfpeK"] for n, M in nms if (inst, n, M, K) in med]
                for a, b in zip(seq, seq[1:]):
                    if not b < a:
                        bad.append(f"first column not decreasing in (n, M): {inst} K={K}: {seq}")
                        break
        return not bad, bad

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            wr.writeheader()
            for r in self.rows:
                wr.writerow({k: (repr(float(r[k])) if k in GAP_COLUMNS else r[k]) for k in CSV_COLUMNS})

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                rows.append({"instance": r["instance"], "n": int(r["n"]), "M": int(r["M"]), "K": int(r["K"]),
                             "seed": int(r["seed"]), **{c: float(r[c]) for c in GAP_COLUMNS},
                             "error": r["error"]})
        return cls(rows)


def run_triangle(cfg: ExperimentConfig) -> ConvergenceReport:
    """Full Kuramoto / VFPE^K / VFPE^∞ experiment over all instances, K, (n, M) and seeds."""
    insts = cfg.resolved_instances()
    results = _run_instances(cfg, [(cfg, inst, cfg.kernel_schedule) for inst in insts])
    rows, timings = [], {}
    for inst, (r, t) in zip(insts, results):
        rows.extend(r)
        timings[inst["name"]] = t
    return ConvergenceReport(rows, timings)


@dataclass
class ScalingReport:
    rows: list
    K: int

    def medians(self):
        groups = {}
        for r in self.rows:
            groups.setdefault((r["instance"], r["n"], r["M"]), []).append(r["gap_emp_vfpeK"])
        return {k: float(np.nanmedian(v)) for k, v in groups.items()}

    def check(self):
        med = self.medians()
        bad = []
        for inst in sorted({k[0] for k in med}):
            keys = sorted((k for k in med if k[0] == inst), key=lambda k: k[1] * k[2])
            seq = [med[k] for k in keys]
            if any(b > a for a, b in zip(seq, seq[1:])):
                bad.append(f"{inst}: median gap increases along (n, M): {seq}")
        return not bad, bad


def run_discrete_scaling(cfg: ExperimentConfig, K: int | None = None) -> ScalingReport:
    """``sup_t d̄^{b,m}(empirical, VFPE^K)`` along the (n, M) schedule at fixed K."""
    K = cfg.K if K is None else K
    K = cfg.kernel_schedule[-1] if K is None else K
    insts = cfg.resolved_instances()
    results = _run_instances(cfg, [(cfg, inst, (K,), False) for inst in insts])
    rows = [r for rs, _ in results for r in rs]
    return ScalingReport(rows, K)


def emit_plots(report: ConvergenceReport, out_dir) -> list:
    """One log-scale SVG per gap column (medians over seeds); nothing is written for an empty report."""
    if not report.rows:
        log.warning("empty report; no plots written")
        return []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    med = report.medians()
    Kmax = max(k[3] for k in med)
    insts = sorted({k[0] for k in med})
    paths = []
    specs = [
        ("gap_emp_vfpeK", "N = nM", lambda k: k[3] == Kmax, lambda k: k[1] * k[2]),
        ("gap_vfpeK_vfpeInf", "K", lambda k: True, lambda k: k[3]),
        ("gap_emp_vfpeInf", "N = nM", lambda k: k[3] == Kmax, lambda k: k[1] * k[2]),
    ]
    for col, xlabel, keep, xof in specs:
        series = {}
        for inst in insts:
            pts = {}
            for key, vals in med.items():
                if key[0] == inst and keep(key) and np.isfinite(vals[col]):
                    pts.setdefault(xof(key), []).append(vals[col])
            if pts:
                series[inst] = [(x, float(np.median(v))) for x, v in sorted(pts.items())]
        if series:
            title = f"{col} (median over seeds" + (f", K={Kmax})" if xlabel != "K" else ")")
            paths.append(write_plot(out_dir / f"{col}.svg", series, title, xlabel, "sup_t d_bm"))
    return paths
