import json

import numpy as np
import pytest

from graphop_mf.errors import ConfigError
from graphop_mf.experiments import (CSV_COLUMNS, ConvergenceReport, ExperimentConfig, _kuramoto_stamps,
                                    default_instances, emit_plots, regularization_resolution, run_discrete_scaling,
                                    run_triangle)
from graphop_mf.graphop import AtomicShift, from_spec
from graphop_mf.metrics import d_bl, d_bl_lp
from graphop_mf.summability import fejer

TWO_PI = 2 * np.pi


def small(**kw):
    base = dict(graphop={"variant": "atomic_shift", "r": 0.125}, rho0="bump", kernel_schedule=(4, 9),
                nm_schedule=((4, 5), (8, 10)), seeds=(0, 1), fibers=8, particles=40, dt_out=0.1)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_from_dict_nested_forms(tmp_path):
    data = {"graphop": {"variant": "atomic_shift", "r": 0.25}, "kernel": {"family": "gauss", "schedule": [2, 5]},
            "coupling": {"C": 0.5, "D": "sin2", "beta": 0.5}, "schedule": [[4, 5], [8, 10]], "seeds": [3]}
    cfg = ExperimentConfig.from_dict(data)
    assert cfg.kernel_family == "gauss" and cfg.kernel_schedule == (2, 5)
    assert cfg.C == 0.5 and cfg.nm_schedule == ((4, 5), (8, 10)) and cfg.seeds == (3,)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    assert ExperimentConfig.load(path) == cfg
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize("bad", [
    {"bogus": 1},
    {"kernel": 3},
    {"kernel": {"schedule": [9, 4]}},
    {"schedule": [[8, 25], [4, 5]]},
    {"seeds": []},
    {"kernel": {"family": "poisson"}},
    {"D": "tanh"},
    {"beta": 3.0, "D": "sin2"},
    {"dt": 0.03},
    {"fibers": 12, "schedule": [[8, 25]]},
    {"graphop": {"variant": "atomic_shift", "r": 0.1, "weight": 1.0}},
    {"alpha": 2.5},
    {"graphop": {"variant": "sphere"}},
    {"instances": [{"rho0": "bump"}]},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_config_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")
    (tmp_path / "x.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "x.json")
    (tmp_path / "y.json").write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "y.json")


def test_default_instances():
    insts = default_instances()
    assert len(insts) == 8
    for inst in insts:
        assert from_spec(inst["graphop"]).cell_matrix(32).sum(axis=1).max() <= 1 + 1e-12


def test_regularization_resolution_is_commensurate():
    res = regularization_resolution(fejer(9), 32)
    assert res % 32 == 0 and res >= 8 * 10 + 1


def test_small_triangle_report(tmp_path):
    rep = run_triangle(small())
    assert len(rep.rows) == 2 * 2 * 2
    assert all(not r["error"] for r in rep.rows)
    for r in rep.rows:
        assert r["gap_emp_vfpeInf"] <= r["gap_emp_vfpeK"] + r["gap_vfpeK_vfpeInf"] + 1e-9
    med = rep.medians()
    assert med[("atomic_shift", 4, 5, 9)]["gap_vfpeK_vfpeInf"] <= med[("atomic_shift", 4, 5, 4)]["gap_vfpeK_vfpeInf"]
    rep.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    back = ConvergenceReport.from_csv(tmp_path / "r.csv")
    assert back.rows == rep.rows
    paths = emit_plots(rep, tmp_path)
    assert [p.name for p in paths] == ["gap_emp_vfpeK.svg", "gap_vfpeK_vfpeInf.svg", "gap_emp_vfpeInf.svg"]
    first = [p.read_bytes() for p in paths]
    assert [p.read_bytes() for p in emit_plots(back, tmp_path)] == first


def test_deterministic_rows():
    a = run_triangle(small(kernel_schedule=(4,), nm_schedule=((4, 5),)))
    b = run_triangle(small(kernel_schedule=(4,), nm_schedule=((4, 5),)))
    assert a.rows == b.rows


def test_complete_graph_middle_column_vanishes():
    rep = run_triangle(small(graphop={"variant": "graphon"}, nm_schedule=((4, 5),), seeds=(0,)))
    assert all(r["gap_vfpeK_vfpeInf"] <= 2e-4 for r in rep.rows)


def test_uniform_stationary_sampling_noise():
    cfg = small(graphop={"variant": "graphon"}, rho0="uniform", kernel_schedule=(4,), nm_schedule=((1, 1000),),
                seeds=(0, 1, 2, 3, 4), fibers=1, particles=2000)
    med = run_triangle(cfg).medians()[("graphon", 1, 1000, 4)]
    # oracle: d_BL between 1000 uniform draws and the uniform law, median over the same seeds
    q = (np.arange(2000) + 0.5) / 2000 * TWO_PI
    mc = np.median([d_bl((np.random.default_rng(s).uniform(0, TWO_PI, 1000), np.full(1000, 1e-3)),
                         (q, np.full(2000, 5e-4))) for s in range(5)])
    assert max(med.values()) <= 0.05
    assert med["gap_emp_vfpeInf"] >= 0.5 * mc


def test_single_oscillator_per_cell_floor():
    cfg = small(rho0="uniform", kernel_schedule=(4,), nm_schedule=((4, 1),), seeds=(0, 1, 2), fibers=4,
                particles=200)
    rep = run_discrete_scaling(cfg, 4)
    # floor: LP distance between a single unit atom and the uniform law (1 - 1/(2π) ≈ 0.8408)
    q = (np.arange(200) + 0.5) / 200 * TWO_PI
    floor = d_bl_lp(([0.0], [1.0]), (q, np.full(200, 1 / 200)))
    assert floor == pytest.approx(1 - 1 / TWO_PI, abs=1e-3)
    assert all(r["gap_emp_vfpeK"] >= floor - 1e-3 for r in rep.rows)
    ok, _ = rep.check()
    assert ok


def test_zero_coupling_empirical_is_frozen():
    cfg = small(C=0.0, alpha=None)
    stamped = _kuramoto_stamps(cfg, AtomicShift(0.125), "bump", 4, 5, cfg.coupling())
    for emp in stamped:
        assert np.array_equal(emp, np.broadcast_to(emp[0], emp.shape))


def test_check_flags_violations():
    rows = []
    for K, mid in ((4, 0.1), (9, 0.2)):
        for (n, M), first in (((4, 5), 0.3), ((8, 10), 0.35)):
            rows.append({"instance": "x", "n": n, "M": M, "K": K, "seed": 0, "gap_emp_vfpeK": first,
                         "gap_vfpeK_vfpeInf": mid, "gap_emp_vfpeInf": first + mid + 0.1, "error": ""})
    rows.append({"instance": "x", "n": 4, "M": 5, "K": 4, "seed": 1, "gap_emp_vfpeK": float("nan"),
                 "gap_vfpeK_vfpeInf": float("nan"), "gap_emp_vfpeInf": float("nan"), "error": "boom"})
    ok, bad = ConvergenceReport(rows).check()
    assert not ok
    text = "\n".join(bad)
    assert "triangle" in text and "middle column" in text and "first column" in text and "boom" in text
    assert emit_plots(ConvergenceReport([]), "/nonexistent") == []


def test_process_pool_matches_serial():
    cfg = small(graphop=None, instances=[{"name": "a", "graphop": {"variant": "atomic_shift", "r": 0.125}},
                                         {"name": "b", "graphop": {"variant": "graphon"}}],
                kernel_schedule=(4,), nm_schedule=((4, 5),), seeds=(0,))
    serial = run_triangle(cfg)
    cfg.threads = 2
    assert run_triangle(cfg).rows == serial.rows
