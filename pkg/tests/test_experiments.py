import csv
import io
import json

import numpy as np
import pytest

from vnfqueue.cli import main
from vnfqueue.cost_model import ConfigError, ModelParams
from vnfqueue.experiments import (SweepSpec, block_means, export_value_surface, keepalive_params,
                                  keepalive_sweep, delay_params, delay_sweep, surface_params, grid,
                                  run_sweep, sweep_metadata, write_sweep_csv)
from vnfqueue.solver import read_solution_csv, value_iteration

BASE = ModelParams(lam=2.0, n=2, B=2, r=0.0, f=5.0, beta=0.0, psi=0.0, kappa=1.0, h=0.1, gamma=0.5)

CONFIG = {"lambda": 2.0, "mu": 1.0, "n": 2, "B": 2, "r": 0.0, "f": 5.0, "beta": 0.5, "psi": 0.5,
          "kappa": 1.0, "h": 0.1, "gamma": 0.5,
          "solver": {"tol": 1e-9},
          "sim": {"initial_state": [-1, -1], "replications": 50, "seed": 4},
          "sweep": {"parameter": "kappa", "start": 0.0, "stop": 4.0, "steps": 4}}


def test_grid_counts_intervals():
    assert grid(0.0, 20.0, 80) == pytest.approx(np.linspace(0, 20, 81))
    assert len(keepalive_sweep().values) == 81 and len(delay_sweep().values) == 51


def test_preset_parameters():
    p2, p3, p4 = keepalive_params(), delay_params(), surface_params()
    assert (p2.n, p2.B, p2.lam, p2.f) == (5, 4, 4.0, 10.0)
    assert (p3.n, p3.B, p3.lam, p3.eta) == (5, 6, 4.75, (1.0, 1.8, 2.5, 3.5, 4.5, 5.5))
    assert p4.beta == p4.psi == 0.0 and p4.h == 1.0
    assert "lambda_note" in sweep_metadata(keepalive_sweep())


def test_sweep_rows_are_ordered_and_deterministic():
    spec = SweepSpec("kappa", [3.0, 0.0, 1.5], BASE)
    rows = run_sweep(spec)
    assert [r.value for r in rows] == [0.0, 1.5, 3.0]
    a, b = io.StringIO(), io.StringIO()
    write_sweep_csv(a, rows, "kappa")
    write_sweep_csv(b, run_sweep(spec), "kappa")
    assert a.getvalue() == b.getvalue()
    assert a.getvalue().splitlines()[0].startswith("kappa,avg_active_queues,avg_total_tasks")
    assert all(r.converged for r in rows)


def test_free_keepalive_keeps_the_most_queues():
    rows = run_sweep(SweepSpec("kappa", grid(0.0, 4.0, 8), BASE))
    assert rows[0].avg_active_queues == max(r.avg_active_queues for r in rows)


def test_warm_start_gives_same_answers():
    cold = run_sweep(SweepSpec("h", [0.0, 0.5, 1.0], BASE))
    warm = run_sweep(SweepSpec("h", [0.0, 0.5, 1.0], BASE, warm_start=True))
    for c, w in zip(cold, warm):
        assert c.rejecting_states == w.rejecting_states
        assert c.reference_value == pytest.approx(w.reference_value, abs=1e-7)


def test_non_convergence_is_flagged():
    rows = run_sweep(SweepSpec("kappa", [1.0], BASE.replace(gamma=0.001), tol=1e-12, max_iters=10))
    assert not rows[0].converged and np.isnan(rows[0].avg_active_queues)


def test_invalid_sweeps():
    with pytest.raises(ConfigError):
        SweepSpec("n", [1, 2], BASE)
    with pytest.raises(ValueError):
        SweepSpec("kappa", [1.0, -1.0], BASE)
    with pytest.raises(ConfigError):
        SweepSpec("kappa", [], BASE)


def test_value_surface_export():
    p = ModelParams(lam=1.0, n=1, B=3, f=2.0, kappa=0.5, h=0.2, gamma=0.5)
    V = value_iteration(p).values
    buf = io.StringIO()
    export_value_surface(V, p.space, buf)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == ["index", "q1", "value"]
    assert [r[1] for r in rows[1:]] == ["-1", "0", "1", "2", "3"]
    p2 = BASE
    buf = io.StringIO()
    export_value_surface(value_iteration(p2).values, p2.space, buf)
    assert len(buf.getvalue().splitlines()) == 4 ** 2 + 1


def test_block_means():
    space = BASE.space
    V = np.arange(space.size, dtype=float)
    assert np.allclose(block_means(V, space, 1), [1.5, 5.5, 9.5, 13.5])
    assert block_means(V, space, 2).shape == (4, 4)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(CONFIG))
    return path


def test_cli_solve_and_simulate(config_file, tmp_path):
    out, summary = tmp_path / "sol.csv", tmp_path / "sum.json"
    assert main(["solve", str(config_file), "-o", str(out), "--summary", str(summary)]) == 0
    with open(out, newline="") as fh:
        V, pol = read_solution_csv(fh, BASE.space)
    assert json.loads(summary.read_text())["residual"] < 1e-9
    est_path, log_path = tmp_path / "est.json", tmp_path / "log.csv"
    main(["simulate", str(config_file), "--policy", str(out), "-o", str(est_path),
          "--event-log", str(log_path)])
    est = json.loads(est_path.read_text())
    assert est["replications"] == 50 and est["seed"] == 4
    assert abs(est["mean"] - V[0]) < 6 * est["standard_error"] + 1e-6
    assert log_path.read_text().startswith("time,event")


def test_cli_sweep_check_export(config_file, tmp_path):
    sweep, meta = tmp_path / "sweep.csv", tmp_path / "meta.json"
    main(["sweep", str(config_file), "-o", str(sweep), "--meta", str(meta)])
    assert len(sweep.read_text().splitlines()) == 6
    assert json.loads(meta.read_text())["parameter"] == "kappa"
    check = tmp_path / "check.json"
    main(["check", str(config_file), "-o", str(check)])
    report = json.loads(check.read_text())
    assert report["domination"]["checked_pairs"] > 0 and report["build_threshold"]["same_idle"]
    export = tmp_path / "v.csv"
    main(["export", str(config_file), "-o", str(export)])
    assert len(export.read_text().splitlines()) == 17


def test_cli_rejects_bad_config(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({**CONFIG, "unknown": 1}))
    with pytest.raises(ConfigError):
        main(["solve", str(path)])
