import io
import json

import numpy as np
import pytest

from sspc import attitude as att
from sspc.attitude import DEG, SpacecraftParams
from sspc.cli import main
from sspc.errors import ContractViolation, SimulationAborted
from sspc.harness import (
    COLUMNS,
    SimConfig,
    TraceRecord,
    plant_step,
    read_trace,
    run_closed_loop,
    write_trace,
)
from sspc.solver import SolverConfig


def _record(t=0.0):
    return TraceRecord(t=t, xi=np.zeros(6), u_applied=np.zeros(3), kkt_residual=0.0,
                       grid_steps=1, corrector_iters_total=0, solve_time=1.25,
                       delta_final=1e-8)


@pytest.fixture(scope="module")
def short_case2():
    return run_closed_loop(SimConfig(case=2, N=8, duration=36.0))


# ---------------------------------------------------------------------------
# trace files

def test_empty_trace_is_header_only(tmp_path):
    path = tmp_path / "t.csv"
    write_trace([], path)
    assert path.read_text().splitlines() == [",".join(COLUMNS)]
    assert read_trace(path) == []


def test_equilibrium_row_zero_except_bookkeeping(tmp_path):
    path = tmp_path / "t.csv"
    write_trace([_record(3.0)], path)
    row = dict(zip(COLUMNS, path.read_text().splitlines()[1].split(",")))
    nonzero = {k for k, v in row.items() if float(v) != 0.0}
    assert nonzero == {"t", "grid_steps", "solve_ms", "delta_final"}
    assert "e" in row["t"] and row["grid_steps"] == "1"


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_trace_round_trip_bit_identical(tmp_path, short_case2, fmt):
    path = tmp_path / f"trace.{fmt}"
    write_trace(short_case2, path, fmt)
    back = read_trace(path)
    assert len(back) == len(short_case2)
    for a, b in zip(short_case2, back):
        for key in COLUMNS:
            assert a.row()[key] == b.row()[key]
    if fmt == "json":
        data = json.loads(path.read_text())
        assert data["columns"] == list(COLUMNS)


def test_write_to_stream():
    buf = io.StringIO()
    write_trace([_record()], buf)
    assert buf.getvalue().startswith("t,w1,")


def test_write_error_names_path(tmp_path):
    target = tmp_path / "missing" / "t.csv"
    with pytest.raises(OSError, match="missing"):
        write_trace([_record()], target)


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(ContractViolation):
        write_trace([], tmp_path / "t.txt", "xml")


# ---------------------------------------------------------------------------
# closed loop

def test_zero_reference_stays_at_rest():
    trace = run_closed_loop(SimConfig(N=6, duration=30.0, reference=lambda t: np.zeros(6)))
    for rec in trace:
        assert np.linalg.norm(rec.u_applied) <= 1e-6
        assert np.all(rec.xi == 0.0)


def test_time_grid_and_residuals(short_case2):
    ts = [r.t for r in short_case2]
    np.testing.assert_allclose(np.diff(ts), att.SAMPLE_TIME)
    assert ts[0] == 0.0
    assert all(r.kkt_residual <= 1e-5 for r in short_case2)


def test_plant_consistency(short_case2):
    params = SpacecraftParams.for_case(2, N=8)
    for a, b in zip(short_case2, short_case2[1:]):
        nxt = plant_step(a.xi * DEG, a.u_applied, params) / DEG
        np.testing.assert_allclose(nxt, b.xi, rtol=1e-12, atol=1e-12)


def test_rk4_plant_option():
    trace = run_closed_loop(SimConfig(N=6, duration=15.0, plant_integrator="rk4"))
    assert len(trace) == 5 and all(r.kkt_residual <= 1e-5 for r in trace)
    euler = run_closed_loop(SimConfig(N=6, duration=15.0))
    assert not np.allclose(trace[-1].xi, euler[-1].xi, rtol=0, atol=1e-12)


def test_noise_is_seeded():
    cfg = dict(N=6, duration=12.0, noise_std=0.05)
    a = run_closed_loop(SimConfig(seed=1, **cfg))
    b = run_closed_loop(SimConfig(seed=1, **cfg))
    c = run_closed_loop(SimConfig(seed=2, **cfg))
    assert np.array_equal(a[-1].xi, b[-1].xi)
    assert not np.array_equal(a[-1].xi, c[-1].xi)


def test_abort_keeps_partial_trace():
    cfg = SimConfig(N=6, duration=30.0, solver=SolverConfig(max_corrector_iters=1, kappa=5.0))
    with pytest.raises(SimulationAborted) as info:
        run_closed_loop(cfg)
    assert info.value.step >= 1 and len(info.value.trace) == info.value.step


@pytest.mark.parametrize("kw", [dict(case=3), dict(duration=10.0), dict(duration=-3.0),
                                dict(plant_integrator="rk45"), dict(format="xml"),
                                dict(repeats=0)])
def test_sim_config_validation(kw):
    with pytest.raises(ContractViolation):
        SimConfig(**kw).validate()


@pytest.mark.slow
def test_warm_start_iterations(case1_trace):
    for k, rec in enumerate(case1_trace):
        if k >= 3 and abs(rec.t - att.REFERENCE_SWITCH) > att.SAMPLE_TIME:
            assert rec.corrector_iters_total <= 10, (rec.t, rec.corrector_iters_total)


@pytest.mark.slow
def test_reference_switch_converges(case1_trace):
    rec = next(r for r in case1_trace if r.t == att.REFERENCE_SWITCH)
    assert rec.kkt_residual <= 1e-5 and rec.grid_steps >= 1


# ---------------------------------------------------------------------------
# command line

def test_cli_writes_trace(tmp_path):
    out = tmp_path / "run.csv"
    assert main(["--case", "2", "--horizon", "6", "--duration", "12", "--out", str(out)]) == 0
    trace = read_trace(out)
    assert len(trace) == 4 and all(r.kkt_residual <= 1e-5 for r in trace)


def test_cli_stdout_json(capsys):
    assert main(["--horizon", "5", "--duration", "6", "--format", "json", "--schur"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data["records"]) == 2


def test_cli_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"case": 2, "horizon": 5, "duration": 9, "format": "json",
                               "kappa": 0.4}))
    out = tmp_path / "run.csv"
    assert main(["--config", str(cfg), "--format", "csv", "--out", str(out)]) == 0
    assert len(read_trace(out, "csv")) == 3


def test_cli_bad_config(tmp_path, capsys):
    assert main(["--duration", "7"]) == 2
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["--config", str(cfg)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_cli_abort_exit_code(tmp_path, capsys):
    out = tmp_path / "run.csv"
    code = main(["--horizon", "6", "--duration", "30", "--max-iters", "1", "--kappa", "5",
                 "--out", str(out)])
    assert code == 1
    assert "aborted" in capsys.readouterr().err
    assert len(read_trace(out)) >= 1
