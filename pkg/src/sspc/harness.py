"""Closed-loop NMPC simulation of the attitude benchmark and trace I/O."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import attitude
from .attitude import DEG, SpacecraftParams, build_nlp
from .errors import ContractViolation, SimulationAborted, SSPCError
from .solver import SolverConfig, track

log = logging.getLogger(__name__)

COLUMNS = ("t", "w1", "w2", "w3", "th1", "th2", "th3", "u1", "u2", "u3",
           "kkt_res", "grid_steps", "corr_iters", "solve_ms", "delta_final")
_INT_COLUMNS = {"grid_steps", "corr_iters"}
COLD_START_BUDGET = 4


@dataclass
class SimConfig:
    case: int = 1
    N: int = 15
    duration: float = 240.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    out: str | None = None
    format: str = "csv"
    plant_integrator: str = "euler"
    seed: int | None = None
    noise_std: float = 0.0  # measurement noise, degrees (rates: deg/s)
    repeats: int = 1
    slack_mode: str = "scalar"
    reference: Callable[[float], np.ndarray] = attitude.reference

    def validate(self, tau=attitude.SAMPLE_TIME):
        if self.case not in (1, 2):
            raise ContractViolation(f"case must be 1 or 2, got {self.case!r}")
        if self.duration <= 0:
            raise ContractViolation("duration must be positive")
        steps = self.duration / tau
        if abs(steps - round(steps)) > 1e-9:
            raise ContractViolation(f"duration {self.duration} is not a multiple of {tau} s")
        if self.plant_integrator not in ("euler", "rk4"):
            raise ContractViolation("plant_integrator must be 'euler' or 'rk4'")
        if self.format not in ("csv", "json"):
            raise ContractViolation("format must be 'csv' or 'json'")
        if self.repeats < 1:
            raise ContractViolation("repeats must be >= 1")


@dataclass
class TraceRecord:
    t: float
    xi: np.ndarray          # (w [deg/s], theta [deg]) at time t
    u_applied: np.ndarray   # N m
    kkt_residual: float
    grid_steps: int
    corrector_iters_total: int
    solve_time: float       # ms
    delta_final: float

    def row(self) -> dict:
        vals = [self.t, *self.xi, *self.u_applied, self.kkt_residual, self.grid_steps,
                self.corrector_iters_total, self.solve_time, self.delta_final]
        return dict(zip(COLUMNS, vals))

    @classmethod
    def from_row(cls, row: dict) -> "TraceRecord":
        def num(k):
            v = row[k]
            return int(v) if k in _INT_COLUMNS else float(v)

        return cls(
            t=num("t"),
            xi=np.array([num(k) for k in COLUMNS[1:7]]),
            u_applied=np.array([num(k) for k in COLUMNS[7:10]]),
            kkt_residual=num("kkt_res"),
            grid_steps=num("grid_steps"),
            corrector_iters_total=num("corr_iters"),
            solve_time=num("solve_ms"),
            delta_final=num("delta_final"),
        )


def plant_step(xi, u, params: SpacecraftParams, integrator="euler"):
    if integrator == "euler":
        return attitude.discrete_dynamics(xi, u, params)
    return attitude.rk4_step(xi, u, params.tau, params.J, substeps=10)


def run_closed_loop(cfg: SimConfig) -> list[TraceRecord]:
    """Simulate the receding-horizon loop; every solve warm-starts from the last.

    The first solve starts from the zero-control equilibrium guess, treated as
    the solution for a zero reference, and is tracked to the first real
    parameter with a relaxed corrector budget.
    """
    cfg.validate()
    params = SpacecraftParams.for_case(cfg.case, N=cfg.N)
    inst = build_nlp(params, cfg.slack_mode)
    nlp = inst.nlp
    steps = int(round(cfg.duration / params.tau))
    rng = np.random.default_rng(cfg.seed)

    xi = np.zeros(6)
    x = inst.equilibrium_guess(xi)
    p_prev = inst.parameter(xi, np.zeros(6))
    first_cfg = dataclasses.replace(
        cfg.solver, max_corrector_iters=cfg.solver.max_corrector_iters * COLD_START_BUDGET)

    trace: list[TraceRecord] = []
    for k in range(steps):
        t = k * params.tau
        meas = xi.copy()
        if cfg.noise_std > 0:
            meas = meas + rng.normal(scale=cfg.noise_std * DEG, size=6)
        p = inst.parameter(meas, np.asarray(cfg.reference(t), dtype=float) * DEG)
        scfg = first_cfg if k == 0 else cfg.solver
        try:
            elapsed = 0.0
            for _ in range(cfg.repeats):
                t0 = time.perf_counter()
                x_new, report = track(nlp, x, p_prev, p, scfg)
                elapsed += time.perf_counter() - t0
        except SSPCError as exc:
            raise SimulationAborted(k, trace, exc) from exc
        x = x_new
        u = inst.controls(x.z)[0].copy()
        trace.append(TraceRecord(
            t=t,
            xi=xi / DEG,
            u_applied=u,
            kkt_residual=report.final_residual,
            grid_steps=report.grid_steps,
            corrector_iters_total=report.corrector_iters_total,
            solve_time=1e3 * elapsed / cfg.repeats,
            delta_final=report.delta_history[-1] if report.delta_history else cfg.solver.delta0,
        ))
        log.debug("t=%6.1f res=%.2e M=%d iters=%d", t, report.final_residual,
                  report.grid_steps, report.corrector_iters_total)
        try:
            xi = plant_step(xi, u, params, cfg.plant_integrator)
        except SSPCError as exc:
            raise SimulationAborted(k, trace, exc) from exc
        p_prev = p
    return trace


# ---------------------------------------------------------------------------
# trace files

def _fmt(key, value):
    if key in _INT_COLUMNS:
        return str(int(value))
    return f"{float(value):.17e}"


def _dump(records, fh, format):
    if format == "csv":
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for rec in records:
            writer.writerow([_fmt(k, v) for k, v in rec.row().items()])
    elif format == "json":
        rows = [{k: (int(v) if k in _INT_COLUMNS else float(v)) for k, v in rec.row().items()}
                for rec in records]
        json.dump({"columns": list(COLUMNS), "records": rows}, fh, indent=1)
        fh.write("\n")
    else:
        raise ContractViolation(f"unknown trace format {format!r}")


def write_trace(records, path, format="csv"):
    """Write a trace to ``path`` (a file name or an open text stream)."""
    if format not in ("csv", "json"):
        raise ContractViolation(f"unknown trace format {format!r}")
    if hasattr(path, "write"):
        _dump(records, path, format)
        return
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            _dump(records, fh, format)
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc


def read_trace(path, format=None) -> list[TraceRecord]:
    path = Path(path)
    format = format or ("json" if path.suffix == ".json" else "csv")
    if format == "json":
        data = json.loads(path.read_text())
        return [TraceRecord.from_row(r) for r in data["records"]]
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ContractViolation(f"unexpected trace header {reader.fieldnames}")
        return [TraceRecord.from_row(r) for r in reader]
