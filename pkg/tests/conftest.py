import time

import numpy as np
import pytest

from sspc.harness import SimConfig, run_closed_loop
from sspc.kkt import ParameterizedNLP
from sspc.solver import SolverConfig


def scalar_bound_nlp():
    """min 1/2 (z - p)^2 s.t. z <= 0."""
    return ParameterizedNLP(
        1, 0, 1, 1,
        eval_f=lambda z, p: 0.5 * float(z[0] - p[0]) ** 2,
        eval_grad_f=lambda z, p: z - p,
        eval_g=lambda z, p: np.zeros(0),
        eval_jac_g=lambda z, p: np.zeros((0, 1)),
        eval_c=lambda z, p: z.copy(),
        eval_jac_c=lambda z, p: np.ones((1, 1)),
        eval_hess_L=lambda z, lam, v, p: np.ones((1, 1)),
        eval_jac_pz_L=lambda z, lam, v, p: -np.ones((1, 1)),
        eval_jac_p_g=lambda z, p: np.zeros((0, 1)),
        eval_jac_p_c=lambda z, p: np.zeros((1, 1)),
    )


def unconstrained_qp(H):
    """min 1/2 z'Hz - p'z."""
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    return ParameterizedNLP(
        n, 0, 0, n,
        eval_f=lambda z, p: float(0.5 * z @ H @ z - p @ z),
        eval_grad_f=lambda z, p: H @ z - p,
        eval_g=lambda z, p: np.zeros(0),
        eval_jac_g=lambda z, p: np.zeros((0, n)),
        eval_c=lambda z, p: np.zeros(0),
        eval_jac_c=lambda z, p: np.zeros((0, n)),
        eval_hess_L=lambda z, lam, v, p: H,
        eval_jac_pz_L=lambda z, lam, v, p: -np.eye(n),
        eval_jac_p_g=lambda z, p: np.zeros((0, n)),
        eval_jac_p_c=lambda z, p: np.zeros((0, n)),
    )


@pytest.fixture
def scalar_qp():
    return scalar_bound_nlp()


_TRACES = {}
SIM_SECONDS = {}
ACCEPTANCE_LINES = []


def closed_loop(case, N=15, kappa=0.5):
    """Closed-loop trace, computed once per session; wall time lands in SIM_SECONDS."""
    key = (case, N, kappa)
    if key not in _TRACES:
        cfg = SimConfig(case=case, N=N, duration=240.0, solver=SolverConfig(kappa=kappa))
        t0 = time.perf_counter()
        _TRACES[key] = run_closed_loop(cfg)
        SIM_SECONDS[key] = time.perf_counter() - t0
    return _TRACES[key]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def case1_trace():
    return closed_loop(1)


@pytest.fixture(scope="session")
def case2_trace():
    return closed_loop(2)
