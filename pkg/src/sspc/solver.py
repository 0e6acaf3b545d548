"""Semismooth Euler-Newton predictor-corrector for tracking KKT points.

``track`` moves a primal-dual point from ``p_prev`` to ``p_next`` along the
straight line between them using a uniform grid of ``M`` sub-steps, each made
of one Euler predictor followed by a semismooth Newton corrector loop.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    ContractViolation,
    CorrectorFailure,
    DegeneratePivotError,
    EvaluationError,
    NonConvergenceError,
    PredictorFailure,
    SingularMatrixError,
    SolverFailure,
)
from .genjac import JacobianX, gamma_select, jac_p, jac_x
from .kkt import ParameterizedNLP, PrimalDual, check_dims, kkt_residual

log = logging.getLogger(__name__)

DELTA_FLOOR = 1e-12


@dataclass
class SolverConfig:
    delta0: float = 1e-8
    eps: float = 1e-5
    kappa: float = 0.5
    max_corrector_iters: int = 50
    pivot_threshold: float = 1e-14
    max_retries: int = 5
    use_schur: bool = False

    def __post_init__(self):
        if self.delta0 < 0:
            raise ContractViolation("delta0 must be >= 0")
        if self.eps <= 0 or self.kappa <= 0 or self.pivot_threshold <= 0:
            raise ContractViolation("eps, kappa and pivot_threshold must be positive")
        if self.max_corrector_iters < 1:
            raise ContractViolation("max_corrector_iters must be >= 1")
        if self.max_retries < 0:
            raise ContractViolation("max_retries must be >= 0")


@dataclass
class StepReport:
    grid_steps: int = 1
    corrector_iters_per_step: list = field(default_factory=list)
    final_residual: float = float("nan")
    delta_history: list = field(default_factory=list)
    retries: int = 0
    converged: bool = False

    @property
    def h(self) -> float:
        return 1.0 / self.grid_steps

    @property
    def corrector_iters_total(self) -> int:
        return int(sum(self.corrector_iters_per_step))


# ---------------------------------------------------------------------------
# linear algebra

def linear_solve(A, b, pivot_threshold: float = 1e-14) -> np.ndarray:
    """Dense LU solve with partial pivoting and a relative pivot-size check."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ContractViolation(f"incompatible system shapes {A.shape} and {b.shape}")
    if A.shape[0] == 0:
        return np.zeros_like(b)
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    largest = pivots.max()
    small = np.flatnonzero(pivots < pivot_threshold * largest) if largest > 0 else [0]
    if len(small):
        i = int(small[0])
        raise SingularMatrixError(i, float(np.diag(lu)[i]), float(largest))
    return scipy.linalg.lu_solve((lu, piv), b)


def schur_reduced_solve(J: JacobianX, rhs, pivot_threshold: float = 1e-14) -> np.ndarray:
    """Solve ``J.dense() @ d = rhs`` by eliminating the multiplier block on D-hat.

    From the last block row, dv = Dhat^-1 (r3 + C Jc dz); substituting leaves
    the (n+m) saddle system with Hessian H + Jc' Dhat^-1 C Jc.
    """
    n, m, q = J.n, J.m, J.q
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != n + m + q:
        raise ContractViolation(f"rhs of length {rhs.shape[0]}, expected {n + m + q}")
    r1, r2, r3 = rhs[:n], rhs[n:n + m], rhs[n + m:]
    dhat = J.dhat
    if q:
        bad = np.flatnonzero(dhat <= pivot_threshold)
        if bad.size:
            i = int(bad[0])
            raise DegeneratePivotError(i, float(dhat[i]), float(dhat.max()))
    scale = J.gamma.gamma / dhat if q else np.zeros(0)
    K = np.zeros((n + m, n + m))
    K[:n, :n] = J.H + J.Jc.T @ (scale[:, None] * J.Jc)
    K[:n, n:] = J.G.T
    K[n:, :n] = J.G
    red = np.concatenate([r1 - J.Jc.T @ (r3 / dhat), r2]) if q else np.concatenate([r1, r2])
    sol = linear_solve(K, red, pivot_threshold)
    dz = sol[:n]
    dv = (r3 + J.gamma.gamma * (J.Jc @ dz)) / dhat if q else np.zeros(0)
    return np.concatenate([sol, dv])


def _solve(J: JacobianX, rhs, cfg: SolverConfig):
    if cfg.use_schur:
        return schur_reduced_solve(J, rhs, cfg.pivot_threshold)
    return linear_solve(J.dense(), rhs, cfg.pivot_threshold)


def _escalate(delta, delta0):
    return max(10.0 * delta, delta0, DELTA_FLOOR)


def _newton_direction(nlp, x, p, rhs_fn, delta, cfg, report, failure):
    """Solve ``Jhat d = rhs`` at x with delta-escalation on singular pivots.

    ``rhs_fn(gamma)`` builds the right-hand side (the predictor needs gamma
    to form the parameter Jacobian). Returns (d, delta_used).
    """
    gamma = gamma_select(nlp.eval_c(x.z, p), x.v)
    J = jac_x(nlp, x, p, gamma, 0.0)
    rhs = rhs_fn(gamma)
    for attempt in range(cfg.max_retries + 1):
        Jd = JacobianX(J.H, J.G, J.Jc, gamma, delta)
        try:
            d = _solve(Jd, rhs, cfg)
            report.delta_history.append(delta)
            return d, delta
        except SingularMatrixError as exc:
            if attempt == cfg.max_retries:
                raise failure(
                    f"singular iteration matrix after {cfg.max_retries} retries: {exc}", report
                ) from exc
            delta = _escalate(delta, cfg.delta0)
            report.retries += 1
            log.info("singular pivot, raising delta to %.1e", delta)


def _as_vector(nlp, x):
    return x.to_vector()


def _from_vector(nlp, vec):
    return PrimalDual.from_vector(vec, nlp.n, nlp.m, nlp.q)


# ---------------------------------------------------------------------------
# predictor / corrector

def _predict(nlp, x, p, dp_step, delta, cfg, report):
    dp_step = np.asarray(dp_step, dtype=float).reshape(-1)
    F = kkt_residual(nlp, x, p).vector

    def rhs(gamma):
        V = jac_p(nlp, x, p, gamma).matrix
        return V @ dp_step + F

    d, delta = _newton_direction(nlp, x, p, rhs, delta, cfg, report, PredictorFailure)
    return _from_vector(nlp, _as_vector(nlp, x) - d), delta


def predictor(nlp: ParameterizedNLP, x: PrimalDual, p, dp_step, delta: float,
              cfg: SolverConfig | None = None) -> PrimalDual:
    """Euler step: x- = x - Bhat^-1 (V dp_step + F(x, p))."""
    cfg = cfg or SolverConfig()
    p = check_dims(nlp, x, p)
    if np.size(dp_step) != nlp.l:
        raise ContractViolation("parameter increment has the wrong length")
    xm, _ = _predict(nlp, x, p, dp_step, delta, cfg, StepReport())
    return xm


def _correct(nlp, x, p, delta, cfg, report, max_iters=None, callback=None):
    max_iters = max_iters or cfg.max_corrector_iters
    F = kkt_residual(nlp, x, p).vector
    res = float(np.linalg.norm(F))
    iters = 0
    while res > cfg.eps:
        if iters >= max_iters:
            report.final_residual = res
            raise NonConvergenceError(
                f"corrector did not reach {cfg.eps:.1e} in {max_iters} iterations "
                f"(residual {res:.3e})", res, report)
        delta = min(delta, res)
        d, delta = _newton_direction(nlp, x, p, lambda _g, F=F: F, delta, cfg, report,
                                     CorrectorFailure)
        x = _from_vector(nlp, _as_vector(nlp, x) - d)
        iters += 1
        try:
            F = kkt_residual(nlp, x, p).vector
        except EvaluationError:
            F = np.full(1, np.nan)
        res = float(np.linalg.norm(F))
        if not np.isfinite(res):
            report.final_residual = res
            raise NonConvergenceError("corrector diverged to a non-finite residual", res, report)
        if callback is not None:
            callback(x)
    return x, iters, delta, res


def corrector(nlp: ParameterizedNLP, x: PrimalDual, p, delta: float,
              cfg: SolverConfig | None = None, callback=None):
    """Semismooth Newton loop at fixed p. Returns (x, iterations)."""
    cfg = cfg or SolverConfig()
    p = check_dims(nlp, x, p)
    x, iters, _, _ = _correct(nlp, x, p, delta, cfg, StepReport(), callback=callback)
    return x, iters


# ---------------------------------------------------------------------------
# tracking

_GRID_ULPS = 4 * np.finfo(float).eps


def grid_size(dp_norm: float, kappa: float) -> int:
    """Number of uniform sub-steps: max(1, ceil(|dp| / kappa)).

    A ratio within a few ulps above an integer j counts as j, so that
    ``|dp| = j * kappa`` computed in floating point still gives M = j.
    """
    return max(1, math.ceil(dp_norm / kappa * (1.0 - _GRID_ULPS)))


def grid_points(p_prev, p_next, M: int):
    """The M+1 parameters P(i/M) on the segment, endpoints returned exactly."""
    p_prev = np.asarray(p_prev, dtype=float)
    p_next = np.asarray(p_next, dtype=float)
    dp = p_next - p_prev
    pts = [p_prev + (i / M) * dp for i in range(M)]
    pts[0] = p_prev.copy()
    pts.append(p_next.copy())
    return pts


def track(nlp: ParameterizedNLP, x_prev: PrimalDual, p_prev, p_next,
          cfg: SolverConfig | None = None):
    """Follow the KKT point from ``p_prev`` to ``p_next``.

    Returns ``(x, report)`` with ``||F(x, p_next)|| <= cfg.eps``. Failures
    raise a :class:`SolverFailure` whose ``report`` holds the partial history.
    """
    cfg = cfg or SolverConfig()
    p_prev = check_dims(nlp, x_prev, p_prev)
    p_next = check_dims(nlp, x_prev, p_next)
    dp = p_next - p_prev
    M = grid_size(float(np.linalg.norm(dp)), cfg.kappa)
    h = 1.0 / M
    report = StepReport(grid_steps=M)
    pts = grid_points(p_prev, p_next, M)
    x = x_prev.copy()
    delta = cfg.delta0
    try:
        for i in range(M):
            p, p_plus = pts[i], pts[i + 1]
            # a zero increment makes the Euler step a plain Newton step, which
            # the corrector below already takes when it is needed
            if np.any(dp != 0.0):
                delta = min(delta, kkt_residual(nlp, x, p).norm)
                x, delta = _predict(nlp, x, p, h * dp, delta, cfg, report)
            x, iters, delta, res = _correct(nlp, x, p_plus, delta, cfg, report)
            report.corrector_iters_per_step.append(iters)
    except SolverFailure as exc:
        exc.report = report
        raise
    report.final_residual = res
    report.converged = True
    return x, report
