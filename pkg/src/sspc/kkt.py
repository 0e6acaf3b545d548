"""Parameterized NLPs and the min-function KKT residual.

The problem is

    min_z f(z, p)  s.t.  g(z, p) = 0,  c(z, p) <= 0

and the residual stacks the Lagrangian gradient, the equality constraints and
``min(-c_i, v_i)`` for every inequality.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractViolation, EvaluationError

Array = np.ndarray


@dataclass(frozen=True)
class ParameterizedNLP:
    """Dimensions plus dense evaluation callbacks.

    ``eval_hess_L(z, lam, v, p)`` is the Hessian of the Lagrangian
    ``f + g'lam + c'v`` in z; ``eval_jac_pz_L`` is d/dp of its gradient (n x l).
    """

    n: int
    m: int
    q: int
    l: int
    eval_f: Callable[[Array, Array], float]
    eval_grad_f: Callable[[Array, Array], Array]
    eval_g: Callable[[Array, Array], Array]
    eval_jac_g: Callable[[Array, Array], Array]
    eval_c: Callable[[Array, Array], Array]
    eval_jac_c: Callable[[Array, Array], Array]
    eval_hess_L: Callable[[Array, Array, Array, Array], Array]
    eval_jac_pz_L: Callable[[Array, Array, Array, Array], Array]
    eval_jac_p_g: Callable[[Array, Array], Array]
    eval_jac_p_c: Callable[[Array, Array], Array]

    @property
    def size(self) -> int:
        return self.n + self.m + self.q


@dataclass
class PrimalDual:
    z: Array
    lam: Array
    v: Array

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float).reshape(-1)
        self.lam = np.asarray(self.lam, dtype=float).reshape(-1)
        self.v = np.asarray(self.v, dtype=float).reshape(-1)

    @classmethod
    def from_vector(cls, vec, n: int, m: int, q: int) -> "PrimalDual":
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if vec.size != n + m + q:
            raise ContractViolation(f"vector of length {vec.size}, expected {n + m + q}")
        return cls(vec[:n].copy(), vec[n:n + m].copy(), vec[n + m:].copy())

    @classmethod
    def zeros(cls, nlp: ParameterizedNLP) -> "PrimalDual":
        return cls(np.zeros(nlp.n), np.zeros(nlp.m), np.zeros(nlp.q))

    def to_vector(self) -> Array:
        return np.concatenate([self.z, self.lam, self.v])

    def __len__(self):
        return self.z.size + self.lam.size + self.v.size

    def copy(self) -> "PrimalDual":
        return PrimalDual(self.z.copy(), self.lam.copy(), self.v.copy())


@dataclass(frozen=True)
class KktResidual:
    stationarity: Array
    feas_eq: Array
    complementarity: Array

    @property
    def vector(self) -> Array:
        return np.concatenate([self.stationarity, self.feas_eq, self.complementarity])

    @property
    def norm(self) -> float:
        vec = self.vector
        big = np.abs(vec).max(initial=0.0)
        if big == 0.0 or not np.isfinite(big):
            return float(big)
        # scaled so tiny nonzero residuals do not underflow to 0
        return float(big * np.linalg.norm(vec / big))


def ncp_min(a, b):
    """The min complementarity function: zero iff a >= 0, b >= 0 and a*b = 0."""
    return np.minimum(a, b)


def check_dims(nlp: ParameterizedNLP, x: PrimalDual, p) -> Array:
    p = np.asarray(p, dtype=float).reshape(-1)
    if x.z.size != nlp.n or x.lam.size != nlp.m or x.v.size != nlp.q:
        raise ContractViolation(
            f"primal-dual sizes ({x.z.size}, {x.lam.size}, {x.v.size}) do not match "
            f"problem ({nlp.n}, {nlp.m}, {nlp.q})"
        )
    if p.size != nlp.l:
        raise ContractViolation(f"parameter of length {p.size}, expected {nlp.l}")
    return p


def checked(block: str, value, shape) -> Array:
    """Coerce a callback output to ``shape`` and reject non-finite entries."""
    arr = np.asarray(value, dtype=float)
    if arr.size != int(np.prod(shape)):
        raise ContractViolation(f"block '{block}' has shape {arr.shape}, expected {shape}")
    arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(block)
    return arr


def kkt_residual(nlp: ParameterizedNLP, x: PrimalDual, p) -> KktResidual:
    p = check_dims(nlp, x, p)
    z, lam, v = x.z, x.lam, x.v
    grad = checked("grad_f", nlp.eval_grad_f(z, p), (nlp.n,))
    stat = grad.copy()
    if nlp.m:
        stat += checked("jac_g", nlp.eval_jac_g(z, p), (nlp.m, nlp.n)).T @ lam
    feas = checked("g", nlp.eval_g(z, p), (nlp.m,))
    if nlp.q:
        stat += checked("jac_c", nlp.eval_jac_c(z, p), (nlp.q, nlp.n)).T @ v
    cvals = checked("c", nlp.eval_c(z, p), (nlp.q,))
    if not np.all(np.isfinite(stat)):
        raise EvaluationError("stationarity")
    return KktResidual(stat, feas, ncp_min(-cvals, v))


def is_kkt_point(nlp: ParameterizedNLP, x: PrimalDual, p, tol: float) -> bool:
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    res = kkt_residual(nlp, x, p)
    if res.norm > tol:
        return False
    p = np.asarray(p, dtype=float).reshape(-1)
    cvals = np.asarray(nlp.eval_c(x.z, p), dtype=float).reshape(-1)
    return bool(np.all(x.v >= -tol) and np.all(cvals <= tol))


# ---------------------------------------------------------------------------
# finite-difference helpers (validation only)

def _fd_step(x, step):
    # nearest power of two, so x +- h is exact whenever x is a dyadic rational
    return np.exp2(np.round(np.log2(step * (1.0 + np.abs(x)))))


def fd_jacobian(fun, x, step=1e-6) -> Array:
    """Central-difference Jacobian of ``fun`` at ``x`` (rows: outputs)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    f0 = np.atleast_1d(np.asarray(fun(x), dtype=float))
    jac = np.empty((f0.size, x.size))
    hs = _fd_step(x, step)
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += hs[j]
        xm[j] -= hs[j]
        jac[:, j] = (np.atleast_1d(fun(xp)) - np.atleast_1d(fun(xm))) / (xp[j] - xm[j])
    return jac


def fd_hessian_lagrangian(nlp: ParameterizedNLP, x: PrimalDual, p, step=1e-6) -> Array:
    """Hessian of the Lagrangian by differencing the problem's own first derivatives."""
    p = np.asarray(p, dtype=float)

    def grad_L(z):
        out = np.asarray(nlp.eval_grad_f(z, p), dtype=float).copy()
        if nlp.m:
            out += np.asarray(nlp.eval_jac_g(z, p)).T @ x.lam
        if nlp.q:
            out += np.asarray(nlp.eval_jac_c(z, p)).T @ x.v
        return out

    H = fd_jacobian(grad_L, x.z, step)
    return 0.5 * (H + H.T)


def with_fd_derivatives(n, m, q, l, f, g=None, c=None, step=1e-6) -> ParameterizedNLP:
    """Build a ParameterizedNLP from function values alone.

    First derivatives use central differences with ``step``; second
    derivatives difference those again with a coarser step (sqrt of the
    first), so expect roughly 1e-5 relative accuracy. For tests only.
    """
    g = g or (lambda z, p: np.zeros(0))
    c = c or (lambda z, p: np.zeros(0))
    step2 = np.sqrt(step) * 1e-1

    def grad_f(z, p):
        return fd_jacobian(lambda zz: np.atleast_1d(f(zz, p)), z, step)[0]

    def jac_g(z, p):
        return fd_jacobian(lambda zz: g(zz, p), z, step).reshape(m, n)

    def jac_c(z, p):
        return fd_jacobian(lambda zz: c(zz, p), z, step).reshape(q, n)

    def grad_L(z, lam, v, p):
        out = grad_f(z, p)
        if m:
            out = out + jac_g(z, p).T @ lam
        if q:
            out = out + jac_c(z, p).T @ v
        return out

    def hess_L(z, lam, v, p):
        return fd_jacobian(lambda zz: grad_L(zz, lam, v, p), z, step2)

    def jac_pz_L(z, lam, v, p):
        return fd_jacobian(lambda pp: grad_L(z, lam, v, pp), p, step2).reshape(n, l)

    def jac_p_g(z, p):
        return fd_jacobian(lambda pp: g(z, pp), p, step).reshape(m, l)

    def jac_p_c(z, p):
        return fd_jacobian(lambda pp: c(z, pp), p, step).reshape(q, l)

    return ParameterizedNLP(
        n, m, q, l,
        eval_f=f, eval_grad_f=grad_f,
        eval_g=g, eval_jac_g=jac_g,
        eval_c=c, eval_jac_c=jac_c,
        eval_hess_L=hess_L, eval_jac_pz_L=jac_pz_L,
        eval_jac_p_g=jac_p_g, eval_jac_p_c=jac_p_c,
    )
