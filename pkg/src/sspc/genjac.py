"""Elements of the generalized Jacobians of the KKT residual.

For the residual ``F = [grad_z L; g; min(-c, v)]`` one element of the
generalized Jacobian in x is

    [ H        G'   Jc' ]
    [ G        0    0   ]
    [ -C Jc    0    D   ]

with ``C = diag(gamma)``, ``D = I - C``. In p it is
``[d/dp grad_z L; d/dp g; -C d/dp c]`` with the same ``C``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, EvaluationError
from .kkt import ParameterizedNLP, PrimalDual, check_dims, checked


@dataclass(frozen=True)
class GammaVector:
    gamma: np.ndarray

    @property
    def C(self) -> np.ndarray:
        return np.diag(self.gamma)

    @property
    def D(self) -> np.ndarray:
        return np.diag(1.0 - self.gamma)

    def __len__(self):
        return self.gamma.size


def gamma_select(cvals, v) -> GammaVector:
    """Pick the branch of min(-c_i, v_i) that is attained.

    gamma_i = 1 when v_i > -c_i (the multiplier branch is not the minimum, so
    the constraint is treated as active), 0 when v_i < -c_i. Ties resolve to 1.
    """
    cvals = np.asarray(cvals, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if cvals.shape != v.shape:
        raise ContractViolation("c and v must have the same length")
    if not (np.all(np.isfinite(cvals)) and np.all(np.isfinite(v))):
        raise EvaluationError("gamma_select")
    return GammaVector(np.where(v >= -cvals, 1.0, 0.0))


@dataclass(frozen=True)
class JacobianX:
    H: np.ndarray
    G: np.ndarray
    Jc: np.ndarray
    gamma: GammaVector
    delta: float

    @property
    def n(self):
        return self.H.shape[0]

    @property
    def m(self):
        return self.G.shape[0]

    @property
    def q(self):
        return self.Jc.shape[0]

    @property
    def GT(self):
        return self.G.T

    @property
    def JcT(self):
        return self.Jc.T

    @property
    def CJc(self):
        """The lower-left block, -C Jc."""
        return -self.gamma.gamma[:, None] * self.Jc

    @property
    def dhat(self) -> np.ndarray:
        """Diagonal of D + delta I."""
        return 1.0 - self.gamma.gamma + self.delta

    @property
    def Dhat(self) -> np.ndarray:
        return np.diag(self.dhat)

    def dense(self) -> np.ndarray:
        n, m, q = self.n, self.m, self.q
        K = np.zeros((n + m + q, n + m + q))
        K[:n, :n] = self.H
        K[:n, n:n + m] = self.G.T
        K[:n, n + m:] = self.Jc.T
        K[n:n + m, :n] = self.G
        K[n + m:, :n] = self.CJc
        K[n + m:, n + m:] = self.Dhat
        return K


@dataclass(frozen=True)
class JacobianP:
    matrix: np.ndarray
    gamma: GammaVector


def _gamma_for(nlp, x, p, gamma):
    if gamma is None:
        return gamma_select(nlp.eval_c(x.z, p), x.v)
    if len(gamma) != nlp.q:
        raise ContractViolation(f"gamma of length {len(gamma)}, expected {nlp.q}")
    return gamma


def jac_x(nlp: ParameterizedNLP, x: PrimalDual, p, gamma: GammaVector | None = None,
          delta: float = 0.0) -> JacobianX:
    """Assemble the x-Jacobian element selected by ``gamma`` with D replaced by D + delta I."""
    if delta < 0:
        raise ContractViolation("delta must be non-negative")
    p = check_dims(nlp, x, p)
    gamma = _gamma_for(nlp, x, p, gamma)
    n, m, q = nlp.n, nlp.m, nlp.q
    H = checked("hess_L", nlp.eval_hess_L(x.z, x.lam, x.v, p), (n, n))
    H = 0.5 * (H + H.T)
    G = checked("jac_g", nlp.eval_jac_g(x.z, p), (m, n)) if m else np.zeros((0, n))
    Jc = checked("jac_c", nlp.eval_jac_c(x.z, p), (q, n)) if q else np.zeros((0, n))
    return JacobianX(H, G, Jc, gamma, float(delta))


def jac_p(nlp: ParameterizedNLP, x: PrimalDual, p, gamma: GammaVector | None = None) -> JacobianP:
    p = check_dims(nlp, x, p)
    gamma = _gamma_for(nlp, x, p, gamma)
    n, m, q, l = nlp.n, nlp.m, nlp.q, nlp.l
    top = checked("jac_pz_L", nlp.eval_jac_pz_L(x.z, x.lam, x.v, p), (n, l))
    mid = checked("jac_p_g", nlp.eval_jac_p_g(x.z, p), (m, l)) if m else np.zeros((0, l))
    bot = checked("jac_p_c", nlp.eval_jac_p_c(x.z, p), (q, l)) if q else np.zeros((0, l))
    return JacobianP(np.vstack([top, mid, -gamma.gamma[:, None] * bot]), gamma)
