"""Independent oracles and diagnostics for the tracker.

Nothing here is used by the solver itself: these are the ground truths and
checks the test suite measures it against.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    ContractViolation,
    DegenerateQP,
    InconclusiveProbe,
    InfeasibleQP,
    NonConvergenceError,
    NonDifferentiablePointError,
)
from .genjac import jac_p, jac_x
from .kkt import ParameterizedNLP, PrimalDual, fd_jacobian, kkt_residual
from .solver import SolverConfig, corrector, predictor

ACTIVITY_TOL = 1e-8


# ---------------------------------------------------------------------------
# parameterized convex QPs

@dataclass
class QpSpec:
    """min 1/2 z'Hz + h(p)'z  s.t.  A_eq z = b_eq(p),  A_in z <= b_in(p).

    Each parameter-dependent vector is affine: ``h(p) = h0 + h_p @ p`` etc.
    """

    H: np.ndarray
    h0: np.ndarray
    h_p: np.ndarray
    A_in: np.ndarray
    b_in0: np.ndarray
    b_in_p: np.ndarray
    A_eq: np.ndarray = None
    b_eq0: np.ndarray = None
    b_eq_p: np.ndarray = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        self.h0 = np.asarray(self.h0, dtype=float).reshape(n)
        self.h_p = np.asarray(self.h_p, dtype=float).reshape(n, -1)
        l = self.h_p.shape[1]
        self.A_in = np.asarray(self.A_in, dtype=float).reshape(-1, n)
        q = self.A_in.shape[0]
        self.b_in0 = np.asarray(self.b_in0, dtype=float).reshape(q)
        self.b_in_p = np.asarray(self.b_in_p, dtype=float).reshape(q, l)
        if self.A_eq is None:
            self.A_eq, self.b_eq0, self.b_eq_p = np.zeros((0, n)), np.zeros(0), np.zeros((0, l))
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        m = self.A_eq.shape[0]
        self.b_eq0 = np.asarray(self.b_eq0, dtype=float).reshape(m)
        self.b_eq_p = np.asarray(self.b_eq_p, dtype=float).reshape(m, l)
        if not np.allclose(self.H, self.H.T) or np.linalg.eigvalsh(self.H).min() <= 0:
            raise ContractViolation("H must be symmetric positive definite")

    @property
    def n(self):
        return self.H.shape[0]

    @property
    def m(self):
        return self.A_eq.shape[0]

    @property
    def q(self):
        return self.A_in.shape[0]

    @property
    def l(self):
        return self.h_p.shape[1]

    def h(self, p):
        return self.h0 + self.h_p @ p

    def b_in(self, p):
        return self.b_in0 + self.b_in_p @ p

    def b_eq(self, p):
        return self.b_eq0 + self.b_eq_p @ p

    def to_nlp(self) -> ParameterizedNLP:
        H, A_eq, A_in = self.H, self.A_eq, self.A_in
        n, m, q, l = self.n, self.m, self.q, self.l
        return ParameterizedNLP(
            n, m, q, l,
            eval_f=lambda z, p: float(0.5 * z @ H @ z + self.h(p) @ z),
            eval_grad_f=lambda z, p: H @ z + self.h(p),
            eval_g=lambda z, p: A_eq @ z - self.b_eq(p),
            eval_jac_g=lambda z, p: A_eq,
            eval_c=lambda z, p: A_in @ z - self.b_in(p),
            eval_jac_c=lambda z, p: A_in,
            eval_hess_L=lambda z, lam, v, p: H,
            eval_jac_pz_L=lambda z, lam, v, p: self.h_p,
            eval_jac_p_g=lambda z, p: -self.b_eq_p,
            eval_jac_p_c=lambda z, p: -self.b_in_p,
        )


def random_qp(rng, n=None, m=None, q=None, l=None) -> QpSpec:
    """A random strictly convex QP with generic (LICQ-satisfying) constraints.

    Sizes default to random draws with ``n <= 5``, ``q <= 4`` and ``m + q <= n``.
    Constraint gradients are scaled orthonormal rows, so every subset of them
    is independent and no active set is badly conditioned.
    """
    n = n or int(rng.integers(2, 6))
    m = int(rng.integers(0, 2)) if m is None else m
    m = min(m, n - 1)
    q = q or int(rng.integers(1, min(4, max(1, n - m)) + 1))
    l = l or int(rng.integers(1, 4))
    M = rng.normal(size=(n, n))
    H = M @ M.T + n * np.eye(n)
    # orthogonal constraint rows keep every active set well conditioned
    Q = np.linalg.qr(rng.normal(size=(n, n)))[0][:, :m + q].T
    A = Q * rng.uniform(0.5, 2.0, size=(m + q, 1))
    return QpSpec(
        H=H,
        h0=rng.normal(size=n),
        h_p=rng.normal(size=(n, l)),
        A_in=A[m:],
        b_in0=rng.normal(size=q) * 0.5,
        b_in_p=rng.normal(size=(q, l)),
        A_eq=A[:m],
        b_eq0=rng.normal(size=m),
        b_eq_p=rng.normal(size=(m, l)),
    )


def active_set_oracle(qp: QpSpec, p, tol: float = 1e-9) -> PrimalDual:
    """Solve a small QP exactly by enumerating every active set."""
    if qp.n > 8 or qp.q > 10:
        raise ContractViolation("enumeration oracle needs n <= 8 and q <= 10")
    p = np.asarray(p, dtype=float).reshape(qp.l)
    n, m, q = qp.n, qp.m, qp.q
    h, b_in, b_eq = qp.h(p), qp.b_in(p), qp.b_eq(p)
    scale = 1.0 + np.abs(b_in).max(initial=0.0)
    found = []
    for mask in itertools.product((False, True), repeat=q):
        act = np.flatnonzero(mask)
        k = act.size
        K = np.zeros((n + m + k, n + m + k))
        K[:n, :n] = qp.H
        K[:n, n:n + m] = qp.A_eq.T
        K[n:n + m, :n] = qp.A_eq
        K[:n, n + m:] = qp.A_in[act].T
        K[n + m:, :n] = qp.A_in[act]
        rhs = np.concatenate([-h, b_eq, b_in[act]])
        if np.linalg.matrix_rank(K) < K.shape[0]:
            continue
        sol = np.linalg.solve(K, rhs)
        z, lam = sol[:n], sol[n:n + m]
        v = np.zeros(q)
        v[act] = sol[n + m:]
        if np.all(qp.A_in @ z - b_in <= tol * scale) and np.all(v >= -tol):
            cand = np.concatenate([z, lam, v])
            if not any(np.allclose(cand, c, atol=1e-8, rtol=1e-8) for c in found):
                found.append(cand)
    if not found:
        raise InfeasibleQP(f"no active set yields a KKT point at p={p}")
    if len(found) > 1:
        raise DegenerateQP(f"{len(found)} distinct KKT candidates at p={p}")
    return PrimalDual.from_vector(found[0], n, m, q)


# ---------------------------------------------------------------------------
# regularity conditions

def _active(nlp, x, p, tol):
    c = np.asarray(nlp.eval_c(x.z, p), dtype=float).reshape(-1)
    return np.abs(c) <= tol


def licq_check(nlp: ParameterizedNLP, x: PrimalDual, p, tol: float = ACTIVITY_TOL) -> bool:
    """Equality gradients and active inequality gradients are linearly independent."""
    p = np.asarray(p, dtype=float)
    rows = []
    if nlp.m:
        rows.append(np.asarray(nlp.eval_jac_g(x.z, p)).reshape(nlp.m, nlp.n))
    if nlp.q:
        act = _active(nlp, x, p, tol)
        rows.append(np.asarray(nlp.eval_jac_c(x.z, p)).reshape(nlp.q, nlp.n)[act])
    A = np.vstack(rows) if rows else np.zeros((0, nlp.n))
    if A.shape[0] == 0:
        return True
    if A.shape[0] > nlp.n:
        return False
    s = np.linalg.svd(A, compute_uv=False)
    return bool(s.min() > tol * s.max())


def ssosc_check(nlp: ParameterizedNLP, x: PrimalDual, p, tol: float = ACTIVITY_TOL) -> bool:
    """Reduced Hessian positive definite on the null space of the strongly active set.

    Exact under strict complementarity; otherwise only sufficient, since the
    cone of weakly active directions is replaced by the larger subspace.
    """
    p = np.asarray(p, dtype=float)
    rows = []
    if nlp.m:
        rows.append(np.asarray(nlp.eval_jac_g(x.z, p)).reshape(nlp.m, nlp.n))
    if nlp.q:
        strong = _active(nlp, x, p, tol) & (x.v > tol)
        rows.append(np.asarray(nlp.eval_jac_c(x.z, p)).reshape(nlp.q, nlp.n)[strong])
    A = np.vstack(rows) if rows else np.zeros((0, nlp.n))
    Z = scipy.linalg.null_space(A) if A.shape[0] else np.eye(nlp.n)
    if Z.shape[1] == 0:
        return True
    H = np.asarray(nlp.eval_hess_L(x.z, x.lam, x.v, p), dtype=float)
    H = 0.5 * (H + H.T)
    return bool(np.linalg.eigvalsh(Z.T @ H @ Z).min() > tol)


# ---------------------------------------------------------------------------
# derivative checks

def complementarity_margin(nlp, x, p) -> float:
    """min_i |v_i + c_i|; zero at a kink of the min function."""
    if nlp.q == 0:
        return np.inf
    c = np.asarray(nlp.eval_c(x.z, np.asarray(p, dtype=float)), dtype=float)
    return float(np.min(np.abs(x.v + c)))


def fd_jacobian_check(nlp: ParameterizedNLP, x: PrimalDual, p, step: float = 1e-6,
                      which: str = "x", scale: str = "entry") -> float:
    """Max relative error between the assembled Jacobian and central differences.

    Entries where both values are below 1e-8 in magnitude are skipped. With
    ``scale="entry"`` each difference is divided by the entry itself; with
    ``scale="row"`` by the largest entry of its row, which removes the
    round-off floor of differencing a residual whose row holds much larger
    terms than the entry being checked.
    """
    p = np.asarray(p, dtype=float)
    if complementarity_margin(nlp, x, p) <= 10 * step:
        raise NonDifferentiablePointError(
            "residual is not differentiable here: some v_i + c_i is within 10*step of 0")
    n, m, q = nlp.n, nlp.m, nlp.q
    if which == "x":
        analytic = jac_x(nlp, x, p, None, 0.0).dense()
        numeric = fd_jacobian(
            lambda vec: kkt_residual(nlp, PrimalDual.from_vector(vec, n, m, q), p).vector,
            x.to_vector(), step)
    elif which == "p":
        analytic = jac_p(nlp, x, p).matrix
        numeric = fd_jacobian(lambda pp: kkt_residual(nlp, x, pp).vector, p, step)
    else:
        raise ContractViolation("which must be 'x' or 'p'")
    mag = np.maximum(np.abs(analytic), np.abs(numeric))
    mask = mag > 1e-8
    if not mask.any():
        return 0.0
    if scale == "row":
        mag = np.broadcast_to(mag.max(axis=1, keepdims=True), mag.shape)
    elif scale != "entry":
        raise ContractViolation("scale must be 'entry' or 'row'")
    return float(np.max(np.abs(analytic - numeric)[mask] / mag[mask]))


# ---------------------------------------------------------------------------
# convergence-rate probes

@dataclass
class ProbeResult:
    order: float | None
    exact_in_one: bool = False
    nondifferentiable: bool = False
    pairs: list = field(default_factory=list)


def _fit_slope(xs, ys):
    xs, ys = np.log(np.asarray(xs)), np.log(np.asarray(ys))
    A = np.vstack([xs, np.ones_like(xs)]).T
    return float(np.linalg.lstsq(A, ys, rcond=None)[0][0])


def convergence_order_probe(nlp: ParameterizedNLP, x_star: PrimalDual, p, radius: float,
                            n_starts: int = 4, seed: int = 0,
                            cfg: SolverConfig | None = None) -> ProbeResult:
    """Estimate the corrector's local order from perturbed starts around ``x_star``.

    Starts sit at radii ``radius, radius/4, ...``; the slope of log e_{j+1}
    against log e_j over the iterates above round-off is the order estimate.
    """
    p = np.asarray(p, dtype=float)
    if complementarity_margin(nlp, x_star, p) <= ACTIVITY_TOL:
        return ProbeResult(None, nondifferentiable=True)
    cfg = cfg or SolverConfig()
    tight = SolverConfig(delta0=cfg.delta0, eps=1e-300, kappa=cfg.kappa,
                         max_corrector_iters=12, pivot_threshold=cfg.pivot_threshold,
                         max_retries=cfg.max_retries, use_schur=cfg.use_schur)
    rng = np.random.default_rng(seed)
    xs = x_star.to_vector()
    floor = 1e-10 * (1.0 + np.linalg.norm(xs))
    pairs = []
    one_step = True
    for k in range(n_starts):
        d = rng.normal(size=xs.size)
        d *= radius * 0.25 ** k / np.linalg.norm(d)
        x0 = PrimalDual.from_vector(xs + d, nlp.n, nlp.m, nlp.q)
        errs = [np.linalg.norm(d)]
        try:
            corrector(nlp, x0, p, cfg.delta0, tight,
                      callback=lambda x: errs.append(np.linalg.norm(x.to_vector() - xs)))
        except NonConvergenceError:
            pass
        if len(errs) < 2 or errs[1] > floor:
            one_step = False
        for a, b in zip(errs, errs[1:]):
            if b > floor and a > floor and b < a:
                pairs.append((a, b))
    if one_step:
        if radius ** 2 < floor:
            # a quadratic contraction would also land below round-off in one step
            raise InconclusiveProbe("radius too small to tell exact from quadratic convergence")
        return ProbeResult(None, exact_in_one=True)
    if len(pairs) < 2:
        raise InconclusiveProbe("too few iterates above round-off to fit an order")
    return ProbeResult(_fit_slope(*zip(*pairs)), pairs=pairs)


def predictor_order_probe(nlp: ParameterizedNLP, x_star: PrimalDual, p0, direction,
                          sizes=(0.2, 0.1, 0.05, 0.025, 0.0125),
                          cfg: SolverConfig | None = None) -> tuple[float, list]:
    """Order of the Euler predictor error in the parameter step.

    From the exact solution at ``p0``, predict to ``p0 + s*direction`` for each
    size s, compare with the converged corrector solution there, and fit the
    slope of log error against log s. Returns (order, errors).
    """
    cfg = cfg or SolverConfig()
    tight = SolverConfig(delta0=0.0, eps=1e-13, max_corrector_iters=50,
                         pivot_threshold=cfg.pivot_threshold)
    p0 = np.asarray(p0, dtype=float)
    direction = np.asarray(direction, dtype=float)
    errors = []
    for s in sizes:
        dp = s * direction
        xm = predictor(nlp, x_star, p0, dp, 0.0, tight)
        x_true, _ = corrector(nlp, xm, p0 + dp, 0.0, tight)
        errors.append(float(np.linalg.norm(xm.to_vector() - x_true.to_vector())))
    return _fit_slope(sizes, errors), errors


def lipschitz_ratios(solve, p_a, p_b, samples: int = 41) -> np.ndarray:
    """Difference quotients |x*(p_j+1) - x*(p_j)| / |p_j+1 - p_j| along a segment."""
    p_a, p_b = np.asarray(p_a, dtype=float), np.asarray(p_b, dtype=float)
    ts = np.linspace(0.0, 1.0, samples)
    sols = [solve(p_a + t * (p_b - p_a)).to_vector() for t in ts]
    dp = np.linalg.norm(p_b - p_a) / (samples - 1)
    return np.array([np.linalg.norm(b - a) / dp for a, b in zip(sols, sols[1:])])


# ---------------------------------------------------------------------------
# test problems

def smooth_test_problem() -> ParameterizedNLP:
    """Nonlinear problem with one equality and one strongly active inequality.

    min 1/2 (z1-2-p1)^2 + 1/2 (z2-1-p2)^2 + 1/2 z3^2 + 0.1 (z1^4 + z2^4)
    s.t. z3 = sin z1,  z1^2 + z2^2 <= 1,  -z2 <= 0
    """

    def f(z, p):
        return float(0.5 * (z[0] - 2 - p[0]) ** 2 + 0.5 * (z[1] - 1 - p[1]) ** 2
                     + 0.5 * z[2] ** 2 + 0.1 * (z[0] ** 4 + z[1] ** 4))

    def grad_f(z, p):
        return np.array([z[0] - 2 - p[0] + 0.4 * z[0] ** 3,
                         z[1] - 1 - p[1] + 0.4 * z[1] ** 3,
                         z[2]])

    def hess_L(z, lam, v, p):
        H = np.diag([1 + 1.2 * z[0] ** 2, 1 + 1.2 * z[1] ** 2, 1.0])
        H[0, 0] += lam[0] * np.sin(z[0]) + 2 * v[0]
        H[1, 1] += 2 * v[0]
        return H

    return ParameterizedNLP(
        3, 1, 2, 2,
        eval_f=f, eval_grad_f=grad_f,
        eval_g=lambda z, p: np.array([z[2] - np.sin(z[0])]),
        eval_jac_g=lambda z, p: np.array([[-np.cos(z[0]), 0.0, 1.0]]),
        eval_c=lambda z, p: np.array([z[0] ** 2 + z[1] ** 2 - 1.0, -z[1]]),
        eval_jac_c=lambda z, p: np.array([[2 * z[0], 2 * z[1], 0.0], [0.0, -1.0, 0.0]]),
        eval_hess_L=hess_L,
        eval_jac_pz_L=lambda z, lam, v, p: np.array([[-1.0, 0.0], [0.0, -1.0], [0.0, 0.0]]),
        eval_jac_p_g=lambda z, p: np.zeros((1, 2)),
        eval_jac_p_c=lambda z, p: np.zeros((2, 2)),
    )


def solve_smooth_test_problem(p=(0.0, 0.0), tol=1e-13) -> PrimalDual:
    """Converged KKT point of :func:`smooth_test_problem` (corrector from a fixed start)."""
    nlp = smooth_test_problem()
    x0 = PrimalDual([0.8, 0.6, np.sin(0.8)], [0.0], [1.0, 0.0])
    cfg = SolverConfig(delta0=0.0, eps=tol, max_corrector_iters=100)
    x, _ = corrector(nlp, x0, np.asarray(p, dtype=float), 0.0, cfg)
    return x


def scalar_bound_qp() -> QpSpec:
    """min 1/2 (z - p)^2  s.t.  z <= 0; solution z = min(p, 0), v = max(p, 0)."""
    return QpSpec(H=[[1.0]], h0=[0.0], h_p=[[-1.0]], A_in=[[1.0]], b_in0=[0.0], b_in_p=[[0.0]])
