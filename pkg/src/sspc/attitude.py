"""Spacecraft attitude NMPC benchmark.

State ``xi = (omega, theta)``: body rates and 3-2-1 Euler angles. Inside the
model everything is SI (rad/s, rad, N m, s); the harness converts to and from
degrees at its boundary. The OCP over horizon N is transcribed with

    z = (u_0 .. u_{N-1}, xi_1 .. xi_N, s_1 .. s_N),   p = (xi_0, r)

and exact first and second derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DareNonConvergence, KinematicSingularityError
from .kkt import ParameterizedNLP, PrimalDual

DEG = np.pi / 180.0
INERTIA = np.diag([918.0, 920.0, 1365.0])
SAMPLE_TIME = 3.0
STATE_WEIGHT = 10.0 * np.diag([10.0, 10.0, 10.0, 1.0, 1.0, 1.0])
INPUT_WEIGHT = np.diag([0.1, 0.1, 0.1])
SLACK_WEIGHT = 10.0
REFERENCE_SWITCH = 120.0

# Table of bounds in degrees / degrees per second (rates first, then angles)
CASE_BOUNDS_DEG = {
    1: (360.0 * np.ones(6), -360.0 * np.ones(6)),
    2: (np.array([1.15, 1.15, 1.15, 30.0, 30.0, 0.0]),
        -np.array([1.15, 1.15, 1.15, 0.0, 0.0, 20.0])),
}
INPUT_BOUND = 2.0

_SINGULAR_MARGIN = 1e-6


# ---------------------------------------------------------------------------
# dynamics

def _check_pitch(theta2):
    if abs(abs(theta2) - np.pi / 2) < _SINGULAR_MARGIN:
        raise KinematicSingularityError(
            f"pitch angle {np.degrees(theta2):.6f} deg is at the 3-2-1 singularity")


def kinematics_matrix(theta) -> np.ndarray:
    """Map body rates to 3-2-1 Euler angle rates (angles in radians)."""
    t1, t2 = float(theta[0]), float(theta[1])
    _check_pitch(t2)
    s1, c1 = np.sin(t1), np.cos(t1)
    tn, sc = np.tan(t2), 1.0 / np.cos(t2)
    return np.array([
        [1.0, s1 * tn, c1 * tn],
        [0.0, c1, -s1],
        [0.0, s1 * sc, c1 * sc],
    ])


def _kinematics_partials(theta):
    """First and second partials of S with respect to theta_1 and theta_2.

    Returns (dS, d2S) with dS[a] = dS/dtheta_a and d2S[a][b] the mixed second
    partial, for a, b in {0, 1}; S does not depend on theta_3.
    """
    t1, t2 = float(theta[0]), float(theta[1])
    s1, c1 = np.sin(t1), np.cos(t1)
    tn, sc = np.tan(t2), 1.0 / np.cos(t2)
    sc2 = sc * sc
    z = 0.0
    d1 = np.array([[z, c1 * tn, -s1 * tn], [z, -s1, -c1], [z, c1 * sc, -s1 * sc]])
    d2 = np.array([[z, s1 * sc2, c1 * sc2], [z, z, z], [z, s1 * sc * tn, c1 * sc * tn]])
    d11 = np.array([[z, -s1 * tn, -c1 * tn], [z, -c1, s1], [z, -s1 * sc, -c1 * sc]])
    d12 = np.array([[z, c1 * sc2, -s1 * sc2], [z, z, z], [z, c1 * sc * tn, -s1 * sc * tn]])
    k = sc * (tn * tn + sc2)
    d22 = np.array([[z, 2 * s1 * sc2 * tn, 2 * c1 * sc2 * tn], [z, z, z], [z, s1 * k, c1 * k]])
    return (d1, d2), ((d11, d12), (d12, d22))


def _skew(a):
    return np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])


def dynamics_ct(xi, u, J=INERTIA) -> np.ndarray:
    """Continuous-time rigid-body attitude dynamics, SI units."""
    xi = np.asarray(xi, dtype=float)
    w, th = xi[:3], xi[3:]
    S = kinematics_matrix(th)
    wdot = np.linalg.solve(J, -np.cross(w, J @ w) + np.asarray(u, dtype=float))
    return np.concatenate([wdot, S @ w])


def dynamics_jacobians(xi, J=INERTIA):
    """(df_c/dxi, df_c/du) at xi; f_c is affine in u."""
    xi = np.asarray(xi, dtype=float)
    w, th = xi[:3], xi[3:]
    Jinv = np.linalg.inv(J)
    S = kinematics_matrix(th)
    (d1, d2), _ = _kinematics_partials(th)
    A = np.zeros((6, 6))
    A[:3, :3] = Jinv @ (_skew(J @ w) - _skew(w) @ J)
    A[3:, :3] = S
    A[3:, 3] = d1 @ w
    A[3:, 4] = d2 @ w
    B = np.zeros((6, 3))
    B[:3] = Jinv
    return A, B


def dynamics_hessian(xi, mu, J=INERTIA) -> np.ndarray:
    """Hessian in xi of mu' f_c(xi, u) (6x6; independent of u)."""
    xi = np.asarray(xi, dtype=float)
    mu = np.asarray(mu, dtype=float)
    w, th = xi[:3], xi[3:]
    Hs = np.zeros((6, 6))
    # mu_w' J^-1 (-w x Jw) = w' [a x] J w with a = J^-1 mu_w
    a = np.linalg.solve(J, mu[:3])
    M = _skew(a) @ J
    Hs[:3, :3] = M + M.T
    (d1, d2), d2S = _kinematics_partials(th)
    mt = mu[3:]
    for i in range(2):
        for j in range(2):
            Hs[3 + i, 3 + j] = mt @ d2S[i][j] @ w
    cross = np.vstack([mt @ d1, mt @ d2])  # rows theta_1, theta_2; columns omega
    Hs[3:5, :3] = cross
    Hs[:3, 3:5] = cross.T
    return Hs


def discrete_dynamics(xi, u, params: "SpacecraftParams | None" = None, tau=None, J=None):
    """One explicit Euler step of length tau."""
    if params is not None:
        tau = params.tau if tau is None else tau
        J = params.J if J is None else J
    tau = SAMPLE_TIME if tau is None else tau
    J = INERTIA if J is None else J
    xi = np.asarray(xi, dtype=float)
    return xi + tau * dynamics_ct(xi, u, J)


def rk4_step(xi, u, tau, J=INERTIA, substeps=1):
    xi = np.asarray(xi, dtype=float)
    h = tau / substeps
    for _ in range(substeps):
        k1 = dynamics_ct(xi, u, J)
        k2 = dynamics_ct(xi + 0.5 * h * k1, u, J)
        k3 = dynamics_ct(xi + 0.5 * h * k2, u, J)
        k4 = dynamics_ct(xi + h * k3, u, J)
        xi = xi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return xi


def linearize_origin(params: "SpacecraftParams | None" = None, tau=SAMPLE_TIME, J=INERTIA):
    """Discrete-time (A, B) of the Euler-discretized dynamics at xi = 0, u = 0."""
    if params is not None:
        tau, J = params.tau, params.J
    Ac, Bc = dynamics_jacobians(np.zeros(6), J)
    return np.eye(6) + tau * Ac, tau * Bc


def solve_dare(A, B, Q, R, tol=1e-10, max_iters=100_000) -> np.ndarray:
    """Discrete algebraic Riccati equation by fixed-point iteration from P = Q.

    Stops when the Frobenius norm of ``P - Ric(P)`` drops to ``tol``.
    """
    A, B, Q, R = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (A, B, Q, R))
    P = Q.copy()
    res = np.inf
    for it in range(1, max_iters + 1):
        BtP = B.T @ P
        Pn = A.T @ P @ A - (BtP @ A).T @ np.linalg.solve(R + BtP @ B, BtP @ A) + Q
        Pn = 0.5 * (Pn + Pn.T)
        res = np.linalg.norm(Pn - P)
        P = Pn
        if res <= tol:
            return P
    raise DareNonConvergence(res, max_iters)


def dare_residual(P, A, B, Q, R) -> float:
    BtP = B.T @ P
    ric = A.T @ P @ A - (BtP @ A).T @ np.linalg.solve(R + BtP @ B, BtP @ A) + Q
    return float(np.linalg.norm(P - ric))


def reference(t: float) -> np.ndarray:
    """Reference state in degrees: slew to (15, 30, -20) deg, back to zero at 120 s."""
    if t < REFERENCE_SWITCH:
        return np.array([0.0, 0.0, 0.0, 15.0, 30.0, -20.0])
    return np.zeros(6)


# ---------------------------------------------------------------------------
# parameters and transcription

@dataclass
class SpacecraftParams:
    """Benchmark data in SI units. ``P`` defaults to the DARE solution at the origin."""

    N: int = 15
    J: np.ndarray = field(default_factory=lambda: INERTIA.copy())
    tau: float = SAMPLE_TIME
    Q: np.ndarray = field(default_factory=lambda: STATE_WEIGHT.copy())
    R: np.ndarray = field(default_factory=lambda: INPUT_WEIGHT.copy())
    gamma_s: float = SLACK_WEIGHT
    P: np.ndarray | None = None
    xi_ub: np.ndarray = field(default_factory=lambda: CASE_BOUNDS_DEG[1][0] * DEG)
    xi_lb: np.ndarray = field(default_factory=lambda: CASE_BOUNDS_DEG[1][1] * DEG)
    u_ub: np.ndarray = field(default_factory=lambda: INPUT_BOUND * np.ones(3))
    u_lb: np.ndarray = field(default_factory=lambda: -INPUT_BOUND * np.ones(3))
    # state-bound rows and their slacks are measured in degrees
    bound_scale: float = 1.0 / DEG

    def __post_init__(self):
        for name in ("J", "Q", "R", "xi_ub", "xi_lb", "u_ub", "u_lb"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.P is None:
            # reject bad data before the Riccati iteration gets to see it
            self.P = self.Q
            self.validate()
            A, B = linearize_origin(self)
            self.P = solve_dare(A, B, self.Q, self.R)
        self.P = np.asarray(self.P, dtype=float)
        self.validate()

    @classmethod
    def for_case(cls, case: int, N: int = 15, **kw) -> "SpacecraftParams":
        if case not in CASE_BOUNDS_DEG:
            raise ContractViolation(f"unknown case {case!r}; expected 1 or 2")
        ub, lb = CASE_BOUNDS_DEG[case]
        return cls(N=N, xi_ub=ub * DEG, xi_lb=lb * DEG, **kw)

    def validate(self):
        def sym(M):
            return np.allclose(M, M.T, atol=1e-9 * max(1.0, np.abs(M).max()))

        def eig_min(M):
            return np.linalg.eigvalsh(0.5 * (M + M.T)).min()

        if int(self.N) != self.N or self.N < 1:
            raise ContractViolation("horizon N must be a positive integer")
        if self.tau <= 0:
            raise ContractViolation("sampling period must be positive")
        if self.J.shape != (3, 3) or self.R.shape != (3, 3):
            raise ContractViolation("J and R must be 3x3")
        if self.Q.shape != (6, 6) or self.P.shape != (6, 6):
            raise ContractViolation("Q and P must be 6x6")
        for name in ("J", "Q", "R", "P"):
            if not sym(getattr(self, name)):
                raise ContractViolation(f"{name} must be symmetric")
        if eig_min(self.J) <= 0 or eig_min(self.R) <= 0:
            raise ContractViolation("J and R must be positive definite")
        if eig_min(self.Q) < -1e-9 * np.abs(self.Q).max() or \
                eig_min(self.P) < -1e-9 * np.abs(self.P).max():
            raise ContractViolation("Q and P must be positive semidefinite")
        if not (np.all(self.xi_lb < self.xi_ub) and np.all(self.u_lb < self.u_ub)):
            raise ContractViolation("lower bounds must be below upper bounds")


@dataclass
class OcpInstance:
    """The transcribed OCP plus the offsets of each block of z, c and p."""

    nlp: ParameterizedNLP
    params: SpacecraftParams
    slack_mode: str

    @property
    def N(self):
        return self.params.N

    @property
    def slack_width(self):
        return 1 if self.slack_mode == "scalar" else 12

    # z layout
    def u_index(self, i):
        return slice(3 * i, 3 * i + 3)

    def xi_index(self, i):
        """Offset of xi_i, i = 1..N (xi_0 is a parameter)."""
        if not 1 <= i <= self.N:
            raise IndexError(i)
        base = 3 * self.N
        return slice(base + 6 * (i - 1), base + 6 * i)

    def s_index(self, i):
        """Offset of s_i, i = 1..N."""
        if not 1 <= i <= self.N:
            raise IndexError(i)
        w = self.slack_width
        base = 9 * self.N
        return slice(base + w * (i - 1), base + w * i)

    # parameter layout
    p_state = slice(0, 6)
    p_ref = slice(6, 12)

    def parameter(self, xi0, r) -> np.ndarray:
        return np.concatenate([np.asarray(xi0, dtype=float), np.asarray(r, dtype=float)])

    def controls(self, z) -> np.ndarray:
        return np.asarray(z)[: 3 * self.N].reshape(self.N, 3)

    def states(self, z) -> np.ndarray:
        return np.asarray(z)[3 * self.N: 9 * self.N].reshape(self.N, 6)

    def slacks(self, z) -> np.ndarray:
        return np.asarray(z)[9 * self.N:].reshape(self.N, self.slack_width)

    def pack(self, u_seq, xi_seq, s_seq) -> np.ndarray:
        return np.concatenate([np.ravel(u_seq), np.ravel(xi_seq), np.ravel(s_seq)])

    def rollout(self, xi0, u_seq) -> np.ndarray:
        """States xi_1..xi_N obtained by applying ``u_seq`` from ``xi0``."""
        xs = []
        xi = np.asarray(xi0, dtype=float)
        for u in np.reshape(u_seq, (self.N, 3)):
            xi = discrete_dynamics(xi, u, self.params)
            xs.append(xi)
        return np.array(xs)

    def equilibrium_guess(self, xi0) -> PrimalDual:
        """Zero-control rollout from ``xi0`` with zero slacks.

        Multipliers of ``-s <= 0`` are set to the slack weight so that the
        point is an exact KKT point when ``xi0`` and the reference are zero.
        """
        u = np.zeros((self.N, 3))
        xs = self.rollout(xi0, u)
        s = np.zeros((self.N, self.slack_width))
        z = self.pack(u, xs, s)
        v = np.zeros(self.nlp.q)
        v[18 * self.N:] = self.params.gamma_s
        return PrimalDual(z, np.zeros(self.nlp.m), v)


def build_nlp(params: SpacecraftParams, slack_mode: str = "scalar") -> OcpInstance:
    """Transcribe the slack-penalized tracking OCP into a ParameterizedNLP."""
    if slack_mode not in ("scalar", "vector"):
        raise ContractViolation("slack_mode must be 'scalar' or 'vector'")
    params.validate()
    N = params.N
    w = 1 if slack_mode == "scalar" else 12
    nu, nx = 3 * N, 6 * N
    n = nu + nx + w * N
    m = 6 * N
    q = 12 * N + 6 * N + w * N
    l = 12
    Q, R, P, J, tau = params.Q, params.R, params.P, params.J, params.tau
    gam = params.gamma_s
    sc = params.bound_scale

    def split(z):
        return (z[:nu].reshape(N, 3), z[nu:nu + nx].reshape(N, 6), z[nu + nx:].reshape(N, w))

    def weight(i):
        return P if i == N else Q

    # constant constraint data
    Jc = np.zeros((q, n))
    cb = np.zeros(q)
    for i in range(1, N + 1):
        r0 = 12 * (i - 1)
        xs = nu + 6 * (i - 1)
        ss = nu + nx + w * (i - 1)
        Jc[r0:r0 + 6, xs:xs + 6] = sc * np.eye(6)
        Jc[r0 + 6:r0 + 12, xs:xs + 6] = -sc * np.eye(6)
        if w == 1:
            Jc[r0:r0 + 12, ss] = -1.0
        else:
            Jc[r0:r0 + 12, ss:ss + 12] = -np.eye(12)
        cb[r0:r0 + 6] = -sc * params.xi_ub
        cb[r0 + 6:r0 + 12] = sc * params.xi_lb
    base = 12 * N
    for i in range(N):
        r0 = base + 6 * i
        Jc[r0:r0 + 3, 3 * i:3 * i + 3] = np.eye(3)
        Jc[r0 + 3:r0 + 6, 3 * i:3 * i + 3] = -np.eye(3)
        cb[r0:r0 + 3] = -params.u_ub
        cb[r0 + 3:r0 + 6] = params.u_lb
    base = 18 * N
    Jc[base:, nu + nx:] = -np.eye(w * N)
    Jc.setflags(write=False)
    Jpc = np.zeros((q, l))
    Jpc.setflags(write=False)

    Hf = np.zeros((n, n))
    for i in range(N):
        Hf[3 * i:3 * i + 3, 3 * i:3 * i + 3] = 2 * R
    for i in range(1, N + 1):
        xs = nu + 6 * (i - 1)
        Hf[xs:xs + 6, xs:xs + 6] = 2 * weight(i)
    Hf.setflags(write=False)

    Jpz = np.zeros((n, l))
    for i in range(1, N + 1):
        xs = nu + 6 * (i - 1)
        Jpz[xs:xs + 6, 6:12] = -2 * weight(i)
    Jpz.setflags(write=False)

    def f(z, p):
        u, xs, s = split(z)
        r = p[6:]
        e0 = p[:6] - r
        val = e0 @ Q @ e0 + gam * s.sum()
        val += np.einsum("ij,jk,ik->", u, R, u)
        for i in range(1, N + 1):
            e = xs[i - 1] - r
            val += e @ weight(i) @ e
        return float(val)

    def grad_f(z, p):
        u, xs, s = split(z)
        r = p[6:]
        gu = 2 * u @ R
        e = xs - r
        gx = 2 * e @ Q
        gx[-1] = 2 * P @ e[-1]
        return np.concatenate([gu.ravel(), gx.ravel(), np.full(w * N, gam)])

    def prev_state(xs, p, i):
        return p[:6] if i == 0 else xs[i - 1]

    def g(z, p):
        u, xs, _ = split(z)
        out = np.empty(m)
        for i in range(N):
            out[6 * i:6 * i + 6] = xs[i] - (prev_state(xs, p, i) + tau * dynamics_ct(
                prev_state(xs, p, i), u[i], J))
        return out

    Bc = np.zeros((6, 3))
    Bc[:3] = np.linalg.inv(J)

    def jac_g(z, p):
        _, xs, _ = split(z)
        G = np.zeros((m, n))
        for i in range(N):
            rows = slice(6 * i, 6 * i + 6)
            G[rows, 3 * i:3 * i + 3] = -tau * Bc
            G[rows, nu + 6 * i:nu + 6 * i + 6] = np.eye(6)
            if i > 0:
                Ac, _ = dynamics_jacobians(xs[i - 1], J)
                G[rows, nu + 6 * (i - 1):nu + 6 * i] = -(np.eye(6) + tau * Ac)
        return G

    def c(z, p):
        return Jc @ z + cb

    def jac_c(z, p):
        return Jc

    def hess_L(z, lam, v, p):
        _, xs, _ = split(z)
        H = Hf.copy()
        for i in range(1, N):
            mu = lam[6 * i:6 * i + 6]
            if np.any(mu):
                xs_i = nu + 6 * (i - 1)
                H[xs_i:xs_i + 6, xs_i:xs_i + 6] -= tau * dynamics_hessian(xs[i - 1], mu, J)
        return H

    def jac_pz_L(z, lam, v, p):
        return Jpz

    def jac_p_g(z, p):
        out = np.zeros((m, l))
        Ac, _ = dynamics_jacobians(p[:6], J)
        out[:6, :6] = -(np.eye(6) + tau * Ac)
        return out

    def jac_p_c(z, p):
        return Jpc

    nlp = ParameterizedNLP(
        n, m, q, l,
        eval_f=f, eval_grad_f=grad_f,
        eval_g=g, eval_jac_g=jac_g,
        eval_c=c, eval_jac_c=jac_c,
        eval_hess_L=hess_L, eval_jac_pz_L=jac_pz_L,
        eval_jac_p_g=jac_p_g, eval_jac_p_c=jac_p_c,
    )
    return OcpInstance(nlp, params, slack_mode)
