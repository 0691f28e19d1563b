"""Hamiltonian side of a hyperregular Lagrangian system.

The Hamiltonian is never formed symbolically.  Every H-derivative comes from
L-derivatives at the inverse Legendre image x = H^(y):

    d^i H = v^i,            d_i H = -d_i L,
    d^i d^j H = M^{ij},     d_i d^j H = -M^{jk} d_i pi_k,
    d_t d^j H = -M^{jk} d_t pi_k,
    d_i d_j H = -d_i d_j L + d_i pi_k M^{kl} d_j pi_l,

with M = (pi_ij)^{-1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .bundle import JetPoint, PhasePoint
from .constraint import Codistribution
from .dynamics import LagrangianSystem, MassMetric, mass_metric_from_lagrangian
from .errors import DegenerateMetric, InadmissibleConstraint, NonConvergence, NotRiemannian


class HamiltonianSide:
    """Legendre map and its Newton inverse for a Lagrangian system."""

    def __init__(self, lag: LagrangianSystem, metric: MassMetric | None = None,
                 tol: float = 1e-12, max_iter: int = 50):
        self.lag = lag
        self.config = lag.config
        self.metric = metric if metric is not None else mass_metric_from_lagrangian(lag)
        self.tol = tol
        self.max_iter = max_iter

    def jet(self, y: PhasePoint, seed=None) -> JetPoint:
        return inverse_legendre(self, y, seed)


def legendre(hs: HamiltonianSide, x: JetPoint) -> tuple[PhasePoint, float]:
    """p_i = pi_i(x) and H = p_i v^i - L(x)."""
    pb = hs.lag.partials(x)
    p = pb.gradient[hs.config.v_slice].copy()
    return PhasePoint(x.t, x.q, p), float(p @ x.v - pb.value)


def inverse_legendre(hs: HamiltonianSide, y: PhasePoint, seed=None) -> JetPoint:
    """Solve pi(t, q, v) = p for v by damped Newton with pi_ij as Jacobian."""
    cfg = hs.config
    vs = cfg.v_slice
    v = np.zeros(cfg.dim) if seed is None else np.array(seed, dtype=float)
    tol = hs.tol * max(1.0, float(np.max(np.abs(y.p), initial=0.0)))

    def resid(v):
        pb = hs.lag.L.partials(cfg.values(y.t, y.q, v).tolist(), 2)
        return pb.gradient[vs] - y.p, pb.hessian[vs, vs]

    r, jac = resid(v)
    rn = float(np.max(np.abs(r)))
    for _ in range(hs.max_iter):
        if rn <= tol:
            return JetPoint(y.t, y.q, v)
        try:
            try:
                step = linalg.solve(jac, r, True)
            except linalg.FactorError:
                step = linalg.lu_solve(jac, r)
        except linalg.FactorError:
            raise DegenerateMetric("singular pi_ij in inverse Legendre map",
                                   JetPoint(y.t, y.q, v)) from None
        lam = 1.0
        while True:
            v_new = v - lam * step
            try:
                r_new, jac_new = resid(v_new)
                rn_new = float(np.max(np.abs(r_new)))
            except (ArithmeticError, ValueError):
                rn_new = np.inf
            if rn_new <= rn or lam < 1e-6:
                break
            lam *= 0.5
        if not np.isfinite(rn_new):
            break
        v, r, jac, rn = v_new, r_new, jac_new, rn_new
    if rn <= tol:
        return JetPoint(y.t, y.q, v)
    raise NonConvergence(f"inverse Legendre map: residual {rn:.3e} after {hs.max_iter} iterations "
                         f"at t={y.t!r}, q={y.q!r}, p={y.p!r}")


@dataclass
class HamiltonData:
    """L-side quantities at x = H^(y) needed by the Hamiltonian formulas."""

    x: JetPoint
    m: np.ndarray            # m_ij = pi_ij = M_ij
    M: np.ndarray            # M^{ij}
    dL_dq: np.ndarray        # d_i L  (= -d_i H)
    dt_dpH: np.ndarray       # d_t d^j H
    dq_dpH: np.ndarray       # [j, i] = d_i d^j H
    hess_L: np.ndarray       # full second partials of L at x


def hamilton_data(hs: HamiltonianSide, y: PhasePoint, seed=None) -> HamiltonData:
    cfg = hs.config
    x = inverse_legendre(hs, y, seed)
    pb = hs.lag.partials(x)
    qs, vs = cfg.q_slice, cfg.v_slice
    m = pb.hessian[vs, vs].copy()
    try:
        M = linalg.solve(m, np.eye(cfg.dim), hs.metric.riemannian)
    except linalg.FactorError:
        raise DegenerateMetric("singular pi_ij", x) from None
    return HamiltonData(
        x=x, m=m, M=M,
        dL_dq=pb.gradient[qs].copy(),
        dt_dpH=-M @ pb.hessian[vs, 0],
        dq_dpH=-M @ pb.hessian[vs, qs],
        hess_L=pb.hessian,
    )


class HamiltonField:
    """Connection on V*Q -> R: (t, q, p) -> (dq/dt, dp/dt).

    Inverse Legendre solves are seeded with the previous solution, which keeps
    Newton at one or two iterations along a trajectory.
    """

    def __init__(self, hs: HamiltonianSide):
        self.hs = hs
        self.config = hs.config
        self.m = hs.config.dim
        self._seed = None

    def data(self, y: PhasePoint) -> HamiltonData:
        try:
            d = hamilton_data(self.hs, y, self._seed)
        except NonConvergence:
            if self._seed is None:
                raise
            d = hamilton_data(self.hs, y, None)
        self._seed = d.x.v
        return d

    def __call__(self, y: PhasePoint) -> tuple[np.ndarray, np.ndarray]:
        d = self.data(y)
        return d.x.v.copy(), d.dL_dq.copy()

    def rhs(self, t: float, state: np.ndarray) -> np.ndarray:
        m = self.m
        gq, gp = self(PhasePoint(t, state[:m], state[m:]))
        return np.concatenate([gq, gp])


def hamilton_field(hs: HamiltonianSide) -> HamiltonField:
    """gamma^i = d^i H = v^i(t, q, p), gamma_i = -d_i H = d_i L at H^(y)."""
    return HamiltonField(hs)


@dataclass
class PullbackForm:
    beta0: float
    betai: np.ndarray
    betadoti: np.ndarray


def pullback_arrays(cod: Codistribution, d: HamiltonData):
    """(beta0 [n], beta [n, m], betadot [n, m]) from the L-side data."""
    s0, s, sd = cod.evaluate(d.x)
    beta0 = s0 + sd @ d.dt_dpH
    beta = s + sd @ d.dq_dpH
    betadot = sd @ d.M
    return beta0, beta, betadot


def pullback_constraint(hs: HamiltonianSide, cod: Codistribution, y: PhasePoint,
                        seed=None) -> list[PullbackForm]:
    d = hamilton_data(hs, y, seed)
    b0, b, bd = pullback_arrays(cod, d)
    return [PullbackForm(float(b0[a]), b[a].copy(), bd[a].copy()) for a in range(cod.n)]


@dataclass
class ConstrainedPhaseData:
    base: HamiltonData
    gamma_q: np.ndarray
    gamma_p: np.ndarray
    beta0: np.ndarray
    beta: np.ndarray
    betadot: np.ndarray
    Mtilde: np.ndarray       # betadot M_low betadot^T
    beta_of_gamma: np.ndarray
    correction: np.ndarray   # Mt_ab M_ij betadot^{ai} beta^b(gamma_H), index j

    @property
    def reaction(self) -> np.ndarray:
        """Reaction covector added to dp/dt."""
        return -self.correction


class ConstrainedHamiltonField(HamiltonField):
    """gamma~ = gamma_H minus the M-orthogonal projection onto the constraint normal."""

    def __init__(self, hs: HamiltonianSide, cod: Codistribution):
        super().__init__(hs)
        if not hs.metric.riemannian:
            raise NotRiemannian("constrained Hamilton field needs a positive definite metric")
        self.cod = cod

    def constrained_data(self, y: PhasePoint) -> ConstrainedPhaseData:
        d = self.data(y)
        gq, gp = d.x.v.copy(), d.dL_dq.copy()
        b0, b, bd = pullback_arrays(self.cod, d)
        n = self.cod.n
        if n == 0:
            z = np.zeros(0)
            return ConstrainedPhaseData(d, gq, gp, z, b, bd, np.zeros((0, 0)), z,
                                        np.zeros(self.m))
        M_low = d.m
        bd_low = bd @ M_low
        Mt = bd_low @ bd.T
        bg = b0 + b @ gq + bd @ gp
        try:
            c = linalg.cholesky(Mt)
        except linalg.FactorError:
            raise InadmissibleConstraint("pulled-back constraint is not admissible", y) from None
        corr = bd_low.T @ linalg.cho_solve(c, bg)
        return ConstrainedPhaseData(d, gq, gp, b0, b, bd, Mt, bg, corr)

    def __call__(self, y):
        cd = self.constrained_data(y)
        return cd.gamma_q, cd.gamma_p - cd.correction


def constrained_hamilton_field(hs: HamiltonianSide, cod: Codistribution) -> ConstrainedHamiltonField:
    return ConstrainedHamiltonField(hs, cod)


def pullback_residual(field: ConstrainedHamiltonField, y: PhasePoint) -> float:
    """max_a |beta^a(gamma~)|."""
    cd = field.constrained_data(y)
    if field.cod.n == 0:
        return 0.0
    gp = cd.gamma_p - cd.correction
    return float(np.max(np.abs(cd.beta0 + cd.beta @ cd.gamma_q + cd.betadot @ gp)))


def hamiltonian_value(hs: HamiltonianSide, y: PhasePoint, seed=None) -> float:
    x = inverse_legendre(hs, y, seed)
    return float(y.p @ x.v - hs.lag.value(x))


def second_derivatives(d: HamiltonData, config) -> dict[str, np.ndarray]:
    """Hessian blocks of H at y from L-derivatives at H^(y)."""
    qs, vs = config.q_slice, config.v_slice
    dq_pi = d.hess_L[vs, qs]          # [k, i] = d_i pi_k
    return {
        "pp": d.M,                                         # d^i d^j H
        "qp": d.dq_dpH.T,                                  # [i, j] = d_i d^j H
        "qq": -d.hess_L[qs, qs] + dq_pi.T @ d.M @ dq_pi,   # d_i d_j H
    }
