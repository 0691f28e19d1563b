"""Ideal-constraint decomposition xi = xi~ + r of a dynamic equation.

The reaction acceleration r is the mass-metric orthogonal projection of xi
onto the span of m^{-1} sd^a, which makes xi~ the compatible acceleration of
least Gauss value.  ``multiplier_oracle`` reaches the same acceleration
through the saddle-point system instead and is kept deliberately separate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg as sla

from . import linalg
from .bundle import JetPoint
from .constraint import CompositeConstraintSpec, Codistribution
from .dynamics import DynamicEquation, LagrangeDynamics, LagrangianMetric, NewtonianSystem
from .errors import InadmissibleConstraint, NotRiemannian, SingularKKT
from .report import CheckReport
from .rng import SplitMix64

COMPAT_TOL = 1e-10
ORTHO_TOL = 1e-10
GAUSS_TOL = 1e-9


@dataclass
class Decomposition:
    """Everything the projection computes at one jet point."""

    x: JetPoint
    metric: np.ndarray
    xi: np.ndarray
    xi_tilde: np.ndarray
    reaction: np.ndarray      # r, with xi = xi_tilde + r
    force: np.ndarray         # F_i = -lambda_a sd^a_i
    multipliers: np.ndarray   # lambda_a, solving mt^{ab} lambda_b = s^a(xi)
    s0: np.ndarray
    s: np.ndarray
    sd: np.ndarray
    mtilde: np.ndarray        # sd m^{-1} sd^T
    s_of_xi: np.ndarray


class ConstrainedDynamics:
    """A Newtonian system with an ideal nonholonomic constraint."""

    def __init__(self, base: NewtonianSystem, cod: Codistribution):
        if not base.metric.riemannian:
            raise NotRiemannian("ideal projection needs a positive definite mass metric")
        self.base = base
        self.cod = cod
        self.config = base.config
        self._key = None
        self._last = None
        xi = base.xi
        self._lagrange = (xi if type(xi) is LagrangeDynamics and type(base.metric) is LagrangianMetric
                          and xi.lag is base.metric.lag else None)
        self._kernel = self._build_kernel()

    def decompose(self, x: JetPoint) -> Decomposition:
        key = (x.t, x.q.tobytes(), x.v.tobytes())
        if key == self._key:
            return self._last
        vals = self.config.jet_values(x)
        s0, s, sd = self.cod.evaluate(x, vals)
        n = self.cod.n
        if self._lagrange is not None:
            # One L evaluation and one factorisation serve both xi and m^{-1} sd^T.
            pb = self._lagrange.lag.partials(x, vals)
            vs = self.config.v_slice
            m = pb.hessian[vs, vs]
            g = self._lagrange.force_terms(x, pb)
            try:
                cm = linalg.cholesky(m)
            except linalg.FactorError:
                raise NotRiemannian(f"mass metric not positive definite at {x!r}") from None
            rhs = np.empty((len(g), n + 1))
            rhs[:, 0] = g
            rhs[:, 1:] = sd.T
            sol = linalg.cho_solve(cm, rhs)
            xi, minv_sdT = sol[:, 0], sol[:, 1:]
        else:
            m = self.base.metric(x)
            xi = self.base.xi(x)
            try:
                cm = linalg.cholesky(m)
            except linalg.FactorError:
                raise NotRiemannian(f"mass metric not positive definite at {x!r}") from None
            minv_sdT = linalg.cho_solve(cm, sd.T) if n else None     # m^{ij} sd^a_j
        if n == 0:
            z = np.zeros(0)
            d = Decomposition(x, m, xi, xi.copy(), np.zeros_like(xi), np.zeros_like(xi), z,
                              s0, s, sd, np.zeros((0, 0)), z)
        else:
            mt = sd @ minv_sdT
            s_xi = s0 + s @ x.v + sd @ xi
            if n == 1:
                # same acceptance as the Cholesky pivot test: sqrt(mt) > PIVOT_TOL
                if not mt[0, 0] > linalg.PIVOT_TOL ** 2:
                    raise InadmissibleConstraint(f"reduced metric singular (mt = {mt[0, 0]:.3e})", x)
                lam = s_xi / mt[0, 0]
            else:
                try:
                    ct = linalg.cholesky(mt)
                except linalg.FactorError:
                    cond = np.linalg.cond(mt)
                    raise InadmissibleConstraint(
                        f"reduced metric singular (condition {cond:.3e})", x) from None
                lam = linalg.cho_solve(ct, s_xi)
            r = minv_sdT @ lam
            d = Decomposition(x, m, xi, xi - r, r, -(sd.T @ lam), lam, s0, s, sd, mt, s_xi)
        self._key, self._last = key, d
        return d

    def _build_kernel(self):
        """Plain-float evaluator of xi~ for small unforced Lagrangian systems."""
        cfg = self.config
        m = cfg.dim
        if self._lagrange is None or not self.cod.exact or self.cod.n == 0 or m > 6:
            return None
        N = len(cfg.space)
        L = self._lagrange.lag.L._fn(2)[4]
        F = [f._fn(1)[4] for f in self.cod.functions]
        aux = list(cfg.params.values())
        n = self.cod.n
        qi = list(range(1, 1 + m))
        vi = list(range(1 + m, 1 + 2 * m))
        small = linalg.small_cho_solve

        def kernel(t, y):
            q = y[:m].tolist()
            v = y[m:].tolist()
            vals = [t] + q + v + aux
            _, g, h = L(vals)
            M = [[h[vi[i] * N + vi[j]] for j in range(m)] for i in range(m)]
            G = []
            for j in range(m):
                row = vi[j] * N
                G.append(g[qi[j]] - h[row] - sum(h[row + qi[k]] * v[k] for k in range(m)))
            S = [f(vals)[1] for f in F]
            sd = [[r[k] for k in vi] for r in S]
            try:
                sol = small(M, [G] + sd)
            except linalg.FactorError:
                raise NotRiemannian(f"mass metric not positive definite at t={t!r}") from None
            xi, W = sol[0], sol[1:]
            mt = [[sum(sd[a][j] * W[b][j] for j in range(m)) for b in range(n)] for a in range(n)]
            sx = [S[a][0] + sum(S[a][qi[j]] * v[j] + sd[a][j] * xi[j] for j in range(m))
                  for a in range(n)]
            try:
                if n == 1:
                    if not mt[0][0] > linalg.PIVOT_TOL ** 2:
                        raise linalg.FactorError("reduced metric singular")
                    lam = [sx[0] / mt[0][0]]
                else:
                    lam = small(mt, [sx])[0]
            except linalg.FactorError:
                raise InadmissibleConstraint("reduced metric singular",
                                             JetPoint(t, q, v)) from None
            return np.array([xi[j] - sum(W[a][j] * lam[a] for a in range(n)) for j in range(m)])

        return kernel

    def stage(self, t: float, y: np.ndarray) -> np.ndarray:
        """xi~ at state y = (q, v): the integrator's stage evaluation.

        Uses the plain-float kernel when one applies and ``decompose``
        otherwise; both compute the same projection.
        """
        if self._kernel is None:
            m = self.config.dim
            return self.decompose(JetPoint.trusted(t, y[:m], y[m:])).xi_tilde
        return self._kernel(t, y)

    def xi_tilde(self, x: JetPoint) -> np.ndarray:
        return self.decompose(x).xi_tilde

    __call__ = xi_tilde

    def reaction(self, x: JetPoint) -> np.ndarray:
        return self.decompose(x).reaction

    def reaction_force(self, x: JetPoint) -> np.ndarray:
        return self.decompose(x).force

    def multipliers(self, x: JetPoint) -> np.ndarray:
        return self.decompose(x).multipliers


def constrain(sys: NewtonianSystem, cod: Codistribution) -> ConstrainedDynamics:
    return ConstrainedDynamics(sys, cod)


def gauss_value(sys: NewtonianSystem, x: JetPoint, a) -> float:
    """G = m_ij (xi^i - a^i)(xi^j - a^j)."""
    d = sys.xi(x) - np.asarray(a, dtype=float)
    return float(d @ sys.metric(x) @ d)


def kernel_vectors(sd: np.ndarray, m: int) -> np.ndarray:
    """Orthonormal basis (columns) of {w : sd w = 0}."""
    return linalg.kernel_basis(sd, m)


def least_norm_certificate(cd: ConstrainedDynamics, x: JetPoint, trials: int,
                           seed: int = 0, tol: float = GAUSS_TOL) -> CheckReport:
    """Sample kernel directions w and test G(xi~ + w) = G(xi~) + m(w, w) >= G(xi~)."""
    d = cd.decompose(x)
    m = cd.config.dim
    K = kernel_vectors(d.sd, m) if cd.cod.n else np.eye(m)
    rep = CheckReport("least norm", 0.0, tol)
    if K.shape[1] == 0:
        rep.detail["unique_decomposition"] = True
        rep.detail["trials"] = 0
        return rep
    rep.detail["unique_decomposition"] = False
    if trials <= 0:
        rep.detail["trials"] = 0
        return rep
    rng = SplitMix64(seed)
    coeffs = np.array(rng.normals(trials * K.shape[1])).reshape(trials, K.shape[1])
    W = coeffs @ K.T                                   # rows are kernel vectors
    M = d.metric
    e0 = d.xi - d.xi_tilde
    g0 = float(e0 @ M @ e0)
    E = e0[None, :] - W                                # xi - (xi~ + w)
    G = np.einsum("ni,ij,nj->n", E, M, E)
    mww = np.einsum("ni,ij,nj->n", W, M, W)
    scale = 1.0 + g0 + mww
    pyth = np.abs(G - g0 - mww) / scale
    below = int(np.sum(G < g0 - tol * scale))
    rep.value = float(np.max(pyth))
    rep.passed = rep.value <= tol and below == 0
    rep.detail.update(trials=trials, gauss_value=g0, violations=below)
    return rep


def orthogonality_residual(cd: ConstrainedDynamics, x: JetPoint) -> float:
    """max |m(r, w)| over an orthonormal basis of the virtual accelerations."""
    d = cd.decompose(x)
    if cd.cod.n == 0:
        return 0.0
    K = kernel_vectors(d.sd, cd.config.dim)
    if K.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(d.reaction @ d.metric @ K)))


def compatibility_residual(cd: ConstrainedDynamics, x: JetPoint) -> float:
    """max_a |s^a(xi~)|."""
    d = cd.decompose(x)
    if cd.cod.n == 0:
        return 0.0
    return float(np.max(np.abs(d.s0 + d.s @ x.v + d.sd @ d.xi_tilde)))


def multiplier_oracle(sys: NewtonianSystem, cod: Codistribution, x: JetPoint) -> np.ndarray:
    """Constrained acceleration from the dense saddle-point system.

        [ m    sd^T ] [a ]   [ m xi         ]
        [ sd   0    ] [mu] = [ -(s0 + s v)  ]
    """
    m = sys.metric(x)
    xi = sys.xi(x)
    s0, s, sd = cod.evaluate(x)
    mdim, n = m.shape[0], cod.n
    K = np.zeros((mdim + n, mdim + n))
    K[:mdim, :mdim] = m
    K[:mdim, mdim:] = sd.T
    K[mdim:, :mdim] = sd
    rhs = np.concatenate([m @ xi, -(s0 + s @ x.v)])
    lu, piv = sla.lu_factor(K, check_finite=False)
    if np.min(np.abs(np.diag(lu))) <= linalg.PIVOT_TOL * max(1.0, np.max(np.abs(K))):
        raise SingularKKT(f"saddle-point matrix singular at {x!r}")
    sol = sla.lu_solve((lu, piv), rhs, check_finite=False)
    return sol[:mdim]


def composite_decomposition(dyn: NewtonianSystem | DynamicEquation, spec: CompositeConstraintSpec,
                            x: JetPoint) -> tuple[np.ndarray, np.ndarray]:
    """Keep base components, correct fiber ones: xi~^a = xi^a - s^a(xi)."""
    xi_fn = dyn.xi if isinstance(dyn, NewtonianSystem) else dyn
    xi = xi_fn(x)
    cod = spec.codistribution()
    s_xi = cod.contract(x, xi)
    xt = xi.copy()
    xt[spec.fiber] -= s_xi
    return xt, xi - xt


def sweep(cd: ConstrainedDynamics, points: Iterable[JetPoint]) -> dict[str, CheckReport]:
    """Compatibility, orthogonality and force duality over ``points``."""
    comp = CheckReport("compatibility |s(xi~)|", 0.0, COMPAT_TOL)
    orth = CheckReport("orthogonality |m(r,w)|", 0.0, ORTHO_TOL)
    dual = CheckReport("force duality |F + m r|", 0.0, 1e-12)
    for x in points:
        d = cd.decompose(x)
        for rep, val in ((comp, compatibility_residual(cd, x)),
                         (orth, orthogonality_residual(cd, x)),
                         (dual, float(np.max(np.abs(d.force + d.metric @ d.reaction)
                                             / (1.0 + np.abs(d.force)), initial=0.0)))):
            if not val <= rep.value:
                rep.value, rep.witness = val, x
    for rep in (comp, orth, dual):
        rep.passed = rep.value <= rep.tol
    return {"compatibility": comp, "orthogonality": orth, "duality": dual}
