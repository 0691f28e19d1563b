"""Newtonian and Lagrangian systems on J^1 Q.

A Newtonian system pairs a mass metric m_ij(t, q, v) with a dynamic equation
q_tt = xi(t, q, v).  A nondegenerate Lagrangian yields one through its
velocity hessian pi_ij and its Lagrange dynamic equation xi_L.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import linalg
from .bundle import ConfigurationSpace, Jet2Point, JetPoint, ReferenceFrame
from .errors import DegenerateMetric, NotRiemannian, ShapeError
from .expr import Expr, PartialBundle
from .report import CheckReport, worst
from .rng import SplitMix64

DET_TOL = 1e-12
CHECK_TOL = 1e-9


class _LastPoint:
    """One-slot memo keyed on the evaluation vector."""

    __slots__ = ("key", "val")

    def __init__(self):
        self.key = None
        self.val = None

    def get(self, key, compute):
        if key != self.key:
            self.val = compute()
            self.key = key
        return self.val


# -- probe points -------------------------------------------------------------

@dataclass(frozen=True)
class ProbeBox:
    """Axis-aligned sampling box for t, q and v."""

    t: tuple[float, float] = (0.0, 1.0)
    q: tuple[float, float] = (-1.0, 1.0)
    v: tuple[float, float] = (-1.0, 1.0)

    def sample(self, m: int, n: int, seed: int = 0) -> list[JetPoint]:
        rng = SplitMix64(seed)
        pts = []
        for _ in range(n):
            t = rng.uniform(*self.t)
            q = [rng.uniform(*self.q) for _ in range(m)]
            v = [rng.uniform(*self.v) for _ in range(m)]
            pts.append(JetPoint(t, q, v))
        return pts


def probe_points(config: ConfigurationSpace, user=(), box: ProbeBox | None = None,
                 n: int = 100, seed: int = 0) -> list[JetPoint]:
    """User points followed by ``n`` uniform draws from ``box``."""
    return list(user) + (box or ProbeBox()).sample(config.dim, n, seed)


# -- metrics ------------------------------------------------------------------

class MassMetric:
    """Fiber metric m_ij on vertical velocities."""

    riemannian: bool = True

    def __init__(self, config: ConfigurationSpace):
        self.config = config

    def __call__(self, x: JetPoint) -> np.ndarray:
        raise NotImplementedError

    def derivatives(self, x: JetPoint) -> np.ndarray:
        """D[i, j, a] = d m_ij / d(variable a) over the full jet space."""
        raise NotImplementedError

    def solve(self, x: JetPoint, b: np.ndarray, m: np.ndarray | None = None) -> np.ndarray:
        """m^{-1} b: Cholesky when riemannian, pivoted LU otherwise."""
        if m is None:
            m = self(x)
        try:
            return linalg.solve(m, b, self.riemannian)
        except linalg.FactorError:
            if self.riemannian and not linalg.is_positive_definite(m) and abs(np.linalg.det(m)) > DET_TOL:
                raise NotRiemannian(f"metric not positive definite at {x!r}") from None
            raise DegenerateMetric("singular mass metric", x) from None


class ExpressionMetric(MassMetric):
    def __init__(self, config: ConfigurationSpace, entries: Sequence[Sequence[str | Expr]],
                 riemannian: bool = True):
        super().__init__(config)
        m = config.dim
        if len(entries) != m or any(len(row) != m for row in entries):
            raise ShapeError(f"metric must be {m}x{m}")
        self.entries = [[e if isinstance(e, Expr) else config.expr(str(e)) for e in row]
                        for row in entries]
        self.riemannian = riemannian

    def __call__(self, x):
        vals = self.config.jet_values(x)
        return np.array([[e.value(vals) for e in row] for row in self.entries])

    def derivatives(self, x):
        vals = self.config.jet_values(x)
        return np.array([[e.partials(vals, 1).gradient for e in row] for row in self.entries])


class LagrangianMetric(MassMetric):
    """m_ij = pi_ij, the velocity hessian of the Lagrangian."""

    def __init__(self, lag: "LagrangianSystem", riemannian: bool = True):
        super().__init__(lag.config)
        self.lag = lag
        self.riemannian = riemannian

    def __call__(self, x):
        return self.lag.velocity_hessian(x)

    def derivatives(self, x):
        m = self.config.dim
        vs = self.config.v_slice
        pb = self.lag.momentum_partials(x)
        return np.array([[pb[j].hessian[vs][k] for k in range(m)] for j in range(m)])


# -- dynamic equations --------------------------------------------------------

class DynamicEquation:
    """Second-order equation q_tt = xi(t, q, v)."""

    def __init__(self, config: ConfigurationSpace):
        self.config = config

    def __call__(self, x: JetPoint) -> np.ndarray:
        raise NotImplementedError

    def velocity_jacobian(self, x: JetPoint) -> np.ndarray:
        """J[k, l] = d xi^k / d v^l."""
        raise NotImplementedError


class ExpressionDynamics(DynamicEquation):
    def __init__(self, config, components: Sequence[str | Expr]):
        super().__init__(config)
        if len(components) != config.dim:
            raise ShapeError(f"dynamic equation needs {config.dim} components")
        self.components = [c if isinstance(c, Expr) else config.expr(str(c)) for c in components]

    def __call__(self, x):
        vals = self.config.jet_values(x)
        return np.array([c.value(vals) for c in self.components])

    def velocity_jacobian(self, x):
        vals = self.config.jet_values(x)
        vs = self.config.v_slice
        return np.array([c.partials(vals, 1).gradient[vs] for c in self.components])


class LagrangeDynamics(DynamicEquation):
    """xi_L^i = m^{ij}(-d_t pi_j - v^k d_k pi_j + d_j L)."""

    def __init__(self, lag: "LagrangianSystem", metric: MassMetric):
        super().__init__(lag.config)
        self.lag = lag
        self.metric = metric

    def force_terms(self, x, pb: PartialBundle | None = None) -> np.ndarray:
        cfg = self.config
        if pb is None:
            pb = self.lag.partials(x)
        qs, vs = cfg.q_slice, cfg.v_slice
        hv = pb.hessian[vs]
        return pb.gradient[qs] - hv[:, 0] - hv[:, qs] @ x.v

    def __call__(self, x):
        pb = self.lag.partials(x)
        m = pb.hessian[self.config.v_slice, self.config.v_slice]
        return self.metric.solve(x, self.force_terms(x, pb), m)

    def velocity_jacobian(self, x):
        cfg = self.config
        mdim = cfg.dim
        qs, vs = cfg.q_slice, cfg.v_slice
        P = self.lag.momentum_partials(x)
        m = np.array([P[j].gradient[vs] for j in range(mdim)])
        xi = self(x)
        dg = np.empty((mdim, mdim))  # dg[j, l] = d g_j / d v^l
        for j in range(mdim):
            hj = P[j].hessian
            for l in range(mdim):
                vl = vs.start + l
                dg[j, l] = (P[l].gradient[qs.start + j] - hj[vl, 0]
                            - P[j].gradient[qs.start + l] - hj[vl, qs] @ x.v)
        out = np.empty((mdim, mdim))
        for l in range(mdim):
            vl = vs.start + l
            dm = np.array([P[j].hessian[vs, vl] for j in range(mdim)])
            out[:, l] = self.metric.solve(x, dg[:, l] - dm @ xi, m)
        return out


class ExternalForce:
    """Covector field F_i(t, q, v)."""

    def __init__(self, config: ConfigurationSpace, components: Sequence[str | Expr]):
        if len(components) != config.dim:
            raise ShapeError(f"force needs {config.dim} components")
        self.config = config
        self.components = [c if isinstance(c, Expr) else config.expr(str(c)) for c in components]

    @classmethod
    def zero(cls, config):
        return cls(config, ["0"] * config.dim)

    def __call__(self, x):
        vals = self.config.jet_values(x)
        return np.array([c.value(vals) for c in self.components])

    def velocity_jacobian(self, x):
        """J[i, l] = dF_i / dv^l."""
        vals = self.config.jet_values(x)
        vs = self.config.v_slice
        return np.array([c.partials(vals, 1).gradient[vs] for c in self.components])


class ForcedDynamics(DynamicEquation):
    """xi_F = xi + m^{-1} F."""

    def __init__(self, base: DynamicEquation, metric: MassMetric, force: ExternalForce):
        super().__init__(base.config)
        self.base = base
        self.metric = metric
        self.force = force

    def __call__(self, x):
        return self.base(x) + self.metric.solve(x, self.force(x))

    def velocity_jacobian(self, x):
        m = self.metric(x)
        minv_f = self.metric.solve(x, self.force(x), m)
        dF = self.force.velocity_jacobian(x)
        D = self.metric.derivatives(x)
        vs = self.config.v_slice
        out = self.base.velocity_jacobian(x).copy()
        for l in range(self.config.dim):
            dm = D[:, :, vs.start + l]
            out[:, l] += self.metric.solve(x, dF[:, l] - dm @ minv_f, m)
        return out


@dataclass
class NewtonianSystem:
    metric: MassMetric
    xi: DynamicEquation
    lagrangian: "LagrangianSystem | None" = None
    force: ExternalForce | None = None

    @property
    def config(self) -> ConfigurationSpace:
        return self.metric.config


# -- Lagrangian systems -------------------------------------------------------

class LagrangianSystem:
    def __init__(self, config: ConfigurationSpace, L: str | Expr):
        self.config = config
        self.L = L if isinstance(L, Expr) else config.expr(str(L))
        vs = config.v_slice
        self._momenta = [self.L.diff(vs.start + i) for i in range(config.dim)]
        self._memo = _LastPoint()
        self._pmemo = _LastPoint()

    def __repr__(self):
        return f"LagrangianSystem({self.L.text!r})"

    def partials(self, x: JetPoint, vals: list[float] | None = None) -> PartialBundle:
        if vals is None:
            vals = self.config.jet_values(x)
        return self._memo.get(tuple(vals), lambda: self.L.partials(vals, 2))

    def momentum_partials(self, x: JetPoint) -> list[PartialBundle]:
        """Second-order partials of each pi_j = dL/dv^j (third partials of L)."""
        vals = self.config.jet_values(x)
        return self._pmemo.get(tuple(vals), lambda: [p.partials(vals, 2) for p in self._momenta])

    def value(self, x: JetPoint) -> float:
        return self.partials(x).value

    def momentum(self, x: JetPoint) -> np.ndarray:
        return self.partials(x).gradient[self.config.v_slice].copy()

    def velocity_hessian(self, x: JetPoint) -> np.ndarray:
        vs = self.config.v_slice
        return self.partials(x).hessian[vs, vs].copy()


def mass_metric_from_lagrangian(sys: LagrangianSystem, points: Iterable[JetPoint] | None = None
                                ) -> LagrangianMetric:
    """m_ij = pi_ij, probing nondegeneracy and positivity at ``points``."""
    if points is None:
        points = probe_points(sys.config)
    riemannian = True
    for x in points:
        m = sys.velocity_hessian(x)
        if abs(np.linalg.det(m)) < DET_TOL:
            raise DegenerateMetric(f"det pi_ij = {np.linalg.det(m):.3e}", x)
        if riemannian and not linalg.is_positive_definite(m):
            riemannian = False
    return LagrangianMetric(sys, riemannian)


def lagrange_dynamic_equation(sys: LagrangianSystem, metric: MassMetric | None = None
                              ) -> LagrangeDynamics:
    if metric is None:
        metric = mass_metric_from_lagrangian(sys)
    return LagrangeDynamics(sys, metric)


def newtonian_from_lagrangian(sys: LagrangianSystem, points=None) -> NewtonianSystem:
    metric = mass_metric_from_lagrangian(sys, points)
    return NewtonianSystem(metric, LagrangeDynamics(sys, metric), lagrangian=sys)


def euler_lagrange_residual(sys: LagrangianSystem, w: Jet2Point) -> np.ndarray:
    """E_i = d_i L - (d_t pi_i + v^j d_j pi_i + a^j pi_ji)."""
    cfg = sys.config
    pb = sys.partials(w.x)
    qs, vs = cfg.q_slice, cfg.v_slice
    hv = pb.hessian[vs]
    return pb.gradient[qs] - (hv[:, 0] + hv[:, qs] @ w.v + hv[:, vs] @ w.a)


def check_metric_symmetry(metric: MassMetric, points: Iterable[JetPoint],
                          tol: float = CHECK_TOL) -> CheckReport:
    """max |d m_ij / dv^k - d m_ik / dv^j| over the sample."""
    vs = metric.config.v_slice

    def residuals():
        for x in points:
            dv = metric.derivatives(x)[:, :, vs]  # [i, j, k]
            yield float(np.max(np.abs(dv - dv.transpose(0, 2, 1)), initial=0.0)), x

    return worst("metric symmetry", residuals(), tol)


def compatibility_residual(sys: NewtonianSystem, x: JetPoint) -> np.ndarray:
    """2 xi|dm_ij + m_ik d^t_j xi^k + m_jk d^t_i xi^k, with xi|d the total derivative."""
    cfg = sys.config
    qs, vs = cfg.q_slice, cfg.v_slice
    m = sys.metric(x)
    D = sys.metric.derivatives(x)
    xi = sys.xi(x)
    J = sys.xi.velocity_jacobian(x)
    along = D[:, :, 0] + D[:, :, qs] @ x.v + D[:, :, vs] @ xi
    mj = m @ J
    return 2.0 * along + mj + mj.T


def check_compatibility(sys: NewtonianSystem, points: Iterable[JetPoint],
                        tol: float = CHECK_TOL) -> CheckReport:
    def residuals():
        for x in points:
            yield float(np.max(np.abs(compatibility_residual(sys, x)))), x

    return worst("compatibility", residuals(), tol)


def force_condition_residual(force: ExternalForce, x: JetPoint) -> float:
    """max |d^t_i F_j + d^t_j F_i|."""
    J = force.velocity_jacobian(x)
    return float(np.max(np.abs(J + J.T), initial=0.0))


def apply_external_force(sys: NewtonianSystem, force: ExternalForce,
                         points: Iterable[JetPoint] | None = None) -> tuple[NewtonianSystem, CheckReport]:
    """Shift xi by m^{-1}F; the force condition is reported, violations only warn."""
    if points is None:
        points = probe_points(sys.config)
    report = worst("force condition", ((force_condition_residual(force, x), x) for x in points),
                   CHECK_TOL)
    if not report.passed:
        warnings.warn(
            f"external force violates dF_i/dv^j + dF_j/dv^i = 0 (residual {report.value:.3e}); "
            "the forced system is not Newtonian", RuntimeWarning, stacklevel=2)
    forced = NewtonianSystem(sys.metric, ForcedDynamics(sys.xi, sys.metric, force),
                             lagrangian=sys.lagrangian, force=force)
    return forced, report


def standard_lagrangian(config: ConfigurationSpace, metric: Sequence[Sequence[str | Expr]],
                        frame: ReferenceFrame) -> LagrangianSystem:
    """L = 1/2 m_ij (v^i - Gamma^i)(v^j - Gamma^j) for a velocity-independent metric."""
    m = config.dim
    if len(metric) != m or any(len(row) != m for row in metric):
        raise ShapeError(f"metric must be {m}x{m}")
    entries = [[e if isinstance(e, Expr) else config.expr(str(e)) for e in row] for row in metric]
    vel = set(config.space.of_role("velocity"))
    for i in range(m):
        for j in range(m):
            if entries[i][j].variables & vel:
                raise ShapeError(f"metric entry ({i},{j}) depends on velocities")
    rel = [f"({config.velocities[i]} - ({frame.gamma[i].text}))" for i in range(m)]
    terms = [f"({entries[i][j].text})*{rel[i]}*{rel[j]}" for i in range(m) for j in range(m)]
    return LagrangianSystem(config, "0.5*(" + " + ".join(terms) + ")")


def energy_function(sys: LagrangianSystem, frame: ReferenceFrame, x: JetPoint) -> float:
    """T_Gamma = pi_i (v^i - Gamma^i) - L."""
    pb = sys.partials(x)
    pi = pb.gradient[sys.config.v_slice]
    return float(pi @ (x.v - frame(x.t, x.q)) - pb.value)


def energy_terms(sys: LagrangianSystem, frame: ReferenceFrame, x: JetPoint, a: np.ndarray,
                 force: np.ndarray | None = None) -> tuple[float, float]:
    """(T_Gamma, d_t T_Gamma + L_Gamma L - (v - Gamma)^i F_i) at one jet point.

    The time derivative of the energy is taken analytically along the
    acceleration ``a``, so the residual vanishes on solutions of E_i = -F_i
    up to rounding.
    """
    cfg = sys.config
    qs, vs = cfg.q_slice, cfg.v_slice
    pb = sys.partials(x)
    g, h = pb.gradient, pb.hessian
    pi = g[vs]
    gam, dgam = frame.jet(x)
    rel = x.v - gam
    dt_pi = h[vs, 0] + h[vs, qs] @ x.v + h[vs, vs] @ a
    dt_L = g[0] + g[qs] @ x.v + pi @ a
    dt_T = dt_pi @ rel + pi @ (a - dgam) - dt_L
    lie = g[0] + gam @ g[qs] + dgam @ pi
    power = 0.0 if force is None else float(rel @ force)
    return float(pi @ rel - pb.value), float(dt_T + lie - power)


def energy_balance_residual(sys: LagrangianSystem, frame: ReferenceFrame,
                            force: Callable[[JetPoint], np.ndarray] | None,
                            samples: Iterable[Jet2Point]) -> np.ndarray:
    """d_t T_Gamma + L_Gamma L - (v - Gamma)^i F_i at each sample."""
    return np.array([energy_terms(sys, frame, w.x, w.a, None if force is None else force(w.x))[1]
                     for w in samples])
