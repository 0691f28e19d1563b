"""Vertical extension on VV*Q: lifted fields, Jacobi fields and L_H.

A point of VV*Q is (t, q, p, qdot, pdot).  Any field gamma on V*Q lifts to
a Hamiltonian field on VV*Q whose vertical part is

    gbar^i = pdot_j d^i gamma^j - qdot^j d^i gamma_j
    gbar_i = -pdot_j d_i gamma^j + qdot^j d_i gamma_j

For a Hamilton field this is the linearised flow, so (qdot, pdot) propagates
as a Jacobi field along base solutions.
"""

from __future__ import annotations

import numpy as np

from .bundle import PhasePoint, VerticalPhasePoint
from .constraint import Codistribution
from .hamilton import (ConstrainedHamiltonField, HamiltonField, HamiltonianSide, hamilton_data,
                       second_derivatives)


class VerticalField:
    """Field on VV*Q: z -> (gamma^i, gamma_i, gbar^i, gbar_i)."""

    def __init__(self, base, m: int):
        self.base = base
        self.m = m

    def __call__(self, z: VerticalPhasePoint):
        raise NotImplementedError

    def rhs(self, t: float, state: np.ndarray) -> np.ndarray:
        m = self.m
        z = VerticalPhasePoint(PhasePoint(t, state[:m], state[m:2 * m]),
                               state[2 * m:3 * m], state[3 * m:])
        return np.concatenate(self(z))


class LiftedField(VerticalField):
    """Lift of an arbitrary base field with central-difference partials."""

    def __init__(self, base, m: int, fd_step: float = 1e-6):
        super().__init__(base, m)
        self.fd_step = fd_step

    def base_partials(self, y: PhasePoint):
        """(dq[j] -> (d_j gamma^., d_j gamma_.), dp[j] -> (d^j gamma^., d^j gamma_.))."""
        m = self.m
        dq_gq = np.empty((m, m))  # [j, i] = d_j gamma^i
        dq_gp = np.empty((m, m))
        dp_gq = np.empty((m, m))  # [j, i] = d^j gamma^i
        dp_gp = np.empty((m, m))
        for j in range(m):
            h = self.fd_step * max(1.0, abs(y.q[j]))
            e = np.zeros(m)
            e[j] = h
            a_q, a_p = self.base(PhasePoint(y.t, y.q + e, y.p))
            b_q, b_p = self.base(PhasePoint(y.t, y.q - e, y.p))
            dq_gq[j] = (a_q - b_q) / (2 * h)
            dq_gp[j] = (a_p - b_p) / (2 * h)
            h = self.fd_step * max(1.0, abs(y.p[j]))
            e = np.zeros(m)
            e[j] = h
            a_q, a_p = self.base(PhasePoint(y.t, y.q, y.p + e))
            b_q, b_p = self.base(PhasePoint(y.t, y.q, y.p - e))
            dp_gq[j] = (a_q - b_q) / (2 * h)
            dp_gp[j] = (a_p - b_p) / (2 * h)
        return dq_gq, dq_gp, dp_gq, dp_gp

    def __call__(self, z):
        dq_gq, dq_gp, dp_gq, dp_gp = self.base_partials(z.y)
        gq, gp = self.base(z.y)
        gbar_q = dp_gq @ z.pdot - dp_gp @ z.qdot
        gbar_p = -dq_gq @ z.pdot + dq_gp @ z.qdot
        return gq, gp, gbar_q, gbar_p


def vertical_lift(base, fd_step: float = 1e-6, m: int | None = None) -> LiftedField:
    """Lift a field on V*Q (callable y -> (gamma^i, gamma_i)) to VV*Q."""
    if m is None:
        m = base.m
    return LiftedField(base, m, fd_step)


class AnalyticVerticalHamiltonField(VerticalField):
    """V gamma_H: the vertical derivative of the Hamilton field, from exact H-hessians."""

    def __init__(self, hs: HamiltonianSide):
        base = HamiltonField(hs)
        super().__init__(base, hs.config.dim)
        self.hs = hs

    def __call__(self, z):
        d = self.base.data(z.y)
        blocks = second_derivatives(d, self.hs.config)
        # d_V gamma^i = qdot^j d_j d^i H + pdot_j d^j d^i H
        gbar_q = blocks["qp"].T @ z.qdot + blocks["pp"] @ z.pdot
        # d_V gamma_i = -(qdot^j d_j d_i H + pdot_j d^j d_i H)
        gbar_p = -(blocks["qq"] @ z.qdot + blocks["qp"] @ z.pdot)
        return d.x.v.copy(), d.dL_dq.copy(), gbar_q, gbar_p


def analytic_vertical_field(hs: HamiltonianSide) -> AnalyticVerticalHamiltonField:
    return AnalyticVerticalHamiltonField(hs)


def vertical_hamiltonian_value(hs: HamiltonianSide, z: VerticalPhasePoint, seed=None) -> float:
    """d_V H = qdot^i d_i H + pdot_i d^i H = -qdot . d_q L + pdot . v."""
    d = hamilton_data(hs, z.y, seed)
    return float(-z.qdot @ d.dL_dq + z.pdot @ d.x.v)


def constrained_vertical_hamiltonian(hs: HamiltonianSide, cod: Codistribution,
                                     z: VerticalPhasePoint) -> float:
    """d_V H + qdot^i Mt_ab M_ij betadot^{aj} beta^b(gamma_H)."""
    field = ConstrainedHamiltonField(hs, cod)
    cd = field.constrained_data(z.y)
    d = cd.base
    return float(-z.qdot @ d.dL_dq + z.pdot @ d.x.v + z.qdot @ cd.correction)


def trajectory_lagrangian_LH(hs: HamiltonianSide, z: VerticalPhasePoint, q_t, p_t,
                             qdot_t=None, pdot_t=None, cod: Codistribution | None = None,
                             seed=None) -> float:
    """L_H = pdot_i (q^i_t - d^i H) - qdot^i (p_ti + d_i H [+ constraint term]).

    ``qdot_t`` and ``pdot_t`` do not enter L_H; they are accepted so a full
    jet sample of VV*Q can be passed through unchanged.
    """
    q_t = np.asarray(q_t, dtype=float)
    p_t = np.asarray(p_t, dtype=float)
    if cod is None:
        d = hamilton_data(hs, z.y, seed)
        extra = 0.0
    else:
        cd = ConstrainedHamiltonField(hs, cod).constrained_data(z.y)
        d = cd.base
        extra = cd.correction
    return float(z.pdot @ (q_t - d.x.v) - z.qdot @ (p_t - d.dL_dq + extra))
