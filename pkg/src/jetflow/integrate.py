"""Fixed-step RK4 on J^1 Q, V*Q and VV*Q with per-sample monitors.

Constraint drift is reported, never corrected: the monitors are the point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import linalg
from .bundle import Jet2Point, JetPoint, ReferenceFrame
from .constraint import RANK_RTOL
from .dynamics import DynamicEquation, NewtonianSystem, energy_terms
from .errors import (GridMismatch, InadmissibleConstraint, NonFinite, OffConstraint,
                     RankDropped)
from .projection import ConstrainedDynamics

ON_CONSTRAINT_TOL = 1e-9


@dataclass(frozen=True)
class IntegratorConfig:
    t0: float
    t1: float
    dt: float
    method: str = "rk4"

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError("t1 must exceed t0")
        if not (self.dt > 0 and self.dt <= self.t1 - self.t0 + 1e-15):
            raise ValueError("dt must be positive and no larger than t1 - t0")
        if self.method != "rk4":
            raise ValueError(f"unsupported method {self.method!r}")

    def grid(self) -> np.ndarray:
        n = max(1, math.ceil((self.t1 - self.t0) / self.dt - 1e-9))
        ts = self.t0 + self.dt * np.arange(n + 1)
        ts[-1] = self.t1
        return ts


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    names: list[str]
    monitors: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        if name in self.monitors:
            return self.monitors[name]
        return self.states[:, self.names.index(name)]


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray, h: float,
             k1: np.ndarray | None = None):
    if k1 is None:
        k1 = f(t, y)
    k2 = f(t + h / 2, y + (h / 2) * k1)
    k3 = f(t + h / 2, y + (h / 2) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _march(f, y0: np.ndarray, cfg: IntegratorConfig, on_sample=None):
    """RK4 over the grid; ``on_sample`` may return f at the sample to reuse as k1."""
    ts = cfg.grid()
    ys = np.empty((len(ts), len(y0)))
    ys[0] = y0
    k1 = on_sample(0, ts[0], ys[0]) if on_sample else None
    for k in range(len(ts) - 1):
        y = rk4_step(f, ts[k], ys[k], ts[k + 1] - ts[k], k1)
        if not np.all(np.isfinite(y)):
            raise NonFinite(float(ts[k + 1]))
        ys[k + 1] = y
        k1 = on_sample(k + 1, ts[k + 1], y) if on_sample else None
    return ts, ys


def _acceleration_fn(dyn):
    if isinstance(dyn, NewtonianSystem):
        return dyn.xi
    return dyn


def integrate_second_order(dyn: ConstrainedDynamics | DynamicEquation | NewtonianSystem,
                           x0: JetPoint, cfg: IntegratorConfig,
                           frame: ReferenceFrame | None = None,
                           monitors: bool = True) -> Trajectory:
    """RK4 on (q, v) with q_t = v, v_t = xi~(t, q, v) (or xi when unconstrained)."""
    acc = _acceleration_fn(dyn)
    m = x0.m
    constrained = isinstance(dyn, ConstrainedDynamics)
    meta: dict = {"constrained": constrained}
    if constrained:
        res = dyn.cod.residuals(x0)
        if res is not None:
            r = float(np.max(np.abs(res), initial=0.0))
            if r > ON_CONSTRAINT_TOL:
                raise OffConstraint(r, ON_CONSTRAINT_TOL)
            meta["drift_monitor"] = True
        else:
            meta["drift_monitor"] = False
            warnings.warn("raw codistribution: initial state cannot be checked against the "
                          "constraint and no drift monitor is available", RuntimeWarning,
                          stacklevel=2)

    def f(t, y):
        try:
            if constrained:
                a = dyn.stage(t, y)
            else:
                a = acc(JetPoint.trusted(t, y[:m], y[m:]))
        except InadmissibleConstraint as exc:
            raise RankDropped(float(t), str(exc)) from None
        return np.concatenate([y[m:], a])

    ts_all = cfg.grid()
    mon: dict[str, list] = {}

    lag = None
    if constrained:
        lag = dyn.base.lagrangian
    elif isinstance(dyn, NewtonianSystem):
        lag = dyn.lagrangian
    if lag is None and hasattr(acc, "lag"):
        lag = acc.lag
    if frame is None and lag is not None:
        frame = ReferenceFrame.zero(lag.config)

    def on_sample(k, t, y):
        x = JetPoint.trusted(t, y[:m], y[m:])
        if constrained:
            try:
                d = dyn.decompose(x)
            except InadmissibleConstraint as exc:
                raise RankDropped(float(t), str(exc)) from None
            rank = linalg.numerical_rank(d.sd, RANK_RTOL) if dyn.cod.n else 0
            if rank < dyn.cod.n:
                raise RankDropped(float(t), f"rank {rank} < {dyn.cod.n}")
        if not monitors:
            return np.concatenate([y[m:], d.xi_tilde]) if constrained else None
        if constrained:
            res = dyn.cod.residuals(x)
            if res is not None:
                mon.setdefault("constraint", []).append(float(np.max(np.abs(res), initial=0.0)))
            compat = d.s0 + d.s @ x.v + d.sd @ d.xi_tilde
            mon.setdefault("compat", []).append(float(np.max(np.abs(compat), initial=0.0)))
            mon.setdefault("gauss", []).append(float(d.reaction @ d.metric @ d.reaction))
            if frame is not None:
                rel = x.v - frame(x.t, x.q)
                mon.setdefault("reaction_power", []).append(float(d.force @ rel))
        if lag is not None and frame is not None:
            # F is the reaction plus any applied force
            if constrained:
                a, force = d.xi_tilde, d.force
                applied = dyn.base.force
            else:
                a, force = acc(x), None
                applied = dyn.force if isinstance(dyn, NewtonianSystem) else None
            if applied is not None:
                force = applied(x) if force is None else force + applied(x)
            energy, balance = energy_terms(lag, frame, x, a, force)
            mon.setdefault("energy", []).append(energy)
            mon.setdefault("energy_balance", []).append(balance)
            return np.concatenate([y[m:], a])
        if constrained:
            return np.concatenate([y[m:], d.xi_tilde])
        return None

    ts, ys = _march(f, np.concatenate([x0.q, x0.v]), cfg, on_sample)
    assert len(ts) == len(ts_all)
    cfg_names = None
    if lag is not None:
        cfg_names = list(lag.config.coordinates) + list(lag.config.velocities)
    names = cfg_names or [f"q{i + 1}" for i in range(m)] + [f"v{i + 1}" for i in range(m)]
    return Trajectory(ts, ys, names, {k: np.array(v) for k, v in mon.items()}, meta)


def integrate_first_order(field, y0: np.ndarray, cfg: IntegratorConfig,
                          names: Sequence[str] | None = None,
                          monitor_fns: dict[str, Callable[[float, np.ndarray], float]] | None = None
                          ) -> Trajectory:
    """RK4 for a field with ``rhs(t, state)``: (q, p) on V*Q or (q, p, qdot, pdot) on VV*Q."""
    y0 = np.asarray(y0, dtype=float)
    mon: dict[str, list] = {}

    def on_sample(k, t, y):
        for key, fn in (monitor_fns or {}).items():
            mon.setdefault(key, []).append(float(fn(t, y)))

    ts, ys = _march(field.rhs, y0, cfg, on_sample)
    if names is None:
        m = field.m
        names = [f"q{i + 1}" for i in range(m)] + [f"p{i + 1}" for i in range(m)]
        if len(y0) == 4 * m:
            names += [f"qdot{i + 1}" for i in range(m)] + [f"pdot{i + 1}" for i in range(m)]
    return Trajectory(ts, ys, list(names), {k: np.array(v) for k, v in mon.items()})


@dataclass
class Deviation:
    per_component: np.ndarray
    names: list[str]

    @property
    def max(self) -> float:
        return float(np.max(self.per_component, initial=0.0))


def compare_trajectories(a: Trajectory, b: Trajectory,
                         map: Callable[[float, np.ndarray], np.ndarray] | None = None) -> Deviation:
    """Per-component max |a - map(b)| over the shared time grid."""
    if len(a.t) != len(b.t) or np.max(np.abs(a.t - b.t), initial=0.0) > 1e-12 * max(1.0, abs(a.t[-1])):
        raise GridMismatch("trajectories are sampled on different time grids")
    other = b.states if map is None else np.array([map(t, y) for t, y in zip(b.t, b.states)])
    if other.shape != a.states.shape:
        raise GridMismatch(f"state shapes differ: {a.states.shape} vs {other.shape}")
    dev = np.max(np.abs(a.states - other), axis=0)
    return Deviation(dev, list(a.names))


def jet2_samples(dyn, traj: Trajectory) -> list[Jet2Point]:
    """Attach the integrated acceleration to each sample of a second-order run."""
    acc = _acceleration_fn(dyn)
    m = traj.states.shape[1] // 2
    out = []
    for t, y in zip(traj.t, traj.states):
        x = JetPoint(t, y[:m], y[m:])
        out.append(Jet2Point(x, acc(x)))
    return out


def fd_weights(offsets: Sequence[int]) -> np.ndarray:
    """First-derivative weights for unit spacing at the given integer offsets."""
    offs = np.asarray(offsets, dtype=float)
    k = len(offs)
    V = np.vander(offs, k, increasing=True).T          # V[j, i] = offs_i^j
    rhs = np.zeros(k)
    rhs[1] = 1.0
    return np.linalg.solve(V, rhs)


def time_derivatives(traj: Trajectory, order: int = 4) -> np.ndarray:
    """Finite-difference d/dt of every state column, accurate to O(dt^order).

    Interior samples use the central (order+1)-point stencil; samples within
    order/2 of an end use a window of the same width shifted inside the grid.
    Requires a uniform grid (the short last step of a run breaks it and is
    rejected).
    """
    if order not in (2, 4, 6, 8):
        raise ValueError("order must be 2, 4, 6 or 8")
    t, y = traj.t, traj.states
    n = len(t)
    w = order + 1
    if n < w:
        raise ValueError(f"need at least {w} samples")
    h = t[1] - t[0]
    if np.max(np.abs(np.diff(t) - h)) > 1e-9 * h:
        raise GridMismatch("time_derivatives needs uniform spacing")
    half = order // 2
    d = np.empty_like(y)
    c = fd_weights(range(-half, half + 1))
    d[half:n - half] = sum(c[j] * y[j:n - w + 1 + j] for j in range(w))
    for i in list(range(half)) + list(range(n - half, n)):
        lo = min(max(i - half, 0), n - w)
        c = fd_weights([k - i for k in range(lo, lo + w)])
        d[i] = c @ y[lo:lo + w]
    return d / h
