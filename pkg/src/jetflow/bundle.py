"""State types on the configuration bundle Q -> R and reference frames.

Everything lives in one adapted chart ``(t, q^i)``; jet points carry the
velocities ``v^i = q^i_t`` and momentum points carry ``p_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ShapeError, ValidationError
from .expr import VELOCITY, Expr, VariableSpace


def _vec(x, m: int, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.shape != (m,):
        raise ShapeError(f"{name} must have length {m}, got {a.shape[0]}")
    return a


@dataclass(frozen=True)
class ConfigurationSpace:
    """Dimension, coordinate names and the shared jet variable space.

    ``params`` holds fixed values for auxiliary variables (model parameters).
    """

    dim: int
    coordinates: tuple[str, ...] = ()
    velocities: tuple[str, ...] = ()
    params: Mapping[str, float] = field(default_factory=dict)
    space: VariableSpace = field(init=False, compare=False)
    _aux: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")
        coords = tuple(self.coordinates) or tuple(f"q{i + 1}" for i in range(self.dim))
        vels = tuple(self.velocities) or tuple(f"v{i + 1}" for i in range(self.dim))
        object.__setattr__(self, "coordinates", coords)
        object.__setattr__(self, "velocities", vels)
        object.__setattr__(self, "params", dict(self.params))
        space = VariableSpace.jet(self.dim, coords, vels, tuple(self.params))
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "_aux", np.array(list(self.params.values()), dtype=float))

    @property
    def m(self) -> int:
        return self.dim

    @property
    def t_index(self) -> int:
        return 0

    @property
    def q_slice(self) -> slice:
        return slice(1, 1 + self.dim)

    @property
    def v_slice(self) -> slice:
        return slice(1 + self.dim, 1 + 2 * self.dim)

    def expr(self, text: str) -> Expr:
        return Expr.parse(text, self.space)

    def values(self, t: float, q, v=None) -> np.ndarray:
        """Flat evaluation vector in the order of ``space``."""
        m = self.dim
        out = np.empty(1 + 2 * m + len(self._aux))
        out[0] = t
        out[1:1 + m] = q
        out[1 + m:1 + 2 * m] = 0.0 if v is None else v
        out[1 + 2 * m:] = self._aux
        return out

    def jet_values(self, x: "JetPoint") -> list[float]:
        return self.values(x.t, x.q, x.v).tolist()


@dataclass(frozen=True)
class JetPoint:
    t: float
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        v = np.asarray(self.v, dtype=float).reshape(-1)
        if q.shape != v.shape:
            raise ShapeError("q and v must have equal length")
        if not (np.isfinite(self.t) and np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise ValueError("jet point must be finite")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)

    @property
    def m(self) -> int:
        return self.q.shape[0]

    @classmethod
    def trusted(cls, t: float, q: np.ndarray, v: np.ndarray) -> "JetPoint":
        """Skip validation; for float arrays produced inside an integrator step."""
        x = object.__new__(cls)
        object.__setattr__(x, "t", float(t))
        object.__setattr__(x, "q", q)
        object.__setattr__(x, "v", v)
        return x


@dataclass(frozen=True)
class Jet2Point:
    x: JetPoint
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a, self.x.m, "a"))
        if not np.all(np.isfinite(self.a)):
            raise ValueError("acceleration must be finite")

    @property
    def t(self):
        return self.x.t

    @property
    def q(self):
        return self.x.q

    @property
    def v(self):
        return self.x.v


@dataclass(frozen=True)
class PhasePoint:
    t: float
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float).reshape(-1)
        if q.shape != p.shape:
            raise ShapeError("q and p must have equal length")
        if not (np.isfinite(self.t) and np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase point must be finite")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def m(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True)
class VerticalPhasePoint:
    """Point of VV*Q: a phase point plus a vertical direction (qdot, pdot)."""

    y: PhasePoint
    qdot: np.ndarray
    pdot: np.ndarray

    def __post_init__(self):
        m = self.y.m
        object.__setattr__(self, "qdot", _vec(self.qdot, m, "qdot"))
        object.__setattr__(self, "pdot", _vec(self.pdot, m, "pdot"))
        if not (np.all(np.isfinite(self.qdot)) and np.all(np.isfinite(self.pdot))):
            raise ValueError("vertical components must be finite")

    @property
    def t(self):
        return self.y.t

    @property
    def q(self):
        return self.y.q

    @property
    def p(self):
        return self.y.p


class ReferenceFrame:
    """A connection on Q -> R given by components Gamma^i(t, q)."""

    def __init__(self, config: ConfigurationSpace, gamma: Sequence[str | Expr]):
        if len(gamma) != config.dim:
            raise ShapeError(f"frame needs {config.dim} components, got {len(gamma)}")
        self.config = config
        self.gamma = [g if isinstance(g, Expr) else config.expr(str(g)) for g in gamma]
        vel = set(config.space.of_role(VELOCITY))
        for i, g in enumerate(self.gamma):
            if g.variables & vel:
                raise ValidationError(f"frame[{i}]", "reference frame may not depend on velocities")

        self._constant = None
        if not any(g.variables for g in self.gamma):
            self._constant = np.array([g.value(config.values(0.0, np.zeros(config.dim)).tolist())
                                       for g in self.gamma])

    @classmethod
    def zero(cls, config: ConfigurationSpace) -> "ReferenceFrame":
        return cls(config, ["0"] * config.dim)

    def jet(self, x: JetPoint) -> tuple[np.ndarray, np.ndarray]:
        """(Gamma^i, d_t Gamma^i) at ``x`` from one evaluation pass."""
        if self._constant is not None:
            return self._constant.copy(), np.zeros(self.config.dim)
        cfg = self.config
        vals = cfg.jet_values(x)
        rows = [g._fn(1)[4](vals) for g in self.gamma]
        gam = np.array([r[0] for r in rows], dtype=float)
        grads = np.array([r[1] for r in rows], dtype=float)
        return gam, grads[:, 0] + grads[:, cfg.q_slice] @ x.v

    def __call__(self, t: float, q) -> np.ndarray:
        if self._constant is not None:
            return self._constant.copy()
        vals = self.config.values(t, q).tolist()
        return np.array([g.value(vals) for g in self.gamma])

    def check_velocity_independent(self, points: Sequence[JetPoint]) -> float:
        """Largest |d Gamma / dv| over ``points`` (identically zero for a valid frame)."""
        vs = self.config.v_slice
        worst = 0.0
        for x in points:
            vals = self.config.jet_values(x)
            for g in self.gamma:
                grad = g.partials(vals, 1).gradient
                worst = max(worst, float(np.max(np.abs(grad[vs]), initial=0.0)))
        return worst


def relative_velocity(frame: ReferenceFrame, x: JetPoint) -> np.ndarray:
    """v^i - Gamma^i(t, q)."""
    return x.v - frame(x.t, x.q)


def frame_total_derivative(frame: ReferenceFrame, x: JetPoint) -> np.ndarray:
    """d_t Gamma^i = dGamma^i/dt + v^j dGamma^i/dq^j along the jet point."""
    return frame.jet(x)[1]
