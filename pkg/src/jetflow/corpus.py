"""Fixture systems and a seeded random corpus of systems, constraints and expressions.

Every random object is built as expression text from a SplitMix64 stream, so
a seed fully determines the corpus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bundle import ConfigurationSpace, JetPoint, ReferenceFrame
from .constraint import (Codistribution, LinearConstraintSpec, from_linear, from_submanifold)
from .dynamics import LagrangianSystem, NewtonianSystem, ProbeBox, newtonian_from_lagrangian
from .rng import SplitMix64

GRAVITY = 9.8


@dataclass
class Fixture:
    name: str
    config: ConfigurationSpace
    lagrangian: LagrangianSystem
    system: NewtonianSystem
    constraint: Codistribution | None = None
    frame: ReferenceFrame | None = None
    x0: JetPoint | None = None
    box: ProbeBox = field(default_factory=ProbeBox)


def _fixture(name, config, L, constraint=None, frame=None, x0=None, box=None):
    lag = LagrangianSystem(config, L)
    pts = (box or ProbeBox()).sample(config.dim, 20)
    sys = newtonian_from_lagrangian(lag, pts)
    cod = constraint(config, pts) if constraint else None
    return Fixture(name, config, lag, sys, cod, frame, x0, box or ProbeBox())


def free_particle(dim: int = 1) -> Fixture:
    config = ConfigurationSpace(dim)
    L = "0.5*(" + " + ".join(f"v{i + 1}^2" for i in range(dim)) + ")"
    v0 = [1.0] + [0.0] * (dim - 1)
    return _fixture("free particle", config, L, x0=JetPoint(0.0, [0.0] * dim, v0))


def harmonic_oscillator() -> Fixture:
    config = ConfigurationSpace(1)
    return _fixture("harmonic oscillator", config, "0.5*v1^2 - 0.5*q1^2",
                    x0=JetPoint(0.0, [1.0], [0.0]))


def gravity_particle() -> Fixture:
    config = ConfigurationSpace(2)
    return _fixture("gravity particle", config, f"0.5*(v1^2 + v2^2) - {GRAVITY}*q2",
                    x0=JetPoint(0.0, [0.0, 0.0], [1.0, 0.0]))


def constant_speed() -> Fixture:
    """Particle under gravity with |v| = 1 enforced by f = v1^2 + v2^2 - 1."""
    config = ConfigurationSpace(2)
    box = ProbeBox(v=(0.3, 1.0))
    return _fixture("constant speed", config, f"0.5*(v1^2 + v2^2) - {GRAVITY}*q2",
                    constraint=lambda c, pts: from_submanifold(c, ["v1^2 + v2^2 - 1"], pts),
                    x0=JetPoint(0.0, [0.0, 0.0], [0.6, 0.8]), box=box)


def frozen_vertical() -> Fixture:
    """Gravity with the linear constraint v2 = 0."""
    config = ConfigurationSpace(2)
    spec = lambda c: LinearConstraintSpec.from_text(c, ["0"], [["0", "1"]])
    return _fixture("frozen vertical", config, f"0.5*(v1^2 + v2^2) - {GRAVITY}*q2",
                    constraint=lambda c, pts: from_linear(spec(c), pts),
                    frame=ReferenceFrame.zero(config),
                    x0=JetPoint(0.0, [0.0, 0.0], [1.0, 0.0]))


def knife_edge(inertia: float = 0.5, slope: float = 2.0) -> Fixture:
    """Blade on an inclined plane: (x, y, heading), no sideways slip.

    The constraint sin(th) vx - cos(th) vy = 0 has no f0 term, so the zero
    frame is a constraint frame.
    """
    config = ConfigurationSpace(3, ("x", "y", "th"), ("vx", "vy", "vth"))
    L = f"0.5*(vx^2 + vy^2) + 0.5*{inertia}*vth^2 + {slope}*x"
    spec = lambda c: LinearConstraintSpec.from_text(c, ["0"], [["sin(th)", "-cos(th)", "0"]])
    th0 = 0.3
    x0 = JetPoint(0.0, [0.0, 0.0, th0], [math.cos(th0), math.sin(th0), 1.0])
    return _fixture("knife edge", config, L,
                    constraint=lambda c, pts: from_linear(spec(c), pts),
                    frame=ReferenceFrame.zero(config), x0=x0)


def nonlinear_legendre() -> Fixture:
    """Quartic velocity term and position-dependent inertia: Legendre map is nonlinear."""
    config = ConfigurationSpace(2)
    L = "0.5*v1^2 + v1^4/12 + 0.5*(1 + q1^2)*v2^2 - 0.5*q1^2"
    spec = lambda c: LinearConstraintSpec.from_text(c, ["0"], [["-q1", "1"]])
    x0 = JetPoint(0.0, [0.5, 0.0], [0.8, 0.4])
    return _fixture("nonlinear legendre", config, L,
                    constraint=lambda c, pts: from_linear(spec(c), pts), x0=x0)


def chaplygin_sleigh(mass: float = 1.0, offset: float = 0.5, inertia: float = 0.3) -> Fixture:
    """Sleigh with its mass centre ``offset`` ahead of a knife-edge contact.

    The metric depends on the heading, so the Legendre map is nonlinear in
    (q, v).  The constraint has no f0 term and the zero frame is a
    constraint frame.
    """
    config = ConfigurationSpace(3, ("x", "y", "th"), ("vx", "vy", "vth"))
    M, a, I = mass, offset, inertia
    L = (f"0.5*{M}*(vx^2 + vy^2) + {M * a}*vth*(-vx*sin(th) + vy*cos(th))"
         f" + 0.5*{M * a * a + I}*vth^2")
    spec = lambda c: LinearConstraintSpec.from_text(c, ["0"], [["-sin(th)", "cos(th)", "0"]])
    th0 = 0.2
    x0 = JetPoint(0.0, [0.0, 0.0, th0], [math.cos(th0), math.sin(th0), 1.5])
    return _fixture("chaplygin sleigh", config, L,
                    constraint=lambda c, pts: from_linear(spec(c), pts),
                    frame=ReferenceFrame.zero(config), x0=x0)


def fixtures() -> list[Fixture]:
    return [free_particle(2), harmonic_oscillator(), gravity_particle(), constant_speed(),
            frozen_vertical(), knife_edge(), chaplygin_sleigh(), nonlinear_legendre()]


def constrained_fixtures() -> list[Fixture]:
    return [f for f in fixtures() if f.constraint is not None]


# -- random corpus ------------------------------------------------------------

def _c(rng: SplitMix64, lo: float, hi: float) -> str:
    return repr(round(rng.uniform(lo, hi), 6))


def random_lagrangian_text(rng: SplitMix64, m: int) -> str:
    """1/2 m_ij(q) v^i v^j + b_i(q) v^i - V(t, q) with m_ij diagonally dominant.

    Diagonal entries lie in [1.5, 2.5]; each off-diagonal entry is bounded by
    0.9/(m-1) in absolute value, so the metric is SPD everywhere.
    """
    q = [f"q{i + 1}" for i in range(m)]
    v = [f"v{i + 1}" for i in range(m)]
    terms = []
    for i in range(m):
        k = rng.randint(m)
        terms.append(f"0.5*(2 + 0.5*cos({_c(rng, 0.5, 2)}*{q[k]}))*{v[i]}^2")
    off = 0.9 / max(1, m - 1)
    for i in range(m):
        for j in range(i + 1, m):
            k = rng.randint(m)
            terms.append(f"{_c(rng, -off, off)}*sin({q[k]} + {_c(rng, -1, 1)})*{v[i]}*{v[j]}")
    for i in range(m):
        k = rng.randint(m)
        terms.append(f"{_c(rng, -0.5, 0.5)}*cos({q[k]})*{v[i]}")
    for i in range(m):
        terms.append(f"-{_c(rng, 0.2, 2)}*{q[i]}^2/2")
    terms.append(f"{_c(rng, -1, 1)}*t*{q[0]}")
    return " + ".join(terms).replace("+ -", "- ")


def random_constraint(rng: SplitMix64, config: ConfigurationSpace, points) -> Codistribution:
    """One or two constraints: linear rows or a nonlinear velocity submanifold."""
    m = config.dim
    q, v = config.coordinates, config.velocities
    n = 1 if m < 3 else 1 + rng.randint(2)
    if rng.random() < 0.5:
        f0, fi = [], []
        for a in range(n):
            f0.append(f"{_c(rng, -0.5, 0.5)}*sin(t + {q[rng.randint(m)]})")
            row = [f"{_c(rng, -0.3, 0.3)}*cos({q[rng.randint(m)]})" for _ in range(m)]
            row[a] = f"{_c(rng, 1, 2)} + " + row[a]
            fi.append(row)
        return from_linear(LinearConstraintSpec.from_text(config, f0, fi), points)
    fs = []
    for a in range(n):
        lin = " + ".join(f"{_c(rng, -0.3, 0.3)}*{v[i]}" for i in range(m) if i != a)
        fs.append(f"{_c(rng, 1.5, 2)}*{v[a]} + 0.2*{v[a]}^2 + {lin} "
                  f"+ 0.1*{v[(a + 1) % m]}^2*sin({q[a]}) - {_c(rng, -0.5, 0.5)}")
    return from_submanifold(config, fs, points)


@dataclass
class Triple:
    fixture: Fixture
    point: JetPoint


def random_triples(count: int = 100, seed: int = 0) -> list[Triple]:
    """(system, constraint, point) triples with SPD metric; one point per system."""
    rng = SplitMix64(seed)
    out = []
    for k in range(count):
        m = 2 + rng.randint(3)
        config = ConfigurationSpace(m)
        L = random_lagrangian_text(rng, m)
        box = ProbeBox(t=(0, 1), q=(-1, 1), v=(-1, 1))
        pts = box.sample(m, 5, seed=rng.next_u64())
        lag = LagrangianSystem(config, L)
        sys = newtonian_from_lagrangian(lag, pts)
        cod = random_constraint(rng, config, pts)
        fx = Fixture(f"random {k}", config, lag, sys, cod, box=box)
        out.append(Triple(fx, pts[0]))
    return out


def on_constraint(cod: Codistribution, x: JetPoint, tol: float = 1e-13,
                  max_iter: int = 50) -> JetPoint:
    """Move the velocity of ``x`` onto {f = 0} by minimum-norm Gauss-Newton steps."""
    if not cod.exact:
        raise ValueError("needs a constraint given by functions")
    v = x.v.copy()
    for _ in range(max_iter):
        y = JetPoint(x.t, x.q, v)
        f = cod.residuals(y)
        if np.max(np.abs(f), initial=0.0) <= tol:
            return y
        sd = cod.evaluate(y)[2]
        v = v - np.linalg.lstsq(sd, f, rcond=None)[0]
    raise ValueError("could not reach the constraint")


def random_fixture(seed: int) -> Fixture:
    """A random system with an admissible constraint and an initial state on it."""
    rng = SplitMix64(seed)
    m = 2 + rng.randint(3)
    config = ConfigurationSpace(m)
    L = random_lagrangian_text(rng, m)
    box = ProbeBox(t=(0, 1), q=(-1, 1), v=(-1, 1))
    pts = box.sample(m, 5, seed=rng.next_u64())
    lag = LagrangianSystem(config, L)
    sys = newtonian_from_lagrangian(lag, pts)
    cod = random_constraint(rng, config, pts)
    x0 = on_constraint(cod, JetPoint(0.0, [0.2] * m, [0.5] * m))
    return Fixture(f"random system {seed}", config, lag, sys, cod, x0=x0, box=box)


def random_expression_text(rng: SplitMix64, names: list[str], depth: int = 3) -> str:
    """Random smooth expression; sqrt and log only see strictly positive arguments."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.3:
            return _c(rng, -2, 2)
        return names[rng.randint(len(names))]
    k = rng.randint(9)
    a = random_expression_text(rng, names, depth - 1)
    if k < 4:
        b = random_expression_text(rng, names, depth - 1)
        return f"({a}) {'+-*'[k % 3]} ({b})" if k < 3 else f"({a})/(1.5 + sin({b}))"
    if k == 4:
        return f"sin({a})"
    if k == 5:
        return f"cos({a})"
    if k == 6:
        return f"exp(0.3*sin({a}))"
    if k == 7:
        return f"sqrt(1 + ({a})^2)"
    return f"log(2 + cos({a}))"
