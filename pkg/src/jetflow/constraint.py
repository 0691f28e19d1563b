"""Nonholonomic constraints as codistributions on J^1 Q.

A constraint is spanned by 1-forms s^a = s^a_0 dt + s^a_i dq^i + sd^a_i dv^i.
Codistributions can be given directly, as the differentials of functions
f^a(t, q, v) cutting out a velocity submanifold, as linear constraints
f^a_0(t, q) + f^a_i(t, q) v^i, or from a connection on a composite fibration
Q -> Sigma -> R.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import linalg
from .bundle import ConfigurationSpace, JetPoint, ReferenceFrame
from .dynamics import CHECK_TOL, probe_points
from .errors import InadmissibleConstraint, PartitionError, RankError, ShapeError, ValidationError
from .expr import BinOp, Expr, Var
from .report import CheckReport

RANK_RTOL = 1e-10


def _as_expr(config, e) -> Expr:
    return e if isinstance(e, Expr) else config.expr(str(e))


@dataclass
class ConstraintOneForm:
    s0: Expr
    si: list[Expr]
    sdoti: list[Expr]

    def evaluate(self, config: ConfigurationSpace, x: JetPoint):
        vals = config.jet_values(x)
        return (self.s0.value(vals),
                np.array([e.value(vals) for e in self.si]),
                np.array([e.value(vals) for e in self.sdoti]))

    @classmethod
    def from_text(cls, config, s0, si, sdoti) -> "ConstraintOneForm":
        m = config.dim
        if len(si) != m or len(sdoti) != m:
            raise ShapeError(f"form components need length {m}")
        return cls(_as_expr(config, s0), [_as_expr(config, e) for e in si],
                   [_as_expr(config, e) for e in sdoti])


@dataclass
class Codistribution:
    """Ordered spanning forms plus, when exact, the functions they differentiate."""

    config: ConfigurationSpace
    forms: list[ConstraintOneForm]
    functions: list[Expr] | None = None
    kind: str = "forms"
    always_admissible: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.forms) > self.config.dim:
            raise RankError(f"{len(self.forms)} forms exceed dimension {self.config.dim}")

    @property
    def n(self) -> int:
        return len(self.forms)

    @property
    def exact(self) -> bool:
        return self.functions is not None

    def evaluate(self, x: JetPoint, vals: list[float] | None = None):
        """(s0 [n], s [n, m], sd [n, m]) at ``x``; ``vals`` may carry its jet values."""
        cfg = self.config
        n, m = self.n, cfg.dim
        if n == 0:
            return np.zeros(0), np.zeros((0, m)), np.zeros((0, m))
        if self.functions is not None:
            if vals is None:
                vals = cfg.jet_values(x)
            dense = self.__dict__.get("_dense")
            if dense is None:
                dense = self.__dict__["_dense"] = [f._fn(1)[4] for f in self.functions]
            grads = np.array([fn(vals)[1] for fn in dense], dtype=float)
            return grads[:, 0], grads[:, cfg.q_slice], grads[:, cfg.v_slice]
        s0 = np.empty(n)
        s = np.empty((n, m))
        sd = np.empty((n, m))
        for a, form in enumerate(self.forms):
            s0[a], s[a], sd[a] = form.evaluate(cfg, x)
        return s0, s, sd

    def residuals(self, x: JetPoint) -> np.ndarray | None:
        """Values f^a(x) for exact constraints, else None (no drift monitor)."""
        if self.functions is None:
            return None
        vals = self.config.jet_values(x)
        return np.array([f.value(vals) for f in self.functions])

    def contract(self, x: JetPoint, acc: np.ndarray) -> np.ndarray:
        """s^a(xi) = s^a_0 + s^a_i v^i + sd^a_i xi^i for every form."""
        s0, s, sd = self.evaluate(x)
        return s0 + s @ x.v + sd @ acc


def _exact_forms(config: ConfigurationSpace, functions: Sequence[Expr]) -> list[ConstraintOneForm]:
    qs, vs = config.q_slice, config.v_slice
    forms = []
    for f in functions:
        forms.append(ConstraintOneForm(
            f.diff(0),
            [f.diff(i) for i in range(qs.start, qs.stop)],
            [f.diff(i) for i in range(vs.start, vs.stop)],
        ))
    return forms


def _check_rank(cod: Codistribution, points: Iterable[JetPoint]):
    for x in points:
        rank, ok = admissibility_report(cod, x)
        if not ok:
            raise InadmissibleConstraint(f"velocity coefficients have rank {rank} < {cod.n}", x)


def from_forms(config: ConfigurationSpace, forms: Sequence[ConstraintOneForm],
               points: Iterable[JetPoint] | None = None) -> Codistribution:
    cod = Codistribution(config, list(forms), kind="forms")
    _check_rank(cod, probe_points(config) if points is None else points)
    return cod


def from_submanifold(config: ConfigurationSpace, functions: Sequence[str | Expr],
                     points: Iterable[JetPoint] | None = None) -> Codistribution:
    """S = Ann(TN) for N = {f^a = 0}, spanned by s^a = df^a."""
    fs = [_as_expr(config, f) for f in functions]
    cod = Codistribution(config, _exact_forms(config, fs), functions=fs, kind="submanifold")
    _check_rank(cod, probe_points(config) if points is None else points)
    return cod


@dataclass
class LinearConstraintSpec:
    """f^a = f^a_0(t, q) + f^a_i(t, q) v^i."""

    config: ConfigurationSpace
    f0: list[Expr]
    fi: list[list[Expr]]

    @classmethod
    def from_text(cls, config, f0: Sequence, fi: Sequence[Sequence]) -> "LinearConstraintSpec":
        if len(f0) != len(fi):
            raise ShapeError("f0 and fi need the same number of rows")
        if any(len(row) != config.dim for row in fi):
            raise ShapeError(f"fi rows need length {config.dim}")
        return cls(config, [_as_expr(config, e) for e in f0],
                   [[_as_expr(config, e) for e in row] for row in fi])

    @property
    def n(self) -> int:
        return len(self.f0)

    def functions(self) -> list[Expr]:
        out = []
        vs = self.config.v_slice
        for a in range(self.n):
            node = self.f0[a].ast
            for i, c in enumerate(self.fi[a]):
                v = Var(self.config.velocities[i], vs.start + i)
                node = BinOp("+", node, BinOp("*", c.ast, v))
            out.append(Expr(node, self.config.space))
        return out

    def matrices(self, x: JetPoint) -> tuple[np.ndarray, np.ndarray]:
        vals = self.config.jet_values(x)
        return (np.array([e.value(vals) for e in self.f0]),
                np.array([[e.value(vals) for e in row] for row in self.fi]))


def from_linear(spec: LinearConstraintSpec, points: Iterable[JetPoint] | None = None) -> Codistribution:
    config = spec.config
    vel = set(config.space.of_role("velocity"))
    for a in range(spec.n):
        if spec.f0[a].variables & vel or any(e.variables & vel for e in spec.fi[a]):
            raise RankError(f"linear constraint row {a} has velocity-dependent coefficients")
    for x in (probe_points(config) if points is None else points):
        _, fi = spec.matrices(x)
        if linalg.numerical_rank(fi, RANK_RTOL) < spec.n:
            raise RankError(f"matrix f^a_i is rank deficient at {x!r}")
    fs = spec.functions()
    return Codistribution(config, _exact_forms(config, fs), functions=fs, kind="linear",
                          always_admissible=True, meta={"spec": spec})


@dataclass
class CompositeConstraintSpec:
    """Connection on Q -> Sigma: base indices sigma^r, fiber indices q^a (0-based)."""

    config: ConfigurationSpace
    base: list[int]
    fiber: list[int]
    B: list[Expr]
    Br: list[list[Expr]]

    @classmethod
    def from_text(cls, config, base: Sequence[int], fiber: Sequence[int],
                  B: Sequence, Br: Sequence[Sequence]) -> "CompositeConstraintSpec":
        return cls(config, list(base), list(fiber), [_as_expr(config, e) for e in B],
                   [[_as_expr(config, e) for e in row] for row in Br])

    def codistribution(self) -> "Codistribution":
        """The spanning forms, built once per spec."""
        cod = self.__dict__.get("_cod")
        if cod is None:
            cod = self.__dict__["_cod"] = from_composite(self)
        return cod

    def validate(self):
        m = self.config.dim
        idx = list(self.base) + list(self.fiber)
        if sorted(idx) != list(range(m)):
            raise PartitionError(f"base {self.base} and fiber {self.fiber} do not partition 0..{m - 1}")
        if len(self.B) != len(self.fiber) or len(self.Br) != len(self.fiber):
            raise PartitionError("need one B^a and one row B^a_r per fiber coordinate")
        if any(len(row) != len(self.base) for row in self.Br):
            raise PartitionError("rows of B^a_r need one entry per base coordinate")
        vel = set(self.config.space.of_role("velocity"))
        for e in [*self.B, *(c for row in self.Br for c in row)]:
            if e.variables & vel:
                raise ValidationError("composite", f"connection component {e.text!r} depends on velocities")


def from_composite(spec: CompositeConstraintSpec) -> Codistribution:
    """Forms s^a = d(q^a_t - B^a - sigma^r_t B^a_r), one per fiber coordinate."""
    spec.validate()
    config = spec.config
    vs = config.v_slice
    fs = []
    for a, qa in enumerate(spec.fiber):
        node = BinOp("-", Var(config.velocities[qa], vs.start + qa), spec.B[a].ast)
        for r, sr in enumerate(spec.base):
            sig_t = Var(config.velocities[sr], vs.start + sr)
            node = BinOp("-", node, BinOp("*", sig_t, spec.Br[a][r].ast))
        fs.append(Expr(node, config.space))
    return Codistribution(config, _exact_forms(config, fs), functions=fs, kind="composite",
                          always_admissible=True, meta={"spec": spec})


def admissibility_report(cod: Codistribution, x: JetPoint) -> tuple[int, bool]:
    """(numerical rank of sd^a_i, rank == n)."""
    if cod.n == 0:
        return 0, True
    _, _, sd = cod.evaluate(x)
    rank = linalg.numerical_rank(sd, RANK_RTOL)
    return rank, rank == cod.n


def evaluate_form_on_dynamics(form: ConstraintOneForm, config: ConfigurationSpace,
                              x: JetPoint, xi: np.ndarray) -> float:
    s0, s, sd = form.evaluate(config, x)
    return float(s0 + s @ x.v + sd @ np.asarray(xi, dtype=float))


def verify_constraint_frame(spec: LinearConstraintSpec, frame: ReferenceFrame,
                            points: Iterable[JetPoint], tol: float = CHECK_TOL,
                            diagnose: bool = False) -> CheckReport:
    """max |f^a_0 + f^a_i Gamma^i| over the sample.

    With ``diagnose`` the pointwise minimum-norm solution of
    f^a_i G^i = -f^a_0 is attached per point as a candidate frame value.
    """
    worst_val, witness = 0.0, None
    candidates = []
    for x in points:
        f0, fi = spec.matrices(x)
        r = float(np.max(np.abs(f0 + fi @ frame(x.t, x.q)), initial=0.0))
        if not r <= worst_val:
            worst_val, witness = r, x
        if diagnose:
            g, *_ = np.linalg.lstsq(fi, -f0, rcond=None)
            candidates.append((x, g))
    rep = CheckReport("constraint frame", worst_val, tol, witness=witness)
    if diagnose:
        rep.detail["candidates"] = candidates
    return rep


def lift_velocity(spec: CompositeConstraintSpec, t: float, q, base_velocity) -> np.ndarray:
    """Velocity on N: q^a_t = B^a + sigma^r_t B^a_r for given base velocities."""
    config = spec.config
    v = np.zeros(config.dim)
    v[spec.base] = base_velocity
    vals = config.values(t, q, v).tolist()
    for a, qa in enumerate(spec.fiber):
        v[qa] = spec.B[a].value(vals) + sum(
            v[sr] * spec.Br[a][r].value(vals) for r, sr in enumerate(spec.base))
    return v
