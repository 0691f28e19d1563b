"""Model files: a TOML subset describing a system, its constraint and run defaults.

Example::

    [space]
    dim = 2
    coordinates = ["x", "y"]        # optional, default q1..qm
    velocities = ["vx", "vy"]       # optional, default v1..vm

    [params]
    g = 9.8

    [lagrangian]
    L = "0.5*(vx^2 + vy^2) - g*y"

    [constraint]
    kind = "submanifold"
    f = ["vx^2 + vy^2 - 1"]

    [initial]
    q = [0.0, 0.0]
    v = [0.6, 0.8]

Exactly one of [lagrangian] or [newtonian] (metric, xi) is required.  The
constraint kinds and their keys are

    forms        s0 = [..], s = [[..]], sdot = [[..]]
    submanifold  f = [..]
    linear       f0 = [..], fi = [[..]]
    composite    base = [names], fiber = [names], B = [..], Br = [[..]]

Optional sections: [frame] gamma, [force] F, [probe] t/q/v ranges and n,
[initial] t/q/v.
"""

from __future__ import annotations

import os
import re
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

try:
    import tomllib as tomli
except ImportError:  # Python < 3.11
    import tomli

from . import linalg
from .bundle import ConfigurationSpace, JetPoint, ReferenceFrame
from .constraint import (Codistribution, CompositeConstraintSpec, ConstraintOneForm,
                         LinearConstraintSpec, from_composite, from_forms, from_linear,
                         from_submanifold)
from .dynamics import (ExpressionDynamics, ExpressionMetric, ExternalForce, LagrangeDynamics,
                       LagrangianSystem, NewtonianSystem, ProbeBox, apply_external_force,
                       mass_metric_from_lagrangian)
from .errors import InputError, ModelParseError, ValidationError
from .expr import Expr

SECTIONS = {"space", "params", "lagrangian", "newtonian", "constraint", "frame", "force",
            "probe", "initial"}
KINDS = ("forms", "submanifold", "linear", "composite")
PROBE_ENV = "JETFLOW_PROBE_POINTS"


@dataclass
class ModelFile:
    path: str | None
    config: ConfigurationSpace
    system: NewtonianSystem
    lagrangian: LagrangianSystem | None = None
    constraint: Codistribution | None = None
    constraint_kind: str | None = None
    constraint_spec: Any = None
    frame: ReferenceFrame | None = None
    force: ExternalForce | None = None
    force_report: Any = None
    box: ProbeBox = field(default_factory=ProbeBox)
    probe_n: int = 100
    x0: JetPoint | None = None

    @property
    def dim(self) -> int:
        return self.config.dim

    def probe_points(self, seed: int = 0, n: int | None = None) -> list[JetPoint]:
        return self.box.sample(self.dim, self.probe_n if n is None else n, seed)


def _expr(config: ConfigurationSpace, name: str, text) -> Expr:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(float(text))
    if not isinstance(text, str):
        raise ValidationError(name, f"expected an expression string, got {type(text).__name__}")
    try:
        return config.expr(text)
    except InputError as exc:
        raise ValidationError(name, str(exc)) from None


def _vector(config, name, value, length) -> list[Expr]:
    if not isinstance(value, list) or len(value) != length:
        raise ValidationError(name, f"expected a list of {length} expressions")
    return [_expr(config, f"{name}[{i}]", e) for i, e in enumerate(value)]


def _matrix(config, name, value, rows, cols) -> list[list[Expr]]:
    if not isinstance(value, list) or (rows is not None and len(value) != rows):
        raise ValidationError(name, f"expected {rows} rows")
    return [_vector(config, f"{name}[{i}]", row, cols) for i, row in enumerate(value)]


def _floats(name, value, length) -> list[float]:
    if (not isinstance(value, list) or len(value) != length
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise ValidationError(name, f"expected a list of {length} numbers")
    return [float(v) for v in value]


def _range(name, value) -> tuple[float, float]:
    lo, hi = _floats(name, value, 2)
    if not hi >= lo:
        raise ValidationError(name, "range must be [low, high] with low <= high")
    return lo, hi


def _keys(section: str, table: dict, allowed: set[str]):
    extra = sorted(set(table) - allowed)
    if extra:
        raise ValidationError(f"{section}.{extra[0]}", "unknown key")


def parse_text(text: str) -> dict:
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        msg = str(exc)
        m = re.search(r"\(at line (\d+), column (\d+)\)", msg)
        if m:
            raise ModelParseError(msg[:m.start()].strip(), int(m.group(1)), int(m.group(2))) from None
        raise ModelParseError(msg) from None


def load_model(path: str) -> ModelFile:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelParseError(f"cannot read {path}: {exc.strerror}") from None
    model = build_model(parse_text(text))
    model.path = path
    return model


def build_model(doc: dict) -> ModelFile:
    """Cross-validate a parsed document and construct the system objects."""
    unknown = sorted(set(doc) - SECTIONS)
    if unknown:
        raise ValidationError(unknown[0], "unknown section")
    space = doc.get("space")
    if not isinstance(space, dict) or "dim" not in space:
        raise ValidationError("space.dim", "missing")
    _keys("space", space, {"dim", "coordinates", "velocities"})
    dim = space["dim"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise ValidationError("space.dim", "must be a positive integer")
    params = doc.get("params", {})
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in params.values()):
        raise ValidationError("params", "parameter values must be numbers")
    for key in ("coordinates", "velocities"):
        names = space.get(key)
        if names is not None and (not isinstance(names, list) or len(names) != dim
                                  or not all(isinstance(n, str) for n in names)):
            raise ValidationError(f"space.{key}", f"expected {dim} names")
    try:
        config = ConfigurationSpace(dim, tuple(space.get("coordinates", ())),
                                    tuple(space.get("velocities", ())),
                                    {k: float(v) for k, v in params.items()})
    except ValueError as exc:
        raise ValidationError("space", str(exc)) from None

    probe = doc.get("probe", {})
    _keys("probe", probe, {"t", "q", "v", "n"})
    box = ProbeBox(*(_range(f"probe.{k}", probe[k]) if k in probe else d
                     for k, d in (("t", (0.0, 1.0)), ("q", (-1.0, 1.0)), ("v", (-1.0, 1.0)))))
    n = probe.get("n", 100)
    if os.environ.get(PROBE_ENV):
        try:
            n = int(os.environ[PROBE_ENV])
        except ValueError:
            raise ValidationError(PROBE_ENV, "must be an integer") from None
    if not isinstance(n, int) or n < 1:
        raise ValidationError("probe.n", "must be a positive integer")
    points = box.sample(dim, n)

    has_l, has_n = "lagrangian" in doc, "newtonian" in doc
    if has_l == has_n:
        raise ValidationError("lagrangian/newtonian", "exactly one dynamics section is required")
    lag = None
    if has_l:
        sec = doc["lagrangian"]
        _keys("lagrangian", sec, {"L"})
        if "L" not in sec:
            raise ValidationError("lagrangian.L", "missing")
        lag = LagrangianSystem(config, _expr(config, "lagrangian.L", sec["L"]))
        metric = mass_metric_from_lagrangian(lag, points)
        system = NewtonianSystem(metric, LagrangeDynamics(lag, metric), lagrangian=lag)
    else:
        sec = doc["newtonian"]
        _keys("newtonian", sec, {"metric", "xi"})
        for key in ("metric", "xi"):
            if key not in sec:
                raise ValidationError(f"newtonian.{key}", "missing")
        entries = _matrix(config, "newtonian.metric", sec["metric"], dim, dim)
        metric = ExpressionMetric(config, entries)
        metric.riemannian = all(linalg.is_positive_definite(metric(x)) for x in points)
        xi = ExpressionDynamics(config, _vector(config, "newtonian.xi", sec["xi"], dim))
        system = NewtonianSystem(metric, xi)

    frame = None
    if "frame" in doc:
        _keys("frame", doc["frame"], {"gamma"})
        frame = ReferenceFrame(config, _vector(config, "frame.gamma", doc["frame"].get("gamma"), dim))

    force = force_report = None
    if "force" in doc:
        _keys("force", doc["force"], {"F"})
        force = ExternalForce(config, _vector(config, "force.F", doc["force"].get("F"), dim))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            system, force_report = apply_external_force(system, force, points)

    cod = kind = spec = None
    if "constraint" in doc:
        cod, kind, spec = _constraint(config, doc["constraint"], points)

    x0 = None
    init = doc.get("initial")
    if init is not None:
        _keys("initial", init, {"t", "q", "v"})
        t0 = init.get("t", 0.0)
        if not isinstance(t0, (int, float)) or isinstance(t0, bool):
            raise ValidationError("initial.t", "must be a number")
        q0 = _floats("initial.q", init.get("q", [0.0] * dim), dim)
        v0 = _floats("initial.v", init.get("v", [0.0] * dim), dim)
        x0 = JetPoint(float(t0), q0, v0)

    return ModelFile(None, config, system, lag, cod, kind, spec, frame, force, force_report,
                     box, n, x0)


def _constraint(config, sec: dict, points):
    kind = sec.get("kind")
    if kind not in KINDS:
        raise ValidationError("constraint.kind", f"must be one of {', '.join(KINDS)}")
    dim = config.dim
    if kind == "forms":
        _keys("constraint", sec, {"kind", "s0", "s", "sdot"})
        s0 = sec.get("s0")
        if not isinstance(s0, list):
            raise ValidationError("constraint.s0", "expected a list")
        k = len(s0)
        s0e = [_expr(config, f"constraint.s0[{a}]", e) for a, e in enumerate(s0)]
        s = _matrix(config, "constraint.s", sec.get("s"), k, dim)
        sd = _matrix(config, "constraint.sdot", sec.get("sdot"), k, dim)
        forms = [ConstraintOneForm(s0e[a], s[a], sd[a]) for a in range(k)]
        return from_forms(config, forms, points), kind, forms
    if kind == "submanifold":
        _keys("constraint", sec, {"kind", "f"})
        fs = sec.get("f")
        if not isinstance(fs, list) or not fs:
            raise ValidationError("constraint.f", "expected a non-empty list")
        exprs = [_expr(config, f"constraint.f[{a}]", e) for a, e in enumerate(fs)]
        return from_submanifold(config, exprs, points), kind, exprs
    if kind == "linear":
        _keys("constraint", sec, {"kind", "f0", "fi"})
        f0 = sec.get("f0")
        if not isinstance(f0, list) or not f0:
            raise ValidationError("constraint.f0", "expected a non-empty list")
        f0e = [_expr(config, f"constraint.f0[{a}]", e) for a, e in enumerate(f0)]
        fi = _matrix(config, "constraint.fi", sec.get("fi"), len(f0), dim)
        spec = LinearConstraintSpec(config, f0e, fi)
        return from_linear(spec, points), kind, spec
    _keys("constraint", sec, {"kind", "base", "fiber", "B", "Br"})
    names = list(config.coordinates)
    idx = {}
    for key in ("base", "fiber"):
        val = sec.get(key)
        if not isinstance(val, list) or not all(isinstance(v, str) for v in val):
            raise ValidationError(f"constraint.{key}", "expected a list of coordinate names")
        for v in val:
            if v not in names:
                raise ValidationError(f"constraint.{key}", f"unknown coordinate {v!r}")
        idx[key] = [names.index(v) for v in val]
    B = _vector(config, "constraint.B", sec.get("B"), len(idx["fiber"]))
    Br = _matrix(config, "constraint.Br", sec.get("Br"), len(idx["fiber"]), len(idx["base"]))
    spec = CompositeConstraintSpec(config, idx["base"], idx["fiber"], B, Br)
    return from_composite(spec), kind, spec


def parse_state(text: str, model: ModelFile) -> JetPoint:
    """Override the initial state from ``"x=1, vy=0.5, t=0"`` style assignments."""
    base = model.x0 or JetPoint(0.0, np.zeros(model.dim), np.zeros(model.dim))
    t, q, v = base.t, base.q.copy(), base.v.copy()
    cfg = model.config
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise ValidationError("--state", f"expected name=value, got {part!r}")
        name, val = (s.strip() for s in part.split("=", 1))
        try:
            num = float(val)
        except ValueError:
            raise ValidationError("--state", f"{name}: {val!r} is not a number") from None
        if name == "t":
            t = num
        elif name in cfg.coordinates:
            q[cfg.coordinates.index(name)] = num
        elif name in cfg.velocities:
            v[cfg.velocities.index(name)] = num
        else:
            raise ValidationError("--state", f"unknown variable {name!r}")
    return JetPoint(t, q, v)
