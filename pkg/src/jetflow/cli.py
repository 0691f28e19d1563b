"""Command line: validate, simulate, check, hamsim, jacobi, energy.

Exit codes: 0 success, 1 a check failed (report still written), 2 input
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import sys
import warnings
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .bundle import JetPoint, PhasePoint, ReferenceFrame
from .constraint import admissibility_report, verify_constraint_frame
from .dynamics import check_compatibility, check_metric_symmetry, energy_balance_residual
from .errors import InputError, NumericalError, ValidationError
from .hamilton import (ConstrainedHamiltonField, HamiltonField, HamiltonianSide,
                       hamiltonian_value, inverse_legendre, legendre, pullback_residual)
from .integrate import (IntegratorConfig, Trajectory, integrate_first_order,
                        integrate_second_order)
from .model import ModelFile, load_model, parse_state
from .projection import (COMPAT_TOL, GAUSS_TOL, ORTHO_TOL, ConstrainedDynamics,
                         compatibility_residual, least_norm_certificate, multiplier_oracle,
                         orthogonality_residual)
from .report import CheckReport
from .vertical import analytic_vertical_field, vertical_lift

COMMANDS = ("validate", "simulate", "check", "hamsim", "jacobi", "energy")
ORACLE_TOL = 1e-9
ROUNDTRIP_TOL = 1e-9
IDENTITY_TOL = 1e-10
JACOBI_EPS = 1e-4


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(out: io.TextIOBase, traj: Trajectory, extra: dict[str, np.ndarray] | None = None):
    cols = [("t", traj.t)]
    cols += [(n, traj.states[:, i]) for i, n in enumerate(traj.names)]
    mons = dict(traj.monitors)
    mons.update(extra or {})
    cols += [(f"mon_{k}", v) for k, v in sorted(mons.items())]
    out.write(",".join(name for name, _ in cols) + "\n")
    for row in range(len(traj.t)):
        out.write(",".join(fmt(c[row]) for _, c in cols) + "\n")
    return [name for name, _ in cols]


def gnuplot_script(csv_path: str, columns: Sequence[str]) -> str:
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set xlabel 't'",
             f"plot for [i=2:{len(columns)}] '{csv_path}' using 1:i with lines"]
    return "\n".join(lines) + "\n"


class Run:
    """Collects report lines and the overall verdict for one command."""

    def __init__(self):
        self.lines: list[str] = []
        self.failed = False

    def add(self, rep: CheckReport):
        self.lines.append(rep.line())
        if not rep.passed:
            self.failed = True
            if rep.witness is not None:
                self.lines.append(f"  witness: {_point_text(rep.witness)}")

    def note(self, text: str):
        self.lines.append(text)


def _point_text(x) -> str:
    if isinstance(x, JetPoint):
        return (f"t={fmt(x.t)} q=[{', '.join(fmt(a) for a in x.q)}] "
                f"v=[{', '.join(fmt(a) for a in x.v)}]")
    if isinstance(x, PhasePoint):
        return (f"t={fmt(x.t)} q=[{', '.join(fmt(a) for a in x.q)}] "
                f"p=[{', '.join(fmt(a) for a in x.p)}]")
    return repr(x)


def _fold(name: str, tol: float, items) -> CheckReport:
    rep = CheckReport(name, 0.0, tol)
    for value, x in items:
        if not value <= rep.value:
            rep.value, rep.witness = float(value), x
    rep.passed = rep.value <= tol
    return rep


def _constrained(model: ModelFile) -> ConstrainedDynamics | None:
    return ConstrainedDynamics(model.system, model.constraint) if model.constraint else None


def _need_lagrangian(model: ModelFile, command: str):
    if model.lagrangian is None:
        raise ValidationError("lagrangian", f"{command} needs a model with a [lagrangian] section")


# -- commands -------------------------------------------------------------------

def cmd_validate(model: ModelFile, args) -> Run:
    run = Run()
    pts = model.probe_points(args.seed)
    run.note(f"validate {model.path} (dim {model.dim}, {len(pts)} probe points, seed {args.seed})")
    run.add(check_metric_symmetry(model.system.metric, pts))
    run.add(check_compatibility(model.system, pts))
    run.note(f"INFO metric positive definite at probe points: {model.system.metric.riemannian}")
    if model.force_report is not None:
        run.add(model.force_report)
    if model.constraint is not None:
        cod = model.constraint
        worst = min(((admissibility_report(cod, x)[0], x) for x in pts), key=lambda r: r[0])
        rep = CheckReport(f"admissibility rank deficit (n={cod.n})", float(cod.n - worst[0]), 0.0,
                          witness=worst[1])
        run.add(rep)
    if model.frame is not None:
        rep = CheckReport("frame velocity dependence", model.frame.check_velocity_independent(pts),
                          0.0)
        run.add(rep)
        if model.constraint_kind == "linear":
            run.add(verify_constraint_frame(model.constraint_spec, model.frame, pts))
    return run


def cmd_check(model: ModelFile, args) -> Run:
    run = Run()
    pts = model.probe_points(args.seed)
    run.note(f"check {model.path} (dim {model.dim}, {len(pts)} points, seed {args.seed}, "
             f"{args.trials} kernel samples per point)")
    cd = _constrained(model)
    if cd is not None:
        run.add(_fold("compatibility max|s(xi~)|", COMPAT_TOL,
                      ((compatibility_residual(cd, x), x) for x in pts)))
        run.add(_fold("orthogonality max|m(r,w)|", ORTHO_TOL,
                      ((orthogonality_residual(cd, x), x) for x in pts)))
        certs = [(least_norm_certificate(cd, x, args.trials, seed=args.seed + k), x)
                 for k, x in enumerate(pts)]
        rep = _fold("least-norm Pythagoras residual", GAUSS_TOL, ((c.value, x) for c, x in certs))
        below = sum(c.detail.get("violations", 0) for c, _ in certs)
        rep.passed = rep.passed and below == 0
        run.add(rep)
        run.note(f"INFO compatible samples with smaller Gauss value: {below}")
        run.add(_fold("oracle equivalence max|xi~ - KKT|", ORACLE_TOL,
                      ((float(np.max(np.abs(cd(x) - multiplier_oracle(model.system, cd.cod, x)))), x)
                       for x in pts)))
    if model.lagrangian is not None and model.force is None:
        hs = HamiltonianSide(model.lagrangian, model.system.metric)
        items = []
        for x in pts:
            y, _ = legendre(hs, x)
            items.append((float(np.max(np.abs(inverse_legendre(hs, y).v - x.v))), x))
        run.add(_fold("Legendre roundtrip max|v - v(p(v))|", ROUNDTRIP_TOL, items))
        if cd is not None:
            field = ConstrainedHamiltonField(hs, cd.cod)
            mt, bg, rc = [], [], []
            for x in pts:
                y, _ = legendre(hs, x)
                d = cd.decompose(x)
                c = field.constrained_data(y)
                mt.append((float(np.max(np.abs(c.Mtilde - d.mtilde))), y))
                bg.append((float(np.max(np.abs(c.beta_of_gamma - d.s_of_xi))), y))
                rc.append((float(np.max(np.abs(c.reaction - d.force))), y))
            run.add(_fold("reduced metric max|Mt - mt o H|", IDENTITY_TOL, mt))
            run.add(_fold("pullback max|beta(gamma_H) - s(xi_L) o H|", IDENTITY_TOL, bg))
            run.add(_fold("reaction covector max|R - F o H|", IDENTITY_TOL, rc))
    elif model.lagrangian is not None:
        run.note("INFO Hamiltonian identities skipped: model has an external force")
    return run


def _config(args) -> IntegratorConfig:
    try:
        return IntegratorConfig(args.t0, args.t1, args.dt)
    except ValueError as exc:
        raise ValidationError("--t0/--t1/--dt", str(exc)) from None


def _x0(model: ModelFile, args) -> JetPoint:
    if args.state:
        return parse_state(args.state, model)
    if model.x0 is None:
        raise ValidationError("initial", "no [initial] section and no --state given")
    return model.x0


def cmd_simulate(model: ModelFile, args, out) -> Run:
    run = Run()
    dyn = _constrained(model) or model.system
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        traj = integrate_second_order(dyn, _x0(model, args), _config(args), frame=model.frame)
    for w in caught:
        run.note(f"WARNING {w.message}")
    cols = write_csv(out, traj)
    run.columns = cols
    if "compat" in traj.monitors:
        run.add(CheckReport("monitor max|s(xi~)|", float(np.max(traj.monitors["compat"])),
                            COMPAT_TOL))
    if "constraint" in traj.monitors:
        run.note(f"INFO constraint drift max|f| = {np.max(traj.monitors['constraint']):.6e}")
    return run


def _hamiltonian_field(model: ModelFile):
    hs = HamiltonianSide(model.lagrangian, model.system.metric)
    if model.constraint is not None:
        if not model.system.metric.riemannian:
            raise ValidationError("lagrangian", "constrained Hamilton field needs a positive "
                                  "definite metric")
        return hs, ConstrainedHamiltonField(hs, model.constraint)
    return hs, HamiltonField(hs)


def cmd_hamsim(model: ModelFile, args, out) -> Run:
    _need_lagrangian(model, "hamsim")
    if model.force is not None:
        raise ValidationError("force", "hamsim does not support external forces")
    run = Run()
    hs, field = _hamiltonian_field(model)
    y0, _ = legendre(hs, _x0(model, args))
    m = model.dim
    mons: dict[str, Callable] = {"hamiltonian": lambda t, y: hamiltonian_value(
        hs, PhasePoint(t, y[:m], y[m:]), field._seed)}
    if isinstance(field, ConstrainedHamiltonField):
        mons["pullback"] = lambda t, y: pullback_residual(field, PhasePoint(t, y[:m], y[m:]))
    names = list(model.config.coordinates) + [f"p_{c}" for c in model.config.coordinates]
    traj = integrate_first_order(field, np.concatenate([y0.q, y0.p]), _config(args), names, mons)
    run.columns = write_csv(out, traj)
    if "pullback" in traj.monitors:
        run.add(CheckReport("monitor max|beta(gamma~)|", float(np.max(traj.monitors["pullback"])),
                            COMPAT_TOL))
    return run


def _perturbation(text: str | None, model: ModelFile) -> np.ndarray:
    m = model.dim
    delta = np.zeros(2 * m)
    if not text:
        delta[0] = 1.0
        return delta
    cfg = model.config
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, _, val = part.partition("=")
        name = name.strip()
        try:
            num = float(val)
        except ValueError:
            raise ValidationError("--perturb", f"{part!r} is not name=number") from None
        if name.startswith("d") and name[1:] in cfg.coordinates:
            delta[cfg.coordinates.index(name[1:])] = num
        elif name.startswith("dp_") and name[3:] in cfg.coordinates:
            delta[m + cfg.coordinates.index(name[3:])] = num
        else:
            raise ValidationError("--perturb", f"unknown component {name!r} "
                                  "(use d<coordinate> or dp_<coordinate>)")
    return delta


def cmd_jacobi(model: ModelFile, args, out) -> Run:
    _need_lagrangian(model, "jacobi")
    if model.force is not None:
        raise ValidationError("force", "jacobi does not support external forces")
    run = Run()
    hs, field = _hamiltonian_field(model)
    cfg = _config(args)
    y0p, _ = legendre(hs, _x0(model, args))
    y0 = np.concatenate([y0p.q, y0p.p])
    delta = _perturbation(args.perturb, model)
    vfield = vertical_lift(field) if model.constraint is not None else analytic_vertical_field(hs)
    m = model.dim
    cols = model.config.coordinates
    names = (list(cols) + [f"p_{c}" for c in cols] + [f"d{c}" for c in cols]
             + [f"dp_{c}" for c in cols])
    jt = integrate_first_order(vfield, np.concatenate([y0, delta]), cfg, names)
    _, f2 = _hamiltonian_field(model)
    pert = integrate_first_order(f2, y0 + JACOBI_EPS * delta, cfg)
    fd = (pert.states - jt.states[:, :2 * m]) / JACOBI_EPS
    err = np.max(np.abs(fd - jt.states[:, 2 * m:]), axis=1)
    run.columns = write_csv(out, jt, {"fd_error": err})
    rep = CheckReport(f"Jacobi field vs finite difference (eps {JACOBI_EPS:g})",
                      float(np.max(err)), 10 * JACOBI_EPS)
    if model.constraint is None:
        run.add(rep)
    else:
        # the lift transposes the partials of the base field, which is the
        # linearised flow only when the base field is Hamiltonian
        run.note(f"INFO {rep.name}: {rep.value:.6e} (not a Jacobi field: the constrained "
                 "field is not Hamiltonian)")
    return run


def cmd_energy(model: ModelFile, args, out) -> Run:
    _need_lagrangian(model, "energy")
    run = Run()
    frame = model.frame or ReferenceFrame.zero(model.config)
    if model.frame is None:
        run.note("INFO no [frame] section: using the zero frame")
    dyn = _constrained(model) or model.system
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        traj = integrate_second_order(dyn, _x0(model, args), _config(args), frame=frame)
    for w in caught:
        run.note(f"WARNING {w.message}")
    keep = {k: traj.monitors[k] for k in ("energy", "energy_balance", "reaction_power")
            if k in traj.monitors}
    slim = Trajectory(traj.t, traj.states[:, :0], [], keep)
    run.columns = write_csv(out, slim)
    run.add(CheckReport("energy balance max|residual|",
                        float(np.max(np.abs(traj.monitors["energy_balance"]))), 1e-8))
    if "reaction_power" in traj.monitors:
        p = float(np.max(np.abs(traj.monitors["reaction_power"])))
        if model.constraint_kind == "linear" and model.frame is not None:
            run.add(CheckReport("reaction power in constraint frame", p, 1e-9))
        else:
            run.note(f"INFO max|reaction power| = {p:.6e}")
    return run


# -- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jetflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"jetflow {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("model", help="model file (TOML)")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--state", help='initial state override, e.g. "x=0.1, vx=1"')
    p.add_argument("--perturb", help='jacobi initial perturbation, e.g. "dx=1, dp_y=0.5"')
    p.add_argument("--seed", type=int, default=0, help="seed for probe points (SplitMix64)")
    p.add_argument("--trials", type=int, default=1000,
                   help="kernel samples per point in the least-norm certificate")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--gnuplot", action="store_true",
                   help="also write <out>.gp plotting every CSV column against t")
    return p


def main(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.gnuplot and not args.out:
        print("error: --gnuplot needs --out", file=stderr)
        return 2
    if args.trials < 0:
        print("error: --trials must be non-negative", file=stderr)
        return 2
    buf = io.StringIO()
    try:
        model = load_model(args.model)
        if args.command == "validate":
            run = cmd_validate(model, args)
        elif args.command == "check":
            run = cmd_check(model, args)
        else:
            handler = {"simulate": cmd_simulate, "hamsim": cmd_hamsim, "jacobi": cmd_jacobi,
                       "energy": cmd_energy}[args.command]
            run = handler(model, args, buf)
    except InputError as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return 3
    verdict = "FAIL" if run.failed else "OK"
    report = "\n".join(run.lines + [verdict]) + "\n"
    if args.command in ("validate", "check"):
        _emit(args.out, report, stdout)
    else:
        _emit(args.out, buf.getvalue(), stdout)
        stderr.write(report)
        if args.gnuplot:
            with open(args.out + ".gp", "w", encoding="utf-8") as fh:
                fh.write(gnuplot_script(args.out, run.columns))
    return 1 if run.failed else 0


def _emit(path: str | None, text: str, stdout):
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        stdout.write(text)


if __name__ == "__main__":
    sys.exit(main())
