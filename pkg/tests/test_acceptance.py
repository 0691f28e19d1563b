"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from jetflow import corpus
from jetflow.bundle import JetPoint, PhasePoint, VerticalPhasePoint
from jetflow.expr import Expr, VariableSpace, finite_difference_partials
from jetflow.hamilton import ConstrainedHamiltonField, HamiltonField, HamiltonianSide, legendre
from jetflow.integrate import (IntegratorConfig, compare_trajectories, integrate_first_order,
                               integrate_second_order, time_derivatives)
from jetflow.projection import (compatibility_residual, constrain, gauss_value,
                                least_norm_certificate, multiplier_oracle, orthogonality_residual)
from jetflow.rng import SplitMix64
from jetflow.vertical import analytic_vertical_field, trajectory_lagrangian_LH, vertical_lift

MODELS = Path(__file__).resolve().parent.parent / "models"


def fmt(value, tol):
    return f"{value:.3e} (tol {tol:g})"


@pytest.fixture(scope="module")
def sweep():
    """The 100 random (system, constraint, point) triples, timed from construction."""
    start = time.perf_counter()
    triples = corpus.random_triples(100, seed=0)
    compat, ortho = [], []
    for tp in triples:
        cd = constrain(tp.fixture.system, tp.fixture.constraint)
        compat.append(compatibility_residual(cd, tp.point))
        ortho.append(orthogonality_residual(cd, tp.point))
    return triples, np.array(compat), np.array(ortho), time.perf_counter() - start


def test_c01_compatibility(sweep, criterion):
    _, compat, _, elapsed = sweep
    ok = compat.max() <= 1e-10 and elapsed < 5.0
    assert criterion(1, "compatibility on 100 random triples", ok,
                     f"max|s(xi~)| = {fmt(compat.max(), 1e-10)}, {elapsed:.2f} s (limit 5 s)")


def test_c02_orthogonality(sweep, criterion):
    _, _, ortho, _ = sweep
    ok = ortho.max() <= 1e-10
    assert criterion(2, "ideality (orthogonality)", ok, f"max|m(r,w)| = {fmt(ortho.max(), 1e-10)}")


def test_c03_gauss_least_norm(sweep, criterion):
    triples = sweep[0]
    fx = corpus.constant_speed()
    points = [(constrain(tp.fixture.system, tp.fixture.constraint), tp.point) for tp in triples]
    points.append((constrain(fx.system, fx.constraint), fx.x0))
    worst, below = 0.0, 0
    for k, (cd, x) in enumerate(points):
        rep = least_norm_certificate(cd, x, 1000, seed=k)
        worst = max(worst, rep.value)
        below += rep.detail.get("violations", 0)
    ok = worst <= 1e-9 and below == 0
    assert criterion(3, "Gauss least-norm (1000 kernel vectors per point)", ok,
                     f"Pythagoras residual {fmt(worst, 1e-9)}, smaller-G samples {below}")


def test_c04_oracle_equivalence(sweep, criterion):
    worst = 0.0
    for tp in sweep[0]:
        cd = constrain(tp.fixture.system, tp.fixture.constraint)
        worst = max(worst, np.max(np.abs(cd(tp.point) - multiplier_oracle(
            tp.fixture.system, tp.fixture.constraint, tp.point))))
    for fx in corpus.constrained_fixtures():
        cd = constrain(fx.system, fx.constraint)
        for x in fx.box.sample(fx.config.dim, 50, seed=4):
            worst = max(worst, np.max(np.abs(cd(x) - multiplier_oracle(fx.system, fx.constraint, x))))
    ok = worst <= 1e-9
    assert criterion(4, "projection vs multiplier oracle", ok, f"max deviation {fmt(worst, 1e-9)}")


def test_c05_closed_form(criterion):
    fx = corpus.constant_speed()
    x = JetPoint(0.0, [0.0, 0.0], [0.6, 0.8])
    xt = constrain(fx.system, fx.constraint)(x)
    G = gauss_value(fx.system, x, xt)
    dx = float(np.max(np.abs(xt - [4.704, -3.528])))
    dg = abs(G - 61.465984)
    ok = dx <= 1e-12 and dg <= 1e-12
    assert criterion(5, "constant-speed closed form", ok,
                     f"|xi~ - (4.704, -3.528)| = {fmt(dx, 1e-12)}; G = {G!r}, "
                     f"|G - 61.465984| = {fmt(dg, 1e-12)}")


def test_c06_energy_knife_edge(criterion):
    fx = corpus.knife_edge()
    cd = constrain(fx.system, fx.constraint)
    cfg = IntegratorConfig(0.0, 5.0, 1e-3)
    integrate_second_order(cd, fx.x0, IntegratorConfig(0.0, 0.01, 1e-3), frame=fx.frame)
    start = time.perf_counter()
    traj = integrate_second_order(cd, fx.x0, cfg, frame=fx.frame)
    elapsed = time.perf_counter() - start
    power = float(np.max(np.abs(traj.monitors["reaction_power"])))
    balance = float(np.max(np.abs(traj.monitors["energy_balance"])))
    ok = power <= 1e-9 and balance <= 1e-8 and elapsed < 2.0
    assert criterion(6, "knife-edge energy balance in its constraint frame", ok,
                     f"reaction power {fmt(power, 1e-9)}, balance {fmt(balance, 1e-8)}, "
                     f"{elapsed:.2f} s (limit 2 s)")


def _lagrange_vs_hamilton(fx, dt):
    hs = HamiltonianSide(fx.lagrangian, fx.system.metric)
    cfg = IntegratorConfig(0.0, 1.0, dt)
    m = fx.config.dim
    lt = integrate_second_order(constrain(fx.system, fx.constraint), fx.x0, cfg, monitors=False)
    y0, _ = legendre(hs, fx.x0)
    ht = integrate_first_order(ConstrainedHamiltonField(hs, fx.constraint),
                               np.concatenate([y0.q, y0.p]), cfg)

    def to_phase(t, y):
        p, _ = legendre(hs, JetPoint(t, y[:m], y[m:]))
        return np.concatenate([p.q, p.p])

    return compare_trajectories(ht, lt, to_phase).max


def test_c07_legendre_equivalence(criterion):
    # metrics depending on the state, so the two flows differ at truncation order
    systems = [corpus.chaplygin_sleigh(), corpus.nonlinear_legendre(), corpus.random_fixture(3)]
    parts, ok = [], True
    for fx in systems:
        fine = _lagrange_vs_hamilton(fx, 1e-3)
        ratio = _lagrange_vs_hamilton(fx, 0.05) / _lagrange_vs_hamilton(fx, 0.025)
        ok &= fine <= 1e-6 and 8.0 <= ratio <= 32.0
        parts.append(f"{fx.name}: {fmt(fine, 1e-6)}, halving ratio {ratio:.2f} (16 within 2x)")
    assert criterion(7, "Lagrangian vs Hamiltonian constrained flow", ok, "; ".join(parts))


def test_c08_phase_identities(criterion):
    worst = [0.0, 0.0, 0.0]
    count = 0
    for fx in corpus.constrained_fixtures():
        hs = HamiltonianSide(fx.lagrangian, fx.system.metric)
        cd = constrain(fx.system, fx.constraint)
        field = ConstrainedHamiltonField(hs, fx.constraint)
        for x in fx.box.sample(fx.config.dim, 100, seed=8):
            y, _ = legendre(hs, x)
            d, c = cd.decompose(x), field.constrained_data(y)
            for k, diff in enumerate((c.Mtilde - d.mtilde, c.beta_of_gamma - d.s_of_xi,
                                      c.reaction - d.force)):
                worst[k] = max(worst[k], float(np.max(np.abs(diff))))
            count += 1
    ok = max(worst) <= 1e-10
    assert criterion(8, f"phase-space identities ({count} points)", ok,
                     f"Mt {fmt(worst[0], 1e-10)}, beta(gamma_H) {fmt(worst[1], 1e-10)}, "
                     f"reaction {fmt(worst[2], 1e-10)}")


def test_c09_jacobi_fields(criterion):
    fx = corpus.harmonic_oscillator()
    hs = HamiltonianSide(fx.lagrangian, fx.system.metric)
    cfg = IntegratorConfig(0.0, 1.0, 1e-3)
    eps = 1e-4
    y0 = np.array([1.0, 0.0])
    delta = np.array([0.3, -0.7])
    base = integrate_first_order(HamiltonField(hs), y0, cfg)
    pert = integrate_first_order(HamiltonField(hs), y0 + eps * delta, cfg)
    fd = (pert.states - base.states) / eps
    errs = []
    for vf in (analytic_vertical_field(hs), vertical_lift(HamiltonField(hs))):
        jac = integrate_first_order(vf, np.concatenate([y0, delta]), cfg)
        errs.append(float(np.max(np.abs(fd - jac.states[:, 2:]))))
    ok = max(errs) <= 10 * eps
    assert criterion(9, "Jacobi field vs finite-difference perturbation", ok,
                     f"analytic {fmt(errs[0], 10 * eps)}, lifted {fmt(errs[1], 10 * eps)}")


def test_c10_trajectory_lagrangian(criterion):
    worst, names = 0.0, []
    rng = SplitMix64(10)
    for fx in corpus.fixtures():
        hs = HamiltonianSide(fx.lagrangian, fx.system.metric)
        m = fx.config.dim
        cod = fx.constraint
        field = ConstrainedHamiltonField(hs, cod) if cod is not None else HamiltonField(hs)
        y0, _ = legendre(hs, fx.x0)
        traj = integrate_first_order(field, np.concatenate([y0.q, y0.p]),
                                     IntegratorConfig(0.0, 1.0, 1e-3))
        dy = time_derivatives(traj, order=8)
        for i in range(0, len(traj.t), 5):
            y = traj.states[i]
            z = VerticalPhasePoint(PhasePoint(traj.t[i], y[:m], y[m:]),
                                   rng.normals(m), rng.normals(m))
            lh = trajectory_lagrangian_LH(hs, z, dy[i, :m], dy[i, m:], cod=cod)
            worst = max(worst, abs(lh))
        names.append(fx.name)
    ok = worst <= 1e-8
    assert criterion(10, f"L_H on shell ({len(names)} corpus trajectories)", ok,
                     f"max|L_H| = {fmt(worst, 1e-8)}")


def test_c11_ad_vs_fd(criterion):
    space = VariableSpace.jet(2)
    names = list(space.names)
    rng = SplitMix64(11)
    worst = 0.0
    for _ in range(100):
        e = Expr.parse(corpus.random_expression_text(rng, names, depth=4), space)
        x = [rng.uniform(-1, 1) for _ in names]
        ad = e.partials(x)
        g = finite_difference_partials(e, x, 1e-5).gradient
        h = finite_difference_partials(e, x, 1e-4).hessian
        worst = max(worst,
                    float(np.max(np.abs(ad.gradient - g))) / max(1.0, np.max(np.abs(ad.gradient))),
                    float(np.max(np.abs(ad.hessian - h))) / max(1.0, np.max(np.abs(ad.hessian))))
    ok = worst <= 1e-6
    assert criterion(11, "AD vs central differences (100 random expressions)", ok,
                     f"max relative deviation {fmt(worst, 1e-6)}")


def test_c12_deterministic_check(criterion):
    outputs = []
    for model in ("constant_speed.toml", "knife_edge.toml"):
        runs = [subprocess.run([sys.executable, "-m", "jetflow.cli", "check", str(MODELS / model),
                                "--seed", "42"], capture_output=True).stdout for _ in range(2)]
        outputs.append(runs[0] == runs[1] and len(runs[0]) > 0)
    ok = all(outputs)
    assert criterion(12, "check --seed 42 byte-identical across runs", ok,
                     f"identical reports for {sum(outputs)}/2 models")
