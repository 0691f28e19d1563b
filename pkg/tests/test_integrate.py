import math
import warnings

import numpy as np
import pytest

from jetflow import corpus
from jetflow.bundle import ConfigurationSpace, JetPoint
from jetflow.constraint import ConstraintOneForm, from_forms, from_submanifold
from jetflow.dynamics import ExpressionDynamics
from jetflow.errors import GridMismatch, NonFinite, OffConstraint, RankDropped
from jetflow.hamilton import ConstrainedHamiltonField, HamiltonField, HamiltonianSide, legendre
from jetflow.integrate import (IntegratorConfig, Trajectory, compare_trajectories, fd_weights,
                               integrate_first_order, integrate_second_order, time_derivatives)
from jetflow.projection import constrain

C1 = ConfigurationSpace(1)
C2 = ConfigurationSpace(2)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(1, 0, 0.1)
    with pytest.raises(ValueError):
        IntegratorConfig(0, 1, 0)
    with pytest.raises(ValueError):
        IntegratorConfig(0, 1, 0.1, method="euler")
    ts = IntegratorConfig(0, 1, 0.3).grid()
    assert len(ts) == 5 and ts[-1] == 1.0
    assert len(IntegratorConfig(0, 1, 0.1).grid()) == 11


def test_free_particle_exact():
    fx = corpus.free_particle(2)
    traj = integrate_second_order(fx.system, fx.x0, IntegratorConfig(0, 1, 1e-2))
    assert np.allclose(traj.states[-1, :2], [1, 0], rtol=0, atol=1e-14)
    assert traj.names == ["q1", "q2", "v1", "v2"]
    assert np.max(np.abs(traj.monitors["energy_balance"])) <= 1e-15


def test_constant_speed_conserved():
    fx = corpus.constant_speed()
    cd = constrain(fx.system, fx.constraint)
    traj = integrate_second_order(cd, fx.x0, IntegratorConfig(0, 10, 1e-3))
    speed = np.hypot(traj.column("v1"), traj.column("v2"))
    assert np.max(np.abs(speed - 1)) <= 1e-8
    assert np.max(traj.monitors["constraint"]) <= 1e-8


def test_oscillator_period():
    fx = corpus.harmonic_oscillator()
    traj = integrate_second_order(fx.system, fx.x0, IntegratorConfig(0, 2 * math.pi, 1e-3))
    assert np.max(np.abs(traj.states[-1] - [1, 0])) <= 1e-10


def test_first_order_free_and_oscillator():
    free = corpus.free_particle(1)
    hs = HamiltonianSide(free.lagrangian, free.system.metric)
    traj = integrate_first_order(HamiltonField(hs), [0.5, 1.0], IntegratorConfig(0, 1, 0.1))
    assert np.allclose(traj.states[:, 0], 0.5 + traj.t, rtol=0, atol=1e-14)
    ho = corpus.harmonic_oscillator()
    hs = HamiltonianSide(ho.lagrangian, ho.system.metric)
    traj = integrate_first_order(HamiltonField(hs), [1.0, 0.0], IntegratorConfig(0, 2 * math.pi, 1e-3))
    assert np.max(np.abs(traj.states[-1] - [1, 0])) <= 1e-10


def test_frozen_momentum_flow():
    fx = corpus.frozen_vertical()
    hs = HamiltonianSide(fx.lagrangian, fx.system.metric)
    field = ConstrainedHamiltonField(hs, fx.constraint)
    traj = integrate_first_order(field, [0, 0, 0.7, 0], IntegratorConfig(0, 1, 1e-2))
    assert np.max(np.abs(traj.states[:, 3])) <= 1e-10


def test_off_constraint_rejected():
    fx = corpus.constant_speed()
    cd = constrain(fx.system, fx.constraint)
    with pytest.raises(OffConstraint) as err:
        integrate_second_order(cd, JetPoint(0, [0, 0], [0.7, 0.8]), IntegratorConfig(0, 1, 0.1))
    assert err.value.residual == pytest.approx(0.13)
    assert "|f|" in str(err.value)


def test_raw_forms_warn():
    fx = corpus.gravity_particle()
    form = ConstraintOneForm.from_text(C2, "0", ["0", "0"], ["0", "1"])
    cd = constrain(fx.system, from_forms(C2, [form], [fx.x0]))
    with pytest.warns(RuntimeWarning):
        traj = integrate_second_order(cd, fx.x0, IntegratorConfig(0, 0.1, 0.05))
    assert "constraint" not in traj.monitors and "compat" in traj.monitors


def test_rank_drop_stops():
    fx = corpus.free_particle(2)
    pts = [JetPoint(0, [-0.5, 0], [1, 0])]
    cd = constrain(fx.system, from_submanifold(C2, ["q1*(v1 - 1)"], pts))
    with pytest.raises(RankDropped) as err:
        integrate_second_order(cd, pts[0], IntegratorConfig(0, 1, 1e-3))
    assert err.value.t <= 0.5 + 1e-9


def test_non_finite_stops():
    xi = ExpressionDynamics(C1, ["q1^3"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(NonFinite):
            integrate_second_order(xi, JetPoint(0, [1], [1]), IntegratorConfig(0, 10, 1e-2))


def test_compare_trajectories():
    fx = corpus.harmonic_oscillator()
    a = integrate_second_order(fx.system, fx.x0, IntegratorConfig(0, 1, 0.1))
    assert compare_trajectories(a, a).max == 0.0
    b = integrate_second_order(fx.system, fx.x0, IntegratorConfig(0, 1, 0.05))
    with pytest.raises(GridMismatch):
        compare_trajectories(a, b)


def test_lagrange_vs_hamilton_knife_edge():
    fx = corpus.knife_edge()
    hs = HamiltonianSide(fx.lagrangian, fx.system.metric)
    cfg = IntegratorConfig(0, 1, 1e-3)
    lt = integrate_second_order(constrain(fx.system, fx.constraint), fx.x0, cfg, monitors=False)
    y0, _ = legendre(hs, fx.x0)
    ht = integrate_first_order(ConstrainedHamiltonField(hs, fx.constraint),
                               np.concatenate([y0.q, y0.p]), cfg)

    def to_phase(t, y):
        p, _ = legendre(hs, JetPoint(t, y[:3], y[3:]))
        return np.concatenate([p.q, p.p])

    assert compare_trajectories(ht, lt, to_phase).max <= 1e-6


def test_fd_weights():
    assert np.allclose(fd_weights([-1, 0, 1]), [-0.5, 0, 0.5])
    assert np.allclose(fd_weights([0, 1, 2]), [-1.5, 2, -0.5])


def test_time_derivatives_polynomial():
    t = np.linspace(0, 1, 41)
    y = np.stack([t**3, np.sin(t)], axis=1)
    traj = Trajectory(t, y, ["a", "b"])
    d = time_derivatives(traj, 4)
    assert np.allclose(d[:, 0], 3 * t**2, atol=1e-12)
    assert np.allclose(time_derivatives(traj, 8)[:, 1], np.cos(t), atol=1e-11)
    with pytest.raises(ValueError):
        time_derivatives(traj, 3)
    bad = Trajectory(np.r_[t, 1.01], np.vstack([y, y[-1]]), ["a", "b"])
    with pytest.raises(GridMismatch):
        time_derivatives(bad)
