import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jetflow import corpus
from jetflow.bundle import ConfigurationSpace, JetPoint
from jetflow.constraint import CompositeConstraintSpec, LinearConstraintSpec, from_forms, from_linear, from_submanifold
from jetflow.dynamics import (ExpressionDynamics, ExpressionMetric, LagrangianSystem,
                              NewtonianSystem, ProbeBox, newtonian_from_lagrangian)
from jetflow.errors import NotRiemannian
from jetflow.projection import (ConstrainedDynamics, composite_decomposition, constrain,
                                gauss_value, least_norm_certificate, multiplier_oracle, sweep)

C2 = ConfigurationSpace(2)
X = JetPoint(0.0, [0.0, 0.0], [0.6, 0.8])


@pytest.fixture(scope="module")
def gravity():
    return corpus.gravity_particle().system


def test_frozen_vertical(gravity):
    cd = constrain(gravity, from_submanifold(C2, ["v2"], [X]))
    d = cd.decompose(X)
    assert np.allclose(d.xi_tilde, 0, atol=1e-15)
    assert np.allclose(d.force, [0, 9.8], atol=1e-14)
    assert np.allclose(multiplier_oracle(gravity, cd.cod, X), 0, atol=1e-14)


def test_constant_speed_closed_form(gravity):
    cd = constrain(gravity, from_submanifold(C2, ["v1^2 + v2^2 - 1"], [X]))
    d = cd.decompose(X)
    assert np.allclose(d.xi_tilde, [4.704, -3.528], rtol=0, atol=1e-12)
    assert np.allclose(d.reaction, [-4.704, -6.272], rtol=0, atol=1e-12)
    assert d.mtilde[0, 0] == pytest.approx(4.0, abs=1e-14)
    assert d.multipliers[0] == pytest.approx(-3.92, abs=1e-13)
    # closed form (g v1 v2, -g v1^2)
    assert np.allclose(d.xi_tilde, [9.8 * 0.6 * 0.8, -9.8 * 0.36], atol=1e-12)


def test_unconstrained_limit(gravity):
    cd = constrain(gravity, from_forms(C2, [], [X]))
    d = cd.decompose(X)
    assert np.array_equal(d.xi_tilde, d.xi) and not d.reaction.any()
    assert np.allclose(multiplier_oracle(gravity, cd.cod, X), d.xi)


def test_gauss_values(gravity):
    assert gauss_value(gravity, X, gravity.xi(X)) == 0.0
    assert gauss_value(gravity, X, [4.704, -3.528]) == pytest.approx(4.704**2 + 6.272**2, abs=1e-12)
    free = NewtonianSystem(ExpressionMetric(C2, [["1", "0"], ["0", "1"]]),
                           ExpressionDynamics(C2, ["0", "0"]))
    assert gauss_value(free, X, [3, 4]) == 25.0


def test_least_norm(gravity):
    cd = constrain(gravity, from_submanifold(C2, ["v1^2 + v2^2 - 1"], [X]))
    assert least_norm_certificate(cd, X, 0).passed
    rep = least_norm_certificate(cd, X, 1000, seed=3)
    assert rep.passed and rep.detail["violations"] == 0 and rep.value <= 1e-9
    full = constrain(gravity, from_linear(
        LinearConstraintSpec.from_text(C2, ["0", "0"], [["1", "0"], ["0", "1"]]), [X]))
    rep = least_norm_certificate(full, X, 100)
    assert rep.passed and rep.detail["unique_decomposition"]


def test_oracle_on_corpus():
    for fx in corpus.constrained_fixtures():
        cd = constrain(fx.system, fx.constraint)
        for x in fx.box.sample(fx.config.dim, 20, seed=6):
            assert np.max(np.abs(cd(x) - multiplier_oracle(fx.system, fx.constraint, x))) <= 1e-9


def test_sweep_corpus():
    for fx in corpus.constrained_fixtures():
        reps = sweep(constrain(fx.system, fx.constraint), fx.box.sample(fx.config.dim, 20))
        assert all(r.passed for r in reps.values()), (fx.name, reps)


def test_indefinite_metric_rejected():
    L = LagrangianSystem(C2, "v1*v2")
    sys = newtonian_from_lagrangian(L, [X])
    with pytest.raises(NotRiemannian):
        ConstrainedDynamics(sys, from_submanifold(C2, ["v2"], [X]))


def test_stage_matches_decompose():
    for fx in corpus.constrained_fixtures() + [corpus.random_fixture(k) for k in range(4)]:
        cd = constrain(fx.system, fx.constraint)
        for x in fx.box.sample(fx.config.dim, 10, seed=7):
            a = cd.stage(x.t, np.concatenate([x.q, x.v]))
            assert np.max(np.abs(a - cd.decompose(x).xi_tilde)) <= 1e-12


def test_composite_trivial_connection(gravity):
    spec = CompositeConstraintSpec.from_text(C2, [0], [1], ["0"], [["0"]])
    xt, r = composite_decomposition(gravity, spec, X)
    assert xt[1] == 0.0 and xt[0] == gravity.xi(X)[0]
    assert np.array_equal(xt + r, gravity.xi(X))


def test_composite_tracks_base():
    sys = NewtonianSystem(ExpressionMetric(C2, [["1", "0"], ["0", "1"]]),
                          ExpressionDynamics(C2, ["sin(q1)", "-3"]))
    spec = CompositeConstraintSpec.from_text(C2, [0], [1], ["0"], [["1"]])
    x = JetPoint(0.0, [0.4, 0.0], [0.5, 0.5])
    xt, _ = composite_decomposition(sys, spec, x)
    assert xt[1] == pytest.approx(np.sin(0.4), abs=1e-15)


def test_composite_already_compatible():
    sys = NewtonianSystem(ExpressionMetric(C2, [["1", "0"], ["0", "1"]]),
                          ExpressionDynamics(C2, ["2", "2"]))
    spec = CompositeConstraintSpec.from_text(C2, [0], [1], ["0"], [["1"]])
    _, r = composite_decomposition(sys, spec, X)
    assert not r.any()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32))
def test_random_triple_properties(seed):
    tri = corpus.random_triples(1, seed)[0]
    fx, x = tri.fixture, tri.point
    cd = constrain(fx.system, fx.constraint)
    reps = sweep(cd, [x])
    assert reps["compatibility"].value <= 1e-10
    assert reps["orthogonality"].value <= 1e-10
    assert np.max(np.abs(cd(x) - multiplier_oracle(fx.system, fx.constraint, x))) <= 1e-9
