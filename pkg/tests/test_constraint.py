import numpy as np
import pytest

from jetflow import corpus
from jetflow.bundle import ConfigurationSpace, JetPoint, ReferenceFrame
from jetflow.constraint import (CompositeConstraintSpec, ConstraintOneForm, LinearConstraintSpec,
                                admissibility_report, evaluate_form_on_dynamics, from_composite,
                                from_forms, from_linear, from_submanifold, lift_velocity,
                                verify_constraint_frame)
from jetflow.dynamics import ProbeBox
from jetflow.errors import InadmissibleConstraint, PartitionError, RankError, ValidationError
from jetflow.projection import constrain

C2 = ConfigurationSpace(2)
C3 = ConfigurationSpace(3)
PTS2 = ProbeBox(v=(0.3, 1.0)).sample(2, 10, seed=1)


def at(x, cod):
    return [np.asarray(a) for a in cod.evaluate(x)]


def test_velocity_coordinate():
    cod = from_submanifold(C2, ["v2"], PTS2)
    s0, s, sd = at(PTS2[0], cod)
    assert s0[0] == 0 and not s.any() and list(sd[0]) == [0, 1]


def test_speed_constraint_gradient():
    cod = from_submanifold(C2, ["v1^2 + v2^2 - 1"], PTS2)
    _, _, sd = at(JetPoint(0, [0, 0], [0.6, 0.8]), cod)
    assert np.allclose(sd[0], [1.2, 1.6], rtol=0, atol=1e-15)


def test_holonomic_function_rejected():
    with pytest.raises(InadmissibleConstraint):
        from_submanifold(C2, ["q1"], PTS2)


def test_knife_edge_forms():
    spec = LinearConstraintSpec.from_text(C3, ["0"], [["sin(q3)", "-cos(q3)", "0"]])
    pts = ProbeBox().sample(3, 20, seed=4)
    cod = from_linear(spec, pts)
    for x in pts:
        _, _, sd = at(x, cod)
        th = x.q[2]
        assert np.allclose(sd[0], [np.sin(th), -np.cos(th), 0], atol=1e-15)
        assert admissibility_report(cod, x) == (1, True)


def test_linear_difference():
    cod = from_linear(LinearConstraintSpec.from_text(C2, ["0"], [["1", "-1"]]), PTS2)
    s0, s, sd = at(PTS2[2], cod)
    assert s0[0] == 0 and not s.any() and list(sd[0]) == [1, -1]


def test_full_rank_square():
    cod = from_linear(LinearConstraintSpec.from_text(C2, ["0", "0"], [["1", "0"], ["0", "1"]]),
                      PTS2)
    assert admissibility_report(cod, PTS2[0]) == (2, True)
    cd = constrain(corpus.gravity_particle().system, cod)
    assert np.allclose(cd(PTS2[0]), 0, atol=1e-15)


def test_linear_rank_deficient():
    with pytest.raises(RankError):
        from_linear(LinearConstraintSpec.from_text(C2, ["0", "0"], [["1", "1"], ["2", "2"]]), PTS2)
    with pytest.raises(RankError):
        from_linear(LinearConstraintSpec.from_text(C2, ["0"], [["v1", "1"]]), PTS2)


def test_composite_trivial_connection():
    spec = CompositeConstraintSpec.from_text(C2, [0], [1], ["0"], [["0"]])
    s0, s, sd = at(PTS2[0], from_composite(spec))
    assert s0[0] == 0 and not s.any() and list(sd[0]) == [0, 1]


def test_composite_unit_connection():
    spec = CompositeConstraintSpec.from_text(C2, [0], [1], ["0"], [["1"]])
    s0, s, sd = at(PTS2[0], from_composite(spec))
    assert s0[0] == 0 and not s.any() and list(sd[0]) == [-1, 1]


def test_composite_time_connection():
    spec = CompositeConstraintSpec.from_text(C2, [0], [1], ["t"], [["0"]])
    s0, _, sd = at(PTS2[0], from_composite(spec))
    assert s0[0] == -1 and sd[0][1] == 1


def test_composite_partition_errors():
    with pytest.raises(PartitionError):
        from_composite(CompositeConstraintSpec.from_text(C3, [0], [1], ["0"], [["0"]]))
    with pytest.raises(ValidationError):
        from_composite(CompositeConstraintSpec.from_text(C2, [0], [1], ["v1"], [["0"]]))


def test_lift_velocity_lies_on_constraint():
    spec = CompositeConstraintSpec.from_text(C3, [0, 2], [1], ["sin(t)"], [["q2", "2"]])
    cod = from_composite(spec)
    v = lift_velocity(spec, 0.3, [0.1, 0.5, -0.2], [0.7, -1.1])
    assert abs(cod.residuals(JetPoint(0.3, [0.1, 0.5, -0.2], v))[0]) <= 1e-15


def test_admissibility():
    forms = [ConstraintOneForm.from_text(C2, "0", ["0", "0"], ["1", "0"])] * 2
    cod = from_forms(C2, forms[:1], PTS2)
    assert admissibility_report(cod, PTS2[0]) == (1, True)
    with pytest.raises(InadmissibleConstraint):
        from_forms(C2, forms, PTS2)
    speed = from_submanifold(C2, ["v1^2 + v2^2 - 1"], PTS2)
    assert admissibility_report(speed, JetPoint(0, [0, 0], [0, 0])) == (0, False)


def test_too_many_forms():
    form = ConstraintOneForm.from_text(C2, "0", ["0", "0"], ["1", "0"])
    with pytest.raises(RankError):
        from_forms(C2, [form] * 3, PTS2)


def test_form_on_dynamics():
    x = PTS2[0]
    dv2 = ConstraintOneForm.from_text(C2, "0", ["0", "0"], ["0", "1"])
    assert evaluate_form_on_dynamics(dv2, C2, x, [0, -9.8]) == -9.8
    dt = ConstraintOneForm.from_text(C2, "1", ["0", "0"], ["0", "0"])
    assert evaluate_form_on_dynamics(dt, C2, x, [5, 7]) == 1.0


def test_form_on_projected_dynamics():
    for fx in corpus.constrained_fixtures():
        cd = constrain(fx.system, fx.constraint)
        for x in fx.box.sample(fx.config.dim, 10, seed=3):
            xt = cd(x)
            for form in fx.constraint.forms:
                assert abs(evaluate_form_on_dynamics(form, fx.config, x, xt)) <= 1e-10


def test_constraint_frame():
    pts = ProbeBox().sample(2, 10, seed=8)
    diff = LinearConstraintSpec.from_text(C2, ["0"], [["1", "-1"]])
    assert verify_constraint_frame(diff, ReferenceFrame(C2, ["0.7", "0.7"]), pts).passed
    moving = LinearConstraintSpec.from_text(C2, ["-t"], [["0", "1"]])
    assert verify_constraint_frame(moving, ReferenceFrame(C2, ["0", "t"]), pts).passed
    rep = verify_constraint_frame(moving, ReferenceFrame.zero(C2), pts, diagnose=True)
    assert not rep.passed
    assert rep.value == pytest.approx(max(x.t for x in pts), abs=1e-15)
    x, g = rep.detail["candidates"][0]
    assert np.allclose(g, [0, x.t])
