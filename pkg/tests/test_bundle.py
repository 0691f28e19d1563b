import numpy as np
import pytest

from jetflow.bundle import (ConfigurationSpace, Jet2Point, JetPoint, PhasePoint, ReferenceFrame,
                            VerticalPhasePoint, frame_total_derivative, relative_velocity)
from jetflow.errors import ShapeError, UnknownIdentifier, ValidationError

C1 = ConfigurationSpace(1)
C2 = ConfigurationSpace(2)


def test_default_names_and_layout():
    cfg = ConfigurationSpace(2, params={"g": 9.8})
    assert cfg.coordinates == ("q1", "q2") and cfg.velocities == ("v1", "v2")
    assert cfg.space.names == ("t", "q1", "q2", "v1", "v2", "g")
    assert list(cfg.values(1.0, [2, 3], [4, 5])) == [1, 2, 3, 4, 5, 9.8]


def test_named_coordinates():
    cfg = ConfigurationSpace(2, ("x", "y"), ("vx", "vy"))
    assert cfg.expr("vx*y").variables == {cfg.space.index("vx"), cfg.space.index("y")}
    with pytest.raises(UnknownIdentifier):
        cfg.expr("v1")


def test_points_validate():
    with pytest.raises(ShapeError):
        JetPoint(0.0, [1, 2], [1])
    with pytest.raises(ValueError):
        JetPoint(0.0, [np.nan], [0.0])
    with pytest.raises(ShapeError):
        Jet2Point(JetPoint(0.0, [1], [1]), [1, 2])
    with pytest.raises(ShapeError):
        PhasePoint(0.0, [1, 2], [1])
    with pytest.raises(ShapeError):
        VerticalPhasePoint(PhasePoint(0.0, [1], [1]), [1, 2], [1])


def test_relative_velocity_zero_frame():
    x = JetPoint(0.0, [0, 0], [1, 2])
    assert list(relative_velocity(ReferenceFrame.zero(C2), x)) == [1, 2]


def test_relative_velocity_rest_frame():
    x = JetPoint(0.0, [0, 0], [1.5, -2])
    frame = ReferenceFrame(C2, ["1.5", "-2"])
    assert not relative_velocity(frame, x).any()


def test_relative_velocity_moving_frame():
    x = JetPoint(2.0, [0, 0], [3, 1])
    assert list(relative_velocity(ReferenceFrame(C2, ["t", "0"]), x)) == [1, 1]


def test_total_derivative():
    x = JetPoint(2.0, [3.0], [5.0])
    assert frame_total_derivative(ReferenceFrame(C1, ["7"]), x)[0] == 0.0
    assert frame_total_derivative(ReferenceFrame(C1, ["t"]), x)[0] == 1.0
    assert frame_total_derivative(ReferenceFrame(C1, ["t*q1"]), x)[0] == 13.0


def test_frame_rejects_velocities():
    with pytest.raises(ValidationError):
        ReferenceFrame(C1, ["v1"])
    with pytest.raises(ShapeError):
        ReferenceFrame(C2, ["0"])


def test_frame_jet_matches_call():
    frame = ReferenceFrame(C2, ["sin(t)*q2", "q1^2"])
    x = JetPoint(0.4, [0.3, -0.7], [1.1, 0.2])
    gam, dgam = frame.jet(x)
    assert np.allclose(gam, frame(x.t, x.q), rtol=0, atol=1e-15)
    h = 1e-6
    fd = (frame(x.t + h, x.q + h * x.v) - frame(x.t - h, x.q - h * x.v)) / (2 * h)
    assert np.allclose(dgam, fd, atol=1e-8)
