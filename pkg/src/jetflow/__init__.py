"""Constrained Lagrangian and Hamiltonian mechanics on jet bundles, with numerical checks."""

from .bundle import (ConfigurationSpace, Jet2Point, JetPoint, PhasePoint, ReferenceFrame,
                     VerticalPhasePoint)
from .constraint import (Codistribution, CompositeConstraintSpec, ConstraintOneForm,
                         LinearConstraintSpec, from_composite, from_forms, from_linear,
                         from_submanifold)
from .dynamics import (ExternalForce, LagrangianSystem, NewtonianSystem, ProbeBox,
                       newtonian_from_lagrangian)
from .errors import InputError, JetflowError, NumericalError
from .expr import Expr, VariableSpace
from .hamilton import (ConstrainedHamiltonField, HamiltonField, HamiltonianSide,
                       inverse_legendre, legendre)
from .integrate import (IntegratorConfig, Trajectory, compare_trajectories,
                        integrate_first_order, integrate_second_order)
from .projection import ConstrainedDynamics, constrain, multiplier_oracle
from .vertical import analytic_vertical_field, vertical_lift

__version__ = "0.1.0"

__all__ = [
    "Codistribution", "CompositeConstraintSpec", "ConfigurationSpace", "ConstrainedDynamics",
    "ConstrainedHamiltonField", "ConstraintOneForm", "Expr", "ExternalForce", "HamiltonField",
    "HamiltonianSide", "InputError", "IntegratorConfig", "Jet2Point", "JetPoint", "JetflowError",
    "LagrangianSystem", "LinearConstraintSpec", "NewtonianSystem", "NumericalError", "PhasePoint",
    "ProbeBox", "ReferenceFrame", "Trajectory", "VariableSpace", "VerticalPhasePoint",
    "analytic_vertical_field", "compare_trajectories", "constrain", "from_composite", "from_forms",
    "from_linear", "from_submanifold", "integrate_first_order", "integrate_second_order",
    "inverse_legendre", "legendre", "multiplier_oracle", "newtonian_from_lagrangian",
    "vertical_lift",
]
