from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class CheckReport:
    """Outcome of a sampled numerical check.

    ``value`` is the worst residual seen, ``tol`` the bound it was tested
    against and ``witness`` the point where the worst residual occurred.
    """

    name: str
    value: float
    tol: float
    passed: bool | None = None
    witness: Any = None
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.passed is None:
            self.passed = bool(self.value <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.6e} (tol {self.tol:g})"


def worst(name: str, residuals, tol: float) -> CheckReport:
    """Fold ``(value, witness)`` pairs into a single report."""
    best = (0.0, None)
    for value, witness in residuals:
        if not value <= best[0]:  # NaN counts as worst
            best = (value, witness)
    return CheckReport(name, float(best[0]), tol, witness=best[1])
