from dataclasses import dataclass, field
import numpy as np


@dataclass(frozen=True, eq=False)
class InputDecoupling:
    """B = B_loc @ E with B_loc binary (actuator locations) and E diagonal (gains)."""

    B_loc: np.ndarray
    E: np.ndarray

    def reconstruct(self):
        return self.B_loc @ self.E


@dataclass(frozen=True, eq=False)
class GramianResult:
    """Infinite-horizon controllability Gramian W = A W A^T + B B^T."""

    W: np.ndarray
    epsilon_used: float
    residual: float


@dataclass
class ActuatorSelection:
    """
    Outcome of the placement stage.

    selected holds 1-based vehicle indices in the order they were picked;
    objective_trace[k] is g(S) after k+1 picks and marginal_gains[k] the
    decrease that pick produced.
    """

    selected: list = field(default_factory=list)
    marginal_gains: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)
    epsilon: float = 0.0

    @property
    def objective(self):
        return self.objective_trace[-1] if self.objective_trace else None

    @property
    def size(self):
        return len(self.selected)

    def as_set(self):
        return frozenset(self.selected)
