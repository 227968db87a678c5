from dataclasses import dataclass, field
from typing import Optional
import numpy as np
from core.exceptions import ModelError


@dataclass(frozen=True)
class BoundMatrix:
    """
    Redesigned bound matrix Γ̂ = diag(r̂). Γ stores reciprocals, so the bound
    constant is γ̂_i = 1/r̂_i and the input amplitude is |u_i| <= √γ̂_i.
    """

    r: tuple

    def __post_init__(self):
        r = tuple(float(v) for v in self.r)
        if any(not v > 0 for v in r):
            raise ModelError(f"Bound matrix entries must be positive, got {r}")
        object.__setattr__(self, 'r', r)

    @classmethod
    def from_gamma(cls, gamma):
        return cls(r=tuple(1.0 / float(g) for g in gamma))

    @property
    def gamma_hat(self):
        return tuple(1.0 / v for v in self.r)

    @property
    def amplitudes(self):
        return tuple(float(np.sqrt(1.0 / v)) for v in self.r)

    def matrix(self):
        return np.diag(self.r)


@dataclass(frozen=True)
class Infeasible:
    """Marker returned when the SDP is certified infeasible at a given a."""

    a: float
    status: str


@dataclass(frozen=True)
class LineSearchPoint:
    a: float
    feasible: bool
    log_volume: Optional[float]
    status: str


@dataclass(eq=False)
class SaturationResult:
    """Outcome of the AS stage for one fixed location set."""

    Y: np.ndarray
    gamma_hat: BoundMatrix
    a_star: float
    log_volume: float
    selection: list = field(default_factory=list)
    per_a_trace: list = field(default_factory=list)

    @property
    def m_s(self):
        return len(self.gamma_hat.r)
