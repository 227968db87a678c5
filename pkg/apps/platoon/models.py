"""Plain data models for the platoon instance. Nothing here is persisted."""

from dataclasses import dataclass, field
import numpy as np
from core.exceptions import ModelError


def _per_vehicle(name, value, count):
    """Broadcast a scalar, or check a list, into a tuple of `count` floats."""
    if np.isscalar(value):
        return (float(value),) * count
    values = tuple(float(v) for v in value)
    if len(values) != count:
        raise ModelError(f"{name} must be a scalar or have length {count}, got {len(values)}")
    return values


@dataclass(frozen=True)
class PlatoonParams:
    """
    Physical and control parameters of one platoon.

    kp, kd, beta, gamma and v_star are per vehicle (length n), d_star is per
    gap (length n-1); each accepts a scalar that is broadcast.
    Velocities stay in whatever unit the caller uses (km/h in the case studies).
    """

    n: int
    dt: float
    kp: tuple
    kd: tuple
    beta: tuple
    d_star: tuple
    v_star: tuple
    gamma: tuple

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 2:
            raise ModelError(f"Vehicle count n must be an integer >= 2, got {self.n}")
        n = int(self.n)
        object.__setattr__(self, 'n', n)
        if not self.dt > 0:
            raise ModelError(f"Sampling period dt must be positive, got {self.dt}")
        object.__setattr__(self, 'dt', float(self.dt))

        for name, count in (('kp', n), ('kd', n), ('beta', n), ('v_star', n),
                            ('gamma', n), ('d_star', n - 1)):
            object.__setattr__(self, name, _per_vehicle(name, getattr(self, name), count))

        if any(d <= 0 for d in self.d_star):
            raise ModelError(f"Desired distances d_star must be positive, got {self.d_star}")
        if any(g <= 0 for g in self.gamma):
            raise ModelError(f"Bound constants gamma must be positive, got {self.gamma}")
        if any(b >= 0 for b in self.beta):
            raise ModelError(f"Friction coefficients beta must be negative, got {self.beta}")

    @classmethod
    def uniform(cls, n, dt=0.5, kp=0.2, kd=0.3, beta=-0.1, d_star=2.0, v_star=60.0, gamma=1.0):
        """Platoon with identical vehicles; defaults are the shipped case-study values."""
        return cls(n=n, dt=dt, kp=kp, kd=kd, beta=beta, d_star=d_star, v_star=v_star, gamma=gamma)


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """Closed-loop x(k+1) = A x(k) + B_full u(k) with labeled states [d.., v..]."""

    A: np.ndarray
    B_full: np.ndarray
    state_labels: tuple

    def __post_init__(self):
        dim = self.A.shape[0]
        if self.A.ndim != 2 or self.A.shape != (dim, dim):
            raise ModelError(f"A must be square, got shape {self.A.shape}")
        if self.B_full.ndim != 2 or self.B_full.shape[0] != dim:
            raise ModelError(f"B_full must have {dim} rows, got shape {self.B_full.shape}")
        if len(self.state_labels) != dim:
            raise ModelError(f"Expected {dim} state labels, got {len(self.state_labels)}")

    @property
    def dim(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B_full.shape[1]

    def input_columns(self, selection, matrix=None):
        """Columns of `matrix` (default B_full) for 1-based actuator indices."""
        matrix = self.B_full if matrix is None else matrix
        indices = [int(i) - 1 for i in selection]
        if any(i < 0 or i >= matrix.shape[1] for i in indices):
            raise ModelError(f"Actuator indices {list(selection)} out of range 1..{matrix.shape[1]}")
        return matrix[:, indices]

    def label_indices(self, labels):
        """Map state labels ('d1', 'v3', ...) or integer indices to 0-based indices."""
        result = []
        for label in labels:
            if isinstance(label, (int, np.integer)):
                index = int(label)
            elif isinstance(label, str) and label.isdigit():
                index = int(label)
            elif label in self.state_labels:
                index = self.state_labels.index(label)
            else:
                raise ModelError(f"Unknown state label '{label}'")
            if not 0 <= index < self.dim:
                raise ModelError(f"State index {index} out of range 0..{self.dim - 1}")
            result.append(index)
        return result


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """One danger half-space {x : c^T x >= b}."""

    c: np.ndarray
    b: float


@dataclass(frozen=True, eq=False)
class DangerSet:
    """Union of half-spaces; a state is dangerous if it lies in any of them."""

    planes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        for plane in self.planes:
            if not np.any(plane.c):
                raise ModelError("Danger plane normal must be nonzero")
            if not plane.b > 0:
                raise ModelError(f"Danger plane offset must be positive, got {plane.b}")

    @property
    def kappa(self):
        return len(self.planes)

    @property
    def dim(self):
        return self.planes[0].c.shape[0] if self.planes else 0

    def normals(self):
        return np.vstack([plane.c for plane in self.planes])

    def offsets(self):
        return np.array([plane.b for plane in self.planes])

    def contains(self, states):
        """Boolean mask of which rows of `states` fall in at least one half-space."""
        states = np.atleast_2d(states)
        if not self.planes:
            return np.zeros(states.shape[0], dtype=bool)
        return np.any(states @ self.normals().T >= self.offsets(), axis=1)
