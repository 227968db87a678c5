import logging
import numpy as np
import scipy.linalg
from apps.platoon.models import DangerSet, HalfSpace, LtiSystem, PlatoonParams
from core.exceptions import ComputationError, ModelError

logger = logging.getLogger('asap')


def build_platoon_system(params: PlatoonParams) -> LtiSystem:
    """
    Build the closed-loop CACC platoon model.

    State ordering is [Δd_1..Δd_{n-1}, Δv_1..Δv_n]; B_full = [0; I_n] so every
    vehicle carries one secondary-control actuator.

    Args:
        params: validated PlatoonParams

    Returns:
        LtiSystem: A of size (2n-1)x(2n-1), B_full of size (2n-1)xn
    """
    n = params.n
    gaps = n - 1
    dim = gaps + n
    dt = params.dt
    kp = np.asarray(params.kp)
    kd = np.asarray(params.kd)
    beta = np.asarray(params.beta)

    A = np.zeros((dim, dim))
    A[:gaps, :gaps] = np.eye(gaps)

    # Gap rows: Δd_i(k+1) = Δd_i(k) + Δt (v_{i+1} - v_i)
    for i in range(gaps):
        A[i, gaps + i] = -dt
        A[i, gaps + i + 1] = dt

    # Velocity rows, position feedback: first (+k_1), interior (-k_j, +k_j), last (-k_n)
    for j in range(n):
        row = gaps + j
        if j > 0:
            A[row, j - 1] = -kp[j]
        if j < n - 1:
            A[row, j] = kp[j]

    # Velocity rows, velocity feedback: tridiagonal, ends lose one k^d, interior two
    for j in range(n):
        row = gaps + j
        neighbours = (j > 0) + (j < n - 1)
        A[row, gaps + j] = (1.0 + beta[j]) - neighbours * kd[j]
        if j > 0:
            A[row, gaps + j - 1] = kd[j]
        if j < n - 1:
            A[row, gaps + j + 1] = kd[j]

    B_full = np.vstack([np.zeros((gaps, n)), np.eye(n)])
    labels = tuple(f'd{i + 1}' for i in range(gaps)) + tuple(f'v{i + 1}' for i in range(n))

    logger.debug(f"[MODEL] Built {n}-vehicle platoon, state dimension {dim}")
    return LtiSystem(A=A, B_full=B_full, state_labels=labels)


def build_danger_set(params: PlatoonParams) -> DangerSet:
    """
    Collision set: gap i closes (Δd_i <= -d*_i), written as -e_i^T x >= d*_i.
    """
    dim = 2 * params.n - 1
    planes = []
    for i, d_star in enumerate(params.d_star):
        c = np.zeros(dim)
        c[i] = -1.0
        planes.append(HalfSpace(c=c, b=float(d_star)))
    return DangerSet(planes=tuple(planes))


def spectral_radius(A) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ModelError(f"Spectral radius needs a square matrix, got shape {A.shape}")
    try:
        eigenvalues = scipy.linalg.eigvals(A)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise ComputationError(f"Eigenvalue computation failed: {e}") from e
    return float(np.max(np.abs(eigenvalues)))
