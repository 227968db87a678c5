import logging
from concurrent.futures import ThreadPoolExecutor
import cvxpy as cp
import numpy as np
from django.conf import settings
from apps.saturation.models import BoundMatrix, Infeasible, LineSearchPoint, SaturationResult
from core.exceptions import (
    ModelError, NoSafeBoundsError, NotPositiveDefiniteError, SolverFailureError, UnstableSystemError,
)
from integrations.sdp.client import SdpClient
from services.ellipsoid_geometry import from_certificate
from services.platoon_model import spectral_radius

logger = logging.getLogger('asap')

# Status recorded for grid points the LMI cannot satisfy: a Y^{-1} ⪰ A^T Y^{-1} A forces a >= ρ(A)².
BELOW_SPECTRAL_BOUND = 'below_spectral_bound'


def _check_dimensions(A, B_S, gamma_orig, danger):
    A = np.asarray(A, dtype=float)
    B_S = np.asarray(B_S, dtype=float)
    gamma_orig = np.asarray(gamma_orig, dtype=float).ravel()
    dim = A.shape[0]
    if A.shape != (dim, dim):
        raise ModelError(f"A must be square, got {A.shape}")
    if B_S.ndim != 2 or B_S.shape[0] != dim or B_S.shape[1] == 0:
        raise ModelError(f"B_S must be {dim} x m_s with m_s >= 1, got {B_S.shape}")
    if gamma_orig.shape != (B_S.shape[1],):
        raise ModelError(
            f"Expected {B_S.shape[1]} original bounds for the selected actuators, got {gamma_orig.size}"
        )
    if np.any(gamma_orig <= 0):
        raise ModelError(f"Original bounds must be positive, got {gamma_orig}")
    if danger.kappa and danger.dim != dim:
        raise ModelError(f"Danger planes have dimension {danger.dim}, state dimension is {dim}")
    return A, B_S, gamma_orig


def lmi_matrix(A, B_S, Y, r, a):
    """Numeric block matrix [[aY, 0, YA^T], [0, (1-a)Γ̂, B^T], [AY, B, Y]]."""
    A = np.asarray(A, dtype=float)
    B_S = np.asarray(B_S, dtype=float)
    dim, m_s = B_S.shape
    return np.block([
        [a * Y, np.zeros((dim, m_s)), Y @ A.T],
        [np.zeros((m_s, dim)), (1.0 - a) * np.diag(r), B_S.T],
        [A @ Y, B_S, Y],
    ])


def lmi_min_eigenvalue(A, B_S, Y, r, a):
    M = lmi_matrix(A, B_S, Y, r, a)
    return float(np.linalg.eigvalsh((M + M.T) / 2).min())


def safety_slack(Y, danger, m_s):
    """c_i^T Y c_i - b_i^2 / m_s per plane; all <= 0 means E(Y^{-1}, m_s) avoids D."""
    return [float(plane.c @ Y @ plane.c - plane.b ** 2 / m_s) for plane in danger.planes]


def certify_solution(A, B_S, Y, r, a, danger, lmi_tolerance=None, slack_tolerance=None):
    """
    Check a solver answer before it is trusted: Y must factor, the block LMI
    must be PSD up to `lmi_tolerance` (relative to its norm) and every plane
    constraint must hold up to `slack_tolerance`.

    Raises:
        SolverFailureError: the answer is not a valid certificate
    """
    lmi_tolerance = settings.ASAP_LMI_TOLERANCE if lmi_tolerance is None else lmi_tolerance
    slack_tolerance = settings.ASAP_CERTIFICATE_SLACK if slack_tolerance is None else slack_tolerance
    m_s = B_S.shape[1]

    try:
        from_certificate(Y, m_s)
    except NotPositiveDefiniteError as e:
        raise SolverFailureError(f"a={a:g}: certificate Y is not positive definite", a=a) from e

    scale = max(1.0, float(np.linalg.norm(lmi_matrix(A, B_S, Y, r, a), 2)))
    min_eigenvalue = lmi_min_eigenvalue(A, B_S, Y, r, a)
    if min_eigenvalue < -lmi_tolerance * scale:
        raise SolverFailureError(
            f"a={a:g}: LMI minimum eigenvalue {min_eigenvalue:.3e} below -{lmi_tolerance:g}·{scale:.3g}",
            a=a, lmi_min_eigenvalue=min_eigenvalue,
        )

    slack = safety_slack(Y, danger, m_s)
    if slack and max(slack) > slack_tolerance:
        raise SolverFailureError(
            f"a={a:g}: danger plane constraint violated by {max(slack):.3e}", a=a, safety_slack=slack,
        )


def solve_as_sdp(A, B_S, gamma_orig, danger, a, client=None, safety_margin=None, pd_margin=None,
                 spectral_bound=None):
    """
    Saturation SDP for a fixed a in (0, 1):

        minimize Tr(Γ̂)  s.t.  Γ̂ >= Γ (diagonal, reciprocal bounds), Y ≻ 0,
                              c_i^T Y c_i <= b_i^2 / m_s,
                              [[aY, 0, YA^T], [0, (1-a)Γ̂, B_S^T], [AY, B_S, Y]] ⪰ 0

    Args:
        A: state matrix
        B_S: selected input columns, dim x m_s
        gamma_orig: original bound constants γ_i of the selected actuators
        danger: DangerSet
        a: line-search scalar
        client: SdpClient (default built from settings)
        safety_margin: relative tightening of the plane constraints
        pd_margin: Y ⪰ pd_margin * I
        spectral_bound: ρ(A)², computed when omitted

    Returns:
        (Y, BoundMatrix) on a certified solution, Infeasible when a <= ρ(A)²
        or the solver certifies infeasibility

    Raises:
        SolverFailureError: the solver failed or its answer did not pass certify_solution
    """
    if not 0.0 < a < 1.0:
        raise ModelError(f"Line-search scalar a must lie in (0, 1), got {a}")
    A, B_S, gamma_orig = _check_dimensions(A, B_S, gamma_orig, danger)
    spectral_bound = spectral_radius(A) ** 2 if spectral_bound is None else spectral_bound
    if a <= spectral_bound:
        logger.debug(f"[AS] a={a:g}: skipped, not above ρ(A)²={spectral_bound:.6f}")
        return Infeasible(a=float(a), status=BELOW_SPECTRAL_BOUND)

    client = client or SdpClient()
    safety_margin = settings.ASAP_SAFETY_MARGIN if safety_margin is None else safety_margin
    pd_margin = settings.ASAP_PD_MARGIN if pd_margin is None else pd_margin

    dim, m_s = B_S.shape
    lower = 1.0 / gamma_orig

    Y = cp.Variable((dim, dim), symmetric=True)
    r = cp.Variable(m_s)
    lmi = cp.bmat([
        [a * Y, np.zeros((dim, m_s)), Y @ A.T],
        [np.zeros((m_s, dim)), (1.0 - a) * cp.diag(r), B_S.T],
        [A @ Y, B_S, Y],
    ])
    constraints = [
        r >= lower,
        Y >> pd_margin * np.eye(dim),
        (lmi + lmi.T) / 2 >> 0,
    ]
    for plane in danger.planes:
        constraints.append(plane.c @ Y @ plane.c <= (1.0 - safety_margin) * plane.b ** 2 / m_s)

    problem = cp.Problem(cp.Minimize(cp.sum(r)), constraints)
    outcome = client.solve(problem)
    if not outcome.feasible:
        logger.debug(f"[AS] a={a:g}: {outcome.raw_status} ({outcome.solver})")
        return Infeasible(a=float(a), status=outcome.raw_status)
    if Y.value is None or r.value is None:
        raise SolverFailureError(f"a={a:g}: solver {outcome.solver} reported {outcome.raw_status} without values")

    Y_value = (Y.value + Y.value.T) / 2
    # Raising r̂ only adds to a PSD diagonal block, so clipping keeps the LMI
    r_value = np.maximum(np.asarray(r.value).ravel(), lower)
    certify_solution(A, B_S, Y_value, r_value, a, danger)
    return Y_value, BoundMatrix(r=tuple(r_value))


def cover_spectral_bound(a_grid, spectral_bound):
    """
    Every a <= ρ(A)² is infeasible. When the whole grid lies there, map it
    affinely onto (ρ(A)², 1) so the search keeps the same number of points.
    """
    if spectral_bound < max(a_grid):
        return list(a_grid)
    rescaled = [spectral_bound + (1.0 - spectral_bound) * a for a in a_grid]
    logger.warning(
        f"[AS] Grid {list(a_grid)} lies below ρ(A)²={spectral_bound:.6f}; "
        f"searching {[round(a, 6) for a in rescaled]} instead"
    )
    return rescaled


def line_search_as(A, B_S, gamma_orig, danger, a_grid=None, client=None, max_workers=None,
                   selection=None) -> SaturationResult:
    """
    AS stage: solve the SDP on every grid point, skip infeasible ones and keep
    the a whose ellipsoid E(Y^{-1}, m_s) has the smallest volume (ties go to
    the smaller a). A grid entirely at or below ρ(A)² is first moved onto
    (ρ(A)², 1) by cover_spectral_bound.

    Raises:
        UnstableSystemError: ρ(A) >= 1, so no a in (0, 1) can work
        NoSafeBoundsError: no grid point was feasible
        SolverFailureError: every grid point failed numerically
    """
    a_grid = list(settings.ASAP_A_GRID if a_grid is None else a_grid)
    if not a_grid:
        raise ModelError("Line-search grid must not be empty")
    if any(not 0.0 < a < 1.0 for a in a_grid):
        raise ModelError(f"Line-search grid must lie in (0, 1), got {a_grid}")
    if a_grid != sorted(a_grid):
        raise ModelError(f"Line-search grid must be sorted, got {a_grid}")
    A, B_S, gamma_orig = _check_dimensions(A, B_S, gamma_orig, danger)
    client = client or SdpClient()
    max_workers = settings.ASAP_MAX_WORKERS if max_workers is None else max_workers
    m_s = B_S.shape[1]

    rho = spectral_radius(A)
    if rho >= 1.0:
        raise UnstableSystemError(f"Closed loop has spectral radius {rho:.6f} >= 1", spectral_radius=rho)
    spectral_bound = rho ** 2
    a_grid = cover_spectral_bound(a_grid, spectral_bound)

    def attempt(a):
        try:
            outcome = solve_as_sdp(A, B_S, gamma_orig, danger, a, client=client, spectral_bound=spectral_bound)
            if isinstance(outcome, Infeasible):
                return outcome
            Y, bounds = outcome
            return Y, bounds, from_certificate(Y, m_s).log_volume()
        except (SolverFailureError, NotPositiveDefiniteError) as e:
            logger.warning(f"[AS] a={a:g}: {e}")
            return e

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(attempt, a_grid))
    else:
        outcomes = [attempt(a) for a in a_grid]

    trace = []
    best = None
    for a, outcome in zip(a_grid, outcomes):
        if isinstance(outcome, Exception):
            trace.append(LineSearchPoint(a=a, feasible=False, log_volume=None, status='solver_failure'))
            continue
        if isinstance(outcome, Infeasible):
            trace.append(LineSearchPoint(a=a, feasible=False, log_volume=None, status=outcome.status))
            continue

        Y, bounds, volume = outcome
        trace.append(LineSearchPoint(a=a, feasible=True, log_volume=volume, status='optimal'))
        logger.debug(f"[AS] a={a:g}: log volume {volume:.6f}, bounds {bounds.amplitudes}")
        if best is None or volume < best[3]:
            best = (a, Y, bounds, volume)

    if best is None:
        attempted = [point for point in trace if point.status != BELOW_SPECTRAL_BOUND]
        if attempted and all(point.status == 'solver_failure' for point in attempted):
            raise SolverFailureError("SDP solver failed on every grid point", per_a_trace=trace)
        raise NoSafeBoundsError(
            "No safe bounds exist for this placement: every grid point is infeasible",
            per_a_trace=trace,
        )

    a_star, Y, bounds, volume = best
    logger.info(f"[AS] Best a={a_star:g}, log volume {volume:.6f}, bounds {bounds.amplitudes}")
    return SaturationResult(
        Y=Y, gamma_hat=bounds, a_star=float(a_star), log_volume=volume,
        selection=list(selection or []), per_a_trace=trace,
    )


def saturate_selection(system, selection, gamma, danger, a_grid=None, client=None):
    """Run the AS stage on the columns of B_full picked by `selection` (pick order kept)."""
    locations = list(selection.selected)
    B_S = system.input_columns(locations)
    gamma_selected = [gamma[location - 1] for location in locations]
    return line_search_as(system.A, B_S, gamma_selected, danger, a_grid=a_grid,
                          client=client, selection=locations)


def assemble_report(selection, sat, n):
    """Length-n list of amplitudes √γ̂_i; unselected actuators get 0."""
    bounds = [0.0] * n
    locations = list(selection.selected) if selection is not None else []
    if not locations:
        return bounds
    amplitudes = sat.gamma_hat.amplitudes
    if len(amplitudes) != len(locations):
        raise ModelError(
            f"Selection has {len(locations)} actuators but saturation result has {len(amplitudes)}"
        )
    for location, amplitude in zip(locations, amplitudes):
        if not 1 <= location <= n:
            raise ModelError(f"Actuator index {location} out of range 1..{n}")
        bounds[location - 1] = amplitude
    return bounds
