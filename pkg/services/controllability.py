import logging
import math
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations
import numpy as np
import scipy.linalg
from django.conf import settings
from apps.placement.models import ActuatorSelection, GramianResult, InputDecoupling
from core.exceptions import (
    CombinatorialLimitError, ModelError, NotPositiveDefiniteError, UnstableSystemError,
)
from services.platoon_model import spectral_radius

logger = logging.getLogger('asap')


def decouple_input(B) -> InputDecoupling:
    """
    Split B into a binary location matrix and a diagonal coefficient matrix.

    Raises ModelError naming the first column with more than one nonzero.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2:
        raise ModelError(f"Input matrix must be 2-D, got shape {B.shape}")

    nonzero = B != 0
    counts = nonzero.sum(axis=0)
    crowded = np.flatnonzero(counts > 1)
    if crowded.size:
        raise ModelError(
            f"Column {int(crowded[0]) + 1} of B has {int(counts[crowded[0]])} nonzeros; "
            f"decoupling needs at most one per column"
        )

    coefficients = np.ones(B.shape[1])
    for j in np.flatnonzero(counts == 1):
        coefficients[j] = B[nonzero[:, j], j][0]

    return InputDecoupling(B_loc=nonzero.astype(float), E=np.diag(coefficients))


def _lyapunov_residual(A, W, Q):
    return float(np.linalg.norm(A @ W @ A.T + Q - W))


def controllability_gramian(A, B_S, epsilon=0.0, tolerance=None, spectral_radius_value=None) -> GramianResult:
    """
    Solve W = A W A^T + B_S B_S^T directly (Schur-based Lyapunov solver).

    Args:
        A: state matrix, spectral radius < 1
        B_S: input columns of the selected actuators
        epsilon: regularization recorded for the metric computed on W
        tolerance: relative residual tolerance (default ASAP_LYAPUNOV_TOLERANCE)
        spectral_radius_value: ρ(A) when the caller already has it

    Returns:
        GramianResult
    """
    A = np.asarray(A, dtype=float)
    B_S = np.asarray(B_S, dtype=float).reshape(A.shape[0], -1)
    tolerance = settings.ASAP_LYAPUNOV_TOLERANCE if tolerance is None else tolerance

    rho = spectral_radius(A) if spectral_radius_value is None else spectral_radius_value
    if rho >= 1.0:
        raise UnstableSystemError(
            f"Unstable closed loop: spectral radius {rho:.6f} >= 1, "
            f"infinite-horizon Gramian does not exist",
            spectral_radius=rho,
        )

    Q = B_S @ B_S.T
    W = scipy.linalg.solve_discrete_lyapunov(A, Q, method='bilinear')
    W = (W + W.T) / 2
    residual = _lyapunov_residual(A, W, Q)

    limit = tolerance * (1.0 + np.linalg.norm(Q))
    if residual > limit:
        # One step of iterative refinement on the residual equation
        R = A @ W @ A.T + Q - W
        W = W + scipy.linalg.solve_discrete_lyapunov(A, (R + R.T) / 2, method='bilinear')
        W = (W + W.T) / 2
        residual = _lyapunov_residual(A, W, Q)
        if residual > limit:
            logger.warning(f"[AP] Lyapunov residual {residual:.3e} above tolerance {limit:.3e}")

    return GramianResult(W=W, epsilon_used=float(epsilon), residual=residual)


def truncated_gramian(A, B_S, steps):
    """Finite sum Σ_{i=0}^{steps} A^i B B^T (A^T)^i."""
    A = np.asarray(A, dtype=float)
    B_S = np.asarray(B_S, dtype=float).reshape(A.shape[0], -1)
    W = np.zeros((A.shape[0], A.shape[0]))
    term = B_S
    for _ in range(steps + 1):
        W += term @ term.T
        term = A @ term
    return W


def placement_metric(W, epsilon) -> float:
    """log det((W + εI)^{-1}) = -log det(W + εI), via Cholesky."""
    if epsilon < 0:
        raise ModelError(f"Regularization epsilon must be >= 0, got {epsilon}")
    W = np.asarray(W, dtype=float)
    try:
        factor, _ = scipy.linalg.cho_factor(W + epsilon * np.eye(W.shape[0]))
    except scipy.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(
            f"W + εI is not positive definite (ε={epsilon:g}); increase epsilon"
        ) from e
    return float(-2.0 * np.sum(np.log(np.diag(factor))))


class PlacementService:
    """
    Actuator placement on one LTI system.

    The Gramian is linear in B B^T, so the Gramian of any location set is the
    sum of the single-column Gramians; these are solved once up front.
    """

    def __init__(self, system, epsilon=None, use_coefficients=False, max_workers=None):
        self.system = system
        self.epsilon = settings.ASAP_EPSILON if epsilon is None else float(epsilon)
        self.max_workers = settings.ASAP_MAX_WORKERS if max_workers is None else max_workers
        self.tie_tolerance = settings.ASAP_TIE_TOLERANCE

        self.decoupling = decouple_input(system.B_full)
        columns = self.decoupling.B_loc
        if use_coefficients:
            columns = columns @ self.decoupling.E

        self.locations = list(range(1, system.n_inputs + 1))
        self.spectral_radius = spectral_radius(system.A)
        self.column_gramians = {
            location: controllability_gramian(
                system.A, columns[:, location - 1], self.epsilon,
                spectral_radius_value=self.spectral_radius,
            )
            for location in self.locations
        }

    def gramian(self, subset):
        W = np.zeros((self.system.dim, self.system.dim))
        for location in subset:
            W += self.column_gramians[location].W
        return W

    def objective(self, subset):
        """g(S) = log det((W_S + εI)^{-1})."""
        return placement_metric(self.gramian(subset), self.epsilon)

    def _evaluate(self, subsets):
        if self.max_workers and self.max_workers > 1 and len(subsets) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                return list(pool.map(self.objective, subsets))
        return [self.objective(subset) for subset in subsets]

    def _check_budget(self, m):
        if isinstance(m, bool) or int(m) != m or not 1 <= m <= len(self.locations):
            raise ModelError(f"Budget m must be in 1..{len(self.locations)}, got {m}")
        return int(m)

    def greedy(self, m) -> ActuatorSelection:
        """
        Greedy AP stage: repeatedly add the location with the largest decrease
        of g. Ties (within ASAP_TIE_TOLERANCE) go to the lowest vehicle index.
        """
        m = self._check_budget(m)
        selection = ActuatorSelection(epsilon=self.epsilon)
        current = self.objective([])

        for step in range(m):
            candidates = [e for e in self.locations if e not in selection.selected]
            values = self._evaluate([selection.selected + [e] for e in candidates])
            gains = [current - value for value in values]

            best_gain = max(gains)
            threshold = best_gain - self.tie_tolerance * (1.0 + abs(best_gain))
            pick = next(k for k, gain in enumerate(gains) if gain >= threshold)

            selection.selected.append(candidates[pick])
            selection.marginal_gains.append(gains[pick])
            selection.objective_trace.append(values[pick])
            current = values[pick]
            logger.debug(
                f"[AP] Step {step + 1}: picked vehicle {candidates[pick]} "
                f"(gain {gains[pick]:.6f}, g(S)={current:.6f})"
            )

        logger.info(f"[AP] Greedy selection for m={m}: {selection.selected}")
        return selection

    def exhaustive(self, m) -> ActuatorSelection:
        """Brute-force optimum of g over all m-subsets; first subset wins ties."""
        m = self._check_budget(m)
        total = math.comb(len(self.locations), m)
        if total > settings.ASAP_MAX_SUBSETS:
            raise CombinatorialLimitError(
                f"C({len(self.locations)}, {m}) = {total} subsets exceeds the limit "
                f"of {settings.ASAP_MAX_SUBSETS}"
            )

        subsets = [list(subset) for subset in combinations(self.locations, m)]
        values = self._evaluate(subsets)
        best = int(np.argmin(values))
        return self.selection_for(subsets[best])

    def selection_for(self, subset) -> ActuatorSelection:
        """ActuatorSelection for a given location list, with its prefix trace."""
        selection = ActuatorSelection(epsilon=self.epsilon)
        current = self.objective([])
        for location in subset:
            if location not in self.locations or location in selection.selected:
                raise ModelError(f"Invalid or duplicate actuator location {location}")
            value = self.objective(selection.selected + [location])
            selection.selected.append(location)
            selection.marginal_gains.append(current - value)
            selection.objective_trace.append(value)
            current = value
        return selection

    def diminishing_returns_violations(self, chains, slack=1e-9):
        """
        Check g(S) - g(S+e) >= g(S') - g(S'+e) for each (S, S', e) chain with
        S ⊆ S' and e ∉ S'. Returns the chains that violate it.
        """
        violations = []
        for small, large, element in chains:
            small, large = list(small), list(large)
            gain_small = self.objective(small) - self.objective(small + [element])
            gain_large = self.objective(large) - self.objective(large + [element])
            if gain_small < gain_large - slack:
                violations.append((small, large, element, gain_small, gain_large))
        return violations


def sample_chains(n, count, rng):
    """Random (S, S', e) chains over locations 1..n with S ⊆ S' and e ∉ S'."""
    chains = []
    locations = np.arange(1, n + 1)
    for _ in range(count):
        order = rng.permutation(locations)
        element = int(order[0])
        large_size = int(rng.integers(0, n))
        small_size = int(rng.integers(0, large_size + 1))
        large = sorted(int(v) for v in order[1:1 + large_size])
        small = sorted(int(v) for v in order[1:1 + small_size])
        chains.append((small, large, element))
    return chains


def greedy_place(system, m, epsilon=None, use_coefficients=False) -> ActuatorSelection:
    return PlacementService(system, epsilon, use_coefficients).greedy(m)


def exhaustive_place(system, m, epsilon=None, use_coefficients=False) -> ActuatorSelection:
    return PlacementService(system, epsilon, use_coefficients).exhaustive(m)
