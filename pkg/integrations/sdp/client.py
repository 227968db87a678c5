import logging
from dataclasses import dataclass
import cvxpy as cp
from django.conf import settings
from core.exceptions import SolverFailureError

logger = logging.getLogger('asap')


@dataclass(frozen=True)
class SdpOutcome:
    """What the solver concluded: 'optimal' or 'infeasible'."""

    status: str
    solver: str
    raw_status: str

    @property
    def feasible(self):
        return self.status == 'optimal'


class SdpClient:
    """cvxpy wrapper for the saturation SDP."""

    OPTIMAL_STATUSES = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
    INFEASIBLE_STATUSES = (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE)

    def __init__(self, solver=None, fallback_solver=None, tolerance=None):
        self.tolerance = settings.ASAP_SDP_TOLERANCE if tolerance is None else tolerance

        installed = cp.installed_solvers()
        preferred = [solver or settings.ASAP_SDP_SOLVER,
                     fallback_solver or settings.ASAP_SDP_FALLBACK_SOLVER]
        self.solvers = [name for name in dict.fromkeys(preferred) if name and name in installed]
        if not self.solvers:
            logger.warning(
                f"[AS] None of {preferred} installed ({installed}); using cvxpy's default choice"
            )
            self.solvers = [None]

    def _options(self, solver):
        if solver == 'CLARABEL':
            return {'tol_gap_abs': self.tolerance, 'tol_gap_rel': self.tolerance,
                    'tol_feas': self.tolerance}
        if solver == 'SCS':
            return {'eps_abs': self.tolerance, 'eps_rel': self.tolerance, 'max_iters': 200_000}
        return {}

    def solve(self, problem):
        """
        Solve `problem`, trying the fallback solver when the first one fails
        numerically.

        Args:
            problem: cvxpy.Problem

        Returns:
            SdpOutcome

        Raises:
            SolverFailureError: no solver produced an optimal or infeasible verdict
        """
        failures = []
        for solver in self.solvers:
            try:
                problem.solve(solver=solver, **self._options(solver))
            except cp.error.SolverError as e:
                failures.append(f"{solver}: {e}")
                logger.warning(f"[AS] Solver {solver} failed: {e}")
                continue

            status = problem.status
            if status in self.OPTIMAL_STATUSES:
                if status == cp.OPTIMAL_INACCURATE:
                    logger.warning(f"[AS] Solver {solver} reported {status}")
                return SdpOutcome(status='optimal', solver=str(solver), raw_status=status)
            if status in self.INFEASIBLE_STATUSES:
                return SdpOutcome(status='infeasible', solver=str(solver), raw_status=status)

            failures.append(f"{solver}: status {status}")
            logger.warning(f"[AS] Solver {solver} returned status {status}")

        raise SolverFailureError(f"SDP solve failed ({'; '.join(failures)})", failures=failures)
