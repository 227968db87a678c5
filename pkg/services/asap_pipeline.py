import logging
import time
import numpy as np
from django.conf import settings
from apps.runs.models import BoundRow, RunReport
from core.exceptions import UnstableSystemError, ValidationFailureError
from services.controllability import PlacementService, controllability_gramian
from services.ellipsoid_geometry import Ellipsoid, from_certificate, intersects_danger
from services.platoon_model import build_danger_set, build_platoon_system, spectral_radius
from services.reach_sim import CONTAINMENT_RTOL, empirical_hull_points, simulate
from services.safe_bounds import assemble_report, saturate_selection

logger = logging.getLogger('asap')


def original_ellipsoid(system, gamma):
    """
    Full-actuation ellipsoid: every actuator placed at its original bound.
    Shape is the inverse Gramian of B_full diag(√γ), level α = n.
    """
    scaled = system.B_full @ np.diag(np.sqrt(np.asarray(gamma, dtype=float)))
    gramian = controllability_gramian(system.A, scaled)
    return Ellipsoid.from_shape_inverse(gramian.W, system.n_inputs)


class AsapPipeline:
    """
    Two-stage ASAP run: model → placement → saturation → Monte Carlo → export.

    Each stage runs its prerequisites on first use and caches its result, so
    the CLI can stop after any stage.
    """

    def __init__(self, config):
        self.config = config
        self.timings = {}
        self._model = None
        self._placement = None
        self._saturation = None
        self._validation = None

    def _timed(self, stage, func):
        started = time.perf_counter()
        result = func()
        self.timings[stage] = time.perf_counter() - started
        return result

    # ============= MODEL =============

    def model(self):
        """(system, danger, spectral radius); an unstable loop stops here."""
        if self._model is None:
            self._model = self._timed('model', self._build_model)
        return self._model

    def _build_model(self):
        params = self.config.platoon
        system = build_platoon_system(params)
        danger = build_danger_set(params)
        rho = spectral_radius(system.A)
        logger.info(f"[MODEL] n={params.n}, state dimension {system.dim}, spectral radius {rho:.6f}")
        if rho >= 1.0:
            raise UnstableSystemError(
                f"Closed loop has spectral radius {rho:.6f} >= 1", spectral_radius=rho,
            )
        return system, danger, rho

    # ============= PLACEMENT =============

    def place(self):
        """ActuatorSelection from the greedy AP stage (or the fixed selection)."""
        if self._placement is None:
            self._placement = self._timed('place', self._run_placement)
        return self._placement

    def _run_placement(self):
        system, _, _ = self.model()
        service = PlacementService(
            system, epsilon=self.config.epsilon, use_coefficients=self.config.use_coefficients,
        )
        if self.config.fixed_selection is not None:
            selection = service.selection_for(list(self.config.fixed_selection))
            logger.info(f"[AP] Using fixed selection {selection.selected}")
        else:
            selection = service.greedy(self.config.budget)

        reference = self.config.reference_selection
        if reference is not None and set(reference) != set(selection.selected):
            logger.warning(
                f"[AP] Selection {sorted(selection.selected)} deviates from reference "
                f"{sorted(reference)} (missing {sorted(set(reference) - set(selection.selected))}, "
                f"extra {sorted(set(selection.selected) - set(reference))})"
            )
        return selection

    @property
    def reference_match(self):
        if self.config.reference_selection is None:
            return None
        return set(self.config.reference_selection) == set(self.place().selected)

    # ============= SATURATION =============

    def saturate(self):
        """
        SaturationResult plus the original and final ellipsoids and their
        danger checks. A final ellipsoid crossing D is a certificate failure.
        """
        if self._saturation is None:
            self._saturation = self._timed('saturate', self._run_saturation)
        return self._saturation

    def _run_saturation(self):
        system, danger, _ = self.model()
        selection = self.place()
        params = self.config.platoon

        result = saturate_selection(
            system, selection, params.gamma, danger, a_grid=list(self.config.a_grid),
        )
        final = from_certificate(result.Y, result.m_s)
        original = original_ellipsoid(system, params.gamma)
        final_check = intersects_danger(final, danger)
        original_check = intersects_danger(original, danger)

        if final_check.intersects:
            raise ValidationFailureError(
                f"Certified ellipsoid crosses the danger set (min distance {final_check.min_distance:.3e})"
            )
        if not original_check.intersects:
            logger.warning(
                "[AS] Full-actuation ellipsoid already avoids the danger set; "
                "the before/after contrast does not hold for this instance"
            )
        if final_check.min_distance > 1e-2 * min(params.d_star):
            logger.warning(
                f"[AS] Final ellipsoid is not tangent to D (min distance "
                f"{final_check.min_distance:.3e} > {1e-2 * min(params.d_star):.3e})"
            )

        bounds = assemble_report(selection, result, params.n)
        return {
            'result': result,
            'bounds': bounds,
            'reference': self._compare_reference_bounds(bounds),
            'final': final,
            'original': original,
            'final_check': final_check,
            'original_check': original_check,
        }

    def _compare_reference_bounds(self, bounds):
        """Largest amplitude gap to the config's reference bounds, warned about past tolerance."""
        reference = self.config.reference_bounds
        if reference is None:
            return None
        deviation = float(np.max(np.abs(np.asarray(bounds) - np.asarray(reference, dtype=float))))
        match = deviation <= settings.ASAP_REFERENCE_BOUND_TOLERANCE
        if not match:
            logger.warning(
                f"[AS] Bounds {[round(b, 4) for b in bounds]} deviate from reference "
                f"{list(reference)} by up to {deviation:.4f}"
            )
        return {'bounds': list(reference), 'deviation': deviation, 'match': match}

    # ============= VALIDATION =============

    def validate(self):
        """McReport under the redesigned bounds; any danger hit is a bug."""
        if self._validation is None:
            self._validation = self._timed('validate', self._run_validation)
        return self._validation

    def _run_validation(self):
        system, danger, _ = self.model()
        selection = self.place()
        saturation = self.saturate()

        report = simulate(
            system, selection, saturation['bounds'], self.config.sim,
            ellipsoid=saturation['final'], danger=danger,
        )
        if report.danger_hits:
            raise ValidationFailureError(
                f"Monte Carlo reached the danger set {report.danger_hits} times under certified bounds",
                danger_hits=report.danger_hits,
            )
        limit = saturation['final'].alpha * (1.0 + CONTAINMENT_RTOL)
        if report.max_quadratic_form > limit:
            logger.warning(
                f"[MC] Max quadratic form {report.max_quadratic_form:.9f} exceeds {limit:.9f}"
            )
        return report

    # ============= EXPORT =============

    def projections(self):
        """
        Plot data per configured projection: header labels and point arrays
        for the original boundary, the final boundary and the MC scatter.
        """
        system, _, _ = self.model()
        saturation = self.saturate()
        report = self.validate()

        exports = []
        for dims in self.config.export_dims:
            indices = system.label_indices(dims)
            labels = [system.state_labels[i] for i in indices]
            exports.append({
                'labels': labels,
                'original_boundary': saturation['original'].boundary_points(indices),
                'final_boundary': saturation['final'].boundary_points(indices),
                'mc_scatter': empirical_hull_points(report, indices),
            })
        return exports

    # ============= FULL RUN =============

    def run(self):
        """Every stage, collected into a RunReport."""
        _, _, rho = self.model()
        selection = self.place()
        saturation = self.saturate()
        mc = self.validate()
        self.timings['total'] = sum(seconds for stage, seconds in self.timings.items() if stage != 'total')

        params = self.config.platoon
        result = saturation['result']
        bounds = saturation['bounds']
        reference = saturation['reference'] or {'bounds': None, 'deviation': None, 'match': None}
        report = RunReport(
            version=self.config.version,
            n=params.n,
            budget=self.config.budget,
            selection=list(selection.selected),
            marginal_gains=list(selection.marginal_gains),
            objective_trace=list(selection.objective_trace),
            reference_selection=list(self.config.reference_selection)
            if self.config.reference_selection is not None else None,
            reference_match=self.reference_match,
            bounds_table=[
                BoundRow(index=i + 1, selected=(i + 1) in selection.selected, bound=bounds[i])
                for i in range(params.n)
            ],
            a_star=result.a_star,
            per_a_trace=list(result.per_a_trace),
            safety_distances=list(saturation['final_check'].distances),
            original_distances=list(saturation['original_check'].distances),
            original_log_volume=saturation['original'].log_volume(),
            final_log_volume=result.log_volume,
            original_intersects=saturation['original_check'].intersects,
            final_intersects=saturation['final_check'].intersects,
            spectral_radius=rho,
            mc=mc,
            timings=dict(self.timings),
            reference_bounds=reference['bounds'],
            reference_bounds_deviation=reference['deviation'],
            reference_bounds_match=reference['match'],
        )
        logger.info(
            f"[RUN] Selection {report.selection}, bounds "
            f"{[round(row.bound, 4) for row in report.bounds_table]}, a*={report.a_star:g}"
        )
        return report
