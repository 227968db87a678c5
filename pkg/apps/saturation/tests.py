import math
import numpy as np
from numpy.testing import assert_allclose
from django.test import SimpleTestCase, tag
from apps.placement.models import ActuatorSelection
from apps.platoon.models import DangerSet, HalfSpace, PlatoonParams
from apps.saturation.models import BoundMatrix, Infeasible
from core.exceptions import (
    ModelError, NoSafeBoundsError, NotPositiveDefiniteError, SolverFailureError, UnstableSystemError,
)
from integrations.sdp.client import SdpClient, SdpOutcome
from services.asap_pipeline import original_ellipsoid
from services.ellipsoid_geometry import Ellipsoid, from_certificate, intersects_danger, plane_distance
from services.platoon_model import build_danger_set, build_platoon_system
from services.safe_bounds import (
    BELOW_SPECTRAL_BOUND, assemble_report, certify_solution, cover_spectral_bound, line_search_as,
    lmi_min_eigenvalue, safety_slack, saturate_selection, solve_as_sdp,
)


def random_spd(rng, dim, condition=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigenvalues = np.geomspace(1.0, condition, dim)
    return (Q * eigenvalues) @ Q.T


class InfeasibleClient:
    def solve(self, problem):
        return SdpOutcome(status='infeasible', solver='FAKE', raw_status='infeasible')


class FailingClient:
    def solve(self, problem):
        raise SolverFailureError("FAKE: status unknown")


class CorruptedAnswerClient:
    """Claims success but leaves Y = scale·I and r = 1; real solves after `corrupt_calls`."""

    def __init__(self, scale, corrupt_calls=None):
        self.scale = scale
        self.corrupt_calls = corrupt_calls
        self.calls = 0

    def solve(self, problem):
        self.calls += 1
        if self.corrupt_calls is not None and self.calls > self.corrupt_calls:
            return SdpClient().solve(problem)
        for variable in problem.variables():
            if variable.ndim == 2:
                variable.value = self.scale * np.eye(variable.shape[0])
            else:
                variable.value = np.ones(variable.shape)
        return SdpOutcome(status='optimal', solver='FAKE', raw_status='optimal_inaccurate')


class BoundMatrixTests(SimpleTestCase):

    def test_reciprocal_storage(self):
        bounds = BoundMatrix.from_gamma([1.0, 4.0])
        self.assertEqual(bounds.r, (1.0, 0.25))
        self.assertEqual(bounds.gamma_hat, (1.0, 4.0))
        self.assertEqual(bounds.amplitudes, (1.0, 2.0))
        assert_allclose(bounds.matrix(), np.diag([1.0, 0.25]))

    def test_entries_must_be_positive(self):
        with self.assertRaises(ModelError):
            BoundMatrix(r=(1.0, 0.0))

    def test_assemble_report(self):
        selection = ActuatorSelection(selected=[3, 1])

        class Result:
            gamma_hat = BoundMatrix.from_gamma([0.25, 0.04])

        assert_allclose(assemble_report(selection, Result, 4), [0.2, 0.0, 0.5, 0.0], atol=1e-15)
        self.assertEqual(assemble_report(ActuatorSelection(), Result, 2), [0.0, 0.0])
        with self.assertRaises(ModelError):
            assemble_report(ActuatorSelection(selected=[1]), Result, 4)


class EllipsoidGeometryTests(SimpleTestCase):

    def test_from_certificate(self):
        unit = from_certificate(np.eye(2), 2)
        assert_allclose(unit.P, np.eye(2))
        self.assertEqual(unit.alpha, 2.0)
        assert_allclose(from_certificate(np.diag([4.0, 1.0]), 1).P, np.diag([0.25, 1.0]))

        Y = random_spd(np.random.default_rng(0), 5)
        assert_allclose(from_certificate(Y, 3).P @ Y, np.eye(5), atol=1e-10)

    def test_certificate_must_be_positive_definite(self):
        with self.assertRaises(NotPositiveDefiniteError):
            from_certificate(np.diag([1.0, -1.0]), 2)
        with self.assertRaises(ModelError):
            Ellipsoid(np.eye(2), 0.0)

    def test_plane_distance(self):
        ball = Ellipsoid(np.eye(3), 1.0)
        self.assertAlmostEqual(plane_distance(ball, [1, 0, 0], 2.0), 1.0, places=12)
        self.assertAlmostEqual(plane_distance(ball, [1, 0, 0], 1.0), 0.0, places=12)
        self.assertAlmostEqual(plane_distance(ball, [5, 0, 0], 10.0), 1.0, places=12)
        with self.assertRaises(ModelError):
            plane_distance(ball, [0, 0, 0], 1.0)

    def test_plane_distance_is_scale_invariant(self):
        rng = np.random.default_rng(1)
        ellipsoid = Ellipsoid.from_shape_inverse(random_spd(rng, 4), 2.0)
        c = rng.standard_normal(4)
        for t in (0.1, 3.0, 250.0):
            self.assertAlmostEqual(ellipsoid.plane_distance(t * c, t * 1.5), ellipsoid.plane_distance(c, 1.5),
                                   places=10)

    def test_intersects_danger(self):
        ball = Ellipsoid(np.eye(2), 1.0)
        far = DangerSet(planes=(HalfSpace(c=np.array([1.0, 0.0]), b=2.0),))
        near = DangerSet(planes=(HalfSpace(c=np.array([1.0, 0.0]), b=0.5),))
        self.assertFalse(intersects_danger(ball, far).intersects)
        check = intersects_danger(ball, near)
        self.assertTrue(check.intersects)
        self.assertAlmostEqual(check.min_distance, -0.5)
        with self.assertRaises(ModelError):
            intersects_danger(Ellipsoid(np.eye(3), 1.0), far)

    def test_intersects_iff_some_distance_negative(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            ellipsoid = Ellipsoid.from_shape_inverse(random_spd(rng, 3), rng.uniform(0.5, 3.0))
            planes = tuple(HalfSpace(c=rng.standard_normal(3), b=rng.uniform(0.1, 4.0)) for _ in range(3))
            check = intersects_danger(ellipsoid, DangerSet(planes=planes), slack=0.0)
            self.assertEqual(check.intersects, any(d < 0 for d in check.distances))

    def test_projection(self):
        disk = Ellipsoid(np.eye(5), 1.0).project([1, 3])
        assert_allclose(disk.P, np.eye(2), atol=1e-12)

        interval = Ellipsoid(np.diag([1.0, 4.0]), 1.0).project([0])
        assert_allclose(interval.P, [[1.0]])

        ellipsoid = Ellipsoid.from_shape_inverse(random_spd(np.random.default_rng(3), 4), 2.0)
        assert_allclose(ellipsoid.project([0, 1, 2, 3]).P, ellipsoid.P, atol=1e-10)
        swapped = ellipsoid.project([2, 0]).P
        assert_allclose(swapped[::-1, ::-1], ellipsoid.project([0, 2]).P, atol=1e-12)

        for dims in ([], [0, 0], [4]):
            with self.assertRaises(ModelError):
                ellipsoid.project(dims)

    def test_projection_contains_projected_boundary(self):
        rng = np.random.default_rng(4)
        ellipsoid = Ellipsoid.from_shape_inverse(random_spd(rng, 5, condition=50.0), 2.0)
        z = rng.standard_normal((10_000, 5))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        lower = np.linalg.cholesky(ellipsoid.shape_inverse)
        boundary = np.sqrt(ellipsoid.alpha) * z @ lower.T
        assert_allclose(ellipsoid.quadratic_form(boundary), ellipsoid.alpha, rtol=1e-9)

        dims = [1, 4]
        forms = ellipsoid.project(dims).quadratic_form(boundary[:, dims])
        self.assertLessEqual(forms.max(), ellipsoid.alpha * (1.0 + 1e-9))
        self.assertGreaterEqual(forms.max(), 0.98 * ellipsoid.alpha)

    def test_log_volume(self):
        self.assertAlmostEqual(Ellipsoid(np.eye(2), 1.0).log_volume(), math.log(math.pi), places=12)
        disk = Ellipsoid(np.eye(2), 1.0)
        self.assertAlmostEqual(disk.scaled(4.0).log_volume() - disk.log_volume(), math.log(4.0), places=12)

        rng = np.random.default_rng(5)
        for _ in range(5):
            P = random_spd(rng, 3)
            alpha = rng.uniform(0.5, 2.0)
            direct = 4.0 / 3.0 * math.pi * alpha ** 1.5 / math.sqrt(np.linalg.det(P))
            self.assertAlmostEqual(Ellipsoid(P, alpha).log_volume(), math.log(direct), places=10)

    def test_scaled_and_contains(self):
        ball = Ellipsoid(np.eye(2), 1.0)
        point = np.array([1.5, 0.0])
        self.assertFalse(ball.contains(point))
        self.assertTrue(ball.scaled(4.0).contains(point))
        self.assertTrue(ball.contains([[1.0, 0.0], [0.0, 0.5]]).all())

    def test_boundary_points_on_unit_disk(self):
        points = Ellipsoid(np.eye(2), 1.0).boundary_points([0, 1], count=4)
        self.assertEqual(points.shape, (4, 2))
        assert_allclose(np.linalg.norm(points, axis=1), 1.0, atol=1e-12)
        with self.assertRaises(ModelError):
            Ellipsoid(np.eye(2), 1.0).boundary_points([0, 1], count=2)
        with self.assertRaises(ModelError):
            Ellipsoid(np.eye(4), 1.0).boundary_points([0, 1, 2, 3], count=10)

    def test_boundary_points_satisfy_projected_form(self):
        ellipsoid = Ellipsoid.from_shape_inverse(random_spd(np.random.default_rng(6), 5), 3.0)
        for dims in ([0, 2], [1, 3, 4]):
            points = ellipsoid.boundary_points(dims, count=200)
            self.assertEqual(points.shape, (200, len(dims)))
            assert_allclose(ellipsoid.project(dims).quadratic_form(points), 3.0, rtol=1e-9)

    def test_boundary_points_under_ill_conditioning(self):
        Y = random_spd(np.random.default_rng(7), 3, condition=1e8)
        ellipsoid = Ellipsoid.from_shape_inverse(Y, 2.0)
        points = ellipsoid.boundary_points([0, 1, 2], count=300)
        assert_allclose(ellipsoid.quadratic_form(points), 2.0, rtol=1e-6)


class ThreeVehicleSaturationTests(SimpleTestCase):
    """Redesigned bounds for the three-vehicle platoon with two and three actuators."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = PlatoonParams.uniform(3)
        cls.system = build_platoon_system(cls.params)
        cls.danger = build_danger_set(cls.params)
        cls.results = {}
        for selected in ([1, 2], [1, 2, 3]):
            selection = ActuatorSelection(selected=selected)
            result = saturate_selection(cls.system, selection, cls.params.gamma, cls.danger)
            cls.results[len(selected)] = (selection, result)

    def test_two_actuator_bounds(self):
        # ρ(A)² = 0.81 leaves a = 0.9 as the only admissible grid point
        selection, result = self.results[2]
        bounds = assemble_report(selection, result, 3)
        self.assertEqual(result.a_star, 0.9)
        assert_allclose(bounds[:2], [0.2148, 0.2909], atol=0.01)
        self.assertEqual(bounds[2], 0.0)

    def test_three_actuator_bounds_are_symmetric(self):
        _, result = self.results[3]
        gamma_hat = result.gamma_hat.gamma_hat
        self.assertLessEqual(abs(gamma_hat[0] - gamma_hat[2]), 1e-3 * gamma_hat[0])
        self.assertEqual(result.a_star, 0.9)

    def test_bounds_never_loosen(self):
        for _, result in self.results.values():
            self.assertTrue(all(g <= 1.0 + 1e-9 for g in result.gamma_hat.gamma_hat))

    def test_certificate_holds(self):
        for selection, result in self.results.values():
            B_S = self.system.input_columns(selection.selected)
            self.assertGreaterEqual(
                lmi_min_eigenvalue(self.system.A, B_S, result.Y, result.gamma_hat.r, result.a_star), -1e-6,
            )
            self.assertTrue(all(s <= 1e-9 for s in safety_slack(result.Y, self.danger, result.m_s)))
            final = from_certificate(result.Y, result.m_s)
            check = intersects_danger(final, self.danger)
            self.assertFalse(check.intersects)
            self.assertGreaterEqual(min(check.distances), -1e-6)
            self.assertLessEqual(check.min_distance, 1e-2 * min(self.params.d_star))

    def test_line_search_trace(self):
        _, result = self.results[2]
        assert_allclose([point.a for point in result.per_a_trace], np.arange(1, 10) / 10)
        skipped = [point for point in result.per_a_trace if point.a < 0.81]
        self.assertTrue(all(point.status == BELOW_SPECTRAL_BOUND for point in skipped))
        feasible = [point for point in result.per_a_trace if point.feasible]
        self.assertTrue(feasible)
        self.assertEqual(result.log_volume, min(point.log_volume for point in feasible))
        self.assertIn(result.a_star, [point.a for point in feasible])

    def test_certification_rejects_plane_violations(self):
        selection, result = self.results[2]
        B_S = self.system.input_columns(selection.selected)
        certify_solution(self.system.A, B_S, result.Y, result.gamma_hat.r, result.a_star, self.danger)
        close = build_danger_set(PlatoonParams.uniform(3, d_star=0.5))
        with self.assertRaisesRegex(SolverFailureError, 'plane'):
            certify_solution(self.system.A, B_S, result.Y, result.gamma_hat.r, result.a_star, close)

    def test_original_ellipsoid_crosses_danger_set(self):
        original = original_ellipsoid(self.system, self.params.gamma)
        self.assertEqual(original.alpha, 3.0)
        self.assertTrue(intersects_danger(original, self.danger).intersects)

    def test_far_danger_keeps_original_bounds(self):
        far = build_danger_set(PlatoonParams.uniform(3, d_star=1e6))
        result = saturate_selection(self.system, ActuatorSelection(selected=[1, 2]), [1.0, 1.0, 1.0], far)
        assert_allclose(result.gamma_hat.gamma_hat, [1.0, 1.0], rtol=1e-4)


class LineSearchTests(SimpleTestCase):

    def setUp(self):
        params = PlatoonParams.uniform(3)
        self.system = build_platoon_system(params)
        self.danger = build_danger_set(params)
        self.B_S = self.system.input_columns([1, 2])

    def search(self, a_grid, client):
        return line_search_as(self.system.A, self.B_S, [1.0, 1.0], self.danger, a_grid=a_grid, client=client)

    def test_every_point_infeasible(self):
        with self.assertRaises(NoSafeBoundsError) as cm:
            self.search([0.85, 0.9, 0.95], InfeasibleClient())
        trace = cm.exception.details['per_a_trace']
        self.assertEqual([point.a for point in trace], [0.85, 0.9, 0.95])
        self.assertTrue(all(point.status == 'infeasible' for point in trace))

    def test_every_point_fails_numerically(self):
        with self.assertRaises(SolverFailureError):
            self.search([0.9], FailingClient())

    def test_points_below_the_spectral_bound_never_reach_the_solver(self):
        outcome = solve_as_sdp(self.system.A, self.B_S, [1.0, 1.0], self.danger, 0.5, client=FailingClient())
        self.assertIsInstance(outcome, Infeasible)
        self.assertEqual(outcome.status, BELOW_SPECTRAL_BOUND)

    def test_single_solve_reports_infeasibility_as_a_value(self):
        outcome = solve_as_sdp(self.system.A, self.B_S, [1.0, 1.0], self.danger, 0.9, client=InfeasibleClient())
        self.assertIsInstance(outcome, Infeasible)
        self.assertEqual(outcome.a, 0.9)
        self.assertEqual(outcome.status, 'infeasible')

    def test_uncertified_answers_are_rejected(self):
        with self.assertRaisesRegex(SolverFailureError, 'not positive definite'):
            solve_as_sdp(self.system.A, self.B_S, [1.0, 1.0], self.danger, 0.9,
                         client=CorruptedAnswerClient(scale=-1.0))
        with self.assertRaisesRegex(SolverFailureError, 'LMI'):
            solve_as_sdp(self.system.A, self.B_S, [1.0, 1.0], self.danger, 0.9,
                         client=CorruptedAnswerClient(scale=1e-3))

    def test_rejected_point_does_not_abort_the_search(self):
        result = self.search([0.85, 0.9], CorruptedAnswerClient(scale=-1.0, corrupt_calls=1))
        self.assertEqual([point.status for point in result.per_a_trace], ['solver_failure', 'optimal'])
        self.assertEqual(result.a_star, 0.9)
        with self.assertRaises(SolverFailureError) as cm:
            self.search([0.85, 0.9], CorruptedAnswerClient(scale=-1.0))
        self.assertEqual(
            [point.status for point in cm.exception.details['per_a_trace']], ['solver_failure'] * 2,
        )

    def test_grid_below_the_spectral_bound_is_moved_above_it(self):
        with self.assertLogs('asap', level='WARNING') as logs:
            moved = cover_spectral_bound([0.1, 0.5, 0.9], 0.935)
        assert_allclose(moved, [0.9415, 0.9675, 0.9935])
        self.assertIn('below', logs.output[0])
        self.assertEqual(cover_spectral_bound([0.1, 0.5, 0.9], 0.81), [0.1, 0.5, 0.9])

    def test_line_search_uses_the_moved_grid(self):
        # ρ(A)² = 0.81 is above every point of this grid
        with self.assertRaises(NoSafeBoundsError) as cm:
            self.search([0.2, 0.5, 0.8], InfeasibleClient())
        trace = cm.exception.details['per_a_trace']
        self.assertTrue(all(0.81 < point.a < 1.0 for point in trace))
        self.assertTrue(all(point.status == 'infeasible' for point in trace))

    def test_unstable_loop(self):
        with self.assertRaises(UnstableSystemError):
            line_search_as([[1.1]], [[1.0]], [1.0], DangerSet(planes=()), a_grid=[0.5])

    def test_invalid_inputs(self):
        with self.assertRaises(ModelError):
            solve_as_sdp(self.system.A, self.B_S, [1.0, 1.0], self.danger, 1.0)
        with self.assertRaises(ModelError):
            solve_as_sdp(self.system.A, self.B_S, [1.0], self.danger, 0.5)
        with self.assertRaises(ModelError):
            line_search_as(self.system.A, self.B_S, [1.0, 1.0], self.danger, a_grid=[0.5, 0.2])
        with self.assertRaises(ModelError):
            line_search_as(self.system.A, self.B_S, [1.0, 1.0], self.danger, a_grid=[])


@tag('slow')
class TwentyVehicleSaturationTests(SimpleTestCase):

    def test_reflection_symmetric_selection_has_symmetric_bounds(self):
        params = PlatoonParams.uniform(20)
        system = build_platoon_system(params)
        danger = build_danger_set(params)
        selection = ActuatorSelection(selected=[2, 4, 5, 7, 8, 10, 11, 13, 14, 16, 17, 19])
        # the default grid sits below ρ(A)² ≈ 0.935 and is moved above it
        result = saturate_selection(system, selection, params.gamma, danger)
        self.assertGreater(result.a_star, 0.93)
        bounds = assemble_report(selection, result, 20)
        for i in selection.selected:
            self.assertLessEqual(abs(bounds[i - 1] - bounds[20 - i]), 0.005)
        self.assertTrue(all(0.0 < bounds[i - 1] < 1.0 for i in selection.selected))
        check = intersects_danger(from_certificate(result.Y, result.m_s), danger)
        self.assertFalse(check.intersects)
