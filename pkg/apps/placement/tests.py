import math
from unittest import mock
import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
from django.test import SimpleTestCase, override_settings, tag
from apps.platoon.models import PlatoonParams
from core.exceptions import (
    CombinatorialLimitError, ModelError, NotPositiveDefiniteError, UnstableSystemError,
)
from services.controllability import (
    PlacementService, controllability_gramian, decouple_input, exhaustive_place, greedy_place,
    placement_metric, sample_chains, truncated_gramian,
)
from services.platoon_model import build_platoon_system, spectral_radius


def platoon(n):
    return build_platoon_system(PlatoonParams.uniform(n))


class DecoupleInputTests(SimpleTestCase):

    def test_splits_locations_and_coefficients(self):
        B = np.array([[2.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, -3.0, 0.0]])
        decoupling = decouple_input(B)
        assert_array_equal(decoupling.B_loc, [[1, 0, 0], [0, 0, 0], [0, 1, 0]])
        assert_array_equal(np.diag(decoupling.E), [2.0, -3.0, 1.0])
        assert_array_equal(decoupling.reconstruct(), B)

    def test_platoon_input_is_already_binary(self):
        system = platoon(3)
        decoupling = decouple_input(system.B_full)
        assert_array_equal(decoupling.B_loc, system.B_full)
        assert_array_equal(decoupling.E, np.eye(3))

    def test_column_with_two_nonzeros(self):
        with self.assertRaisesRegex(ModelError, 'Column 2'):
            decouple_input(np.array([[1.0, 1.0], [0.0, 1.0]]))


class ControllabilityGramianTests(SimpleTestCase):

    def test_scalar_cases(self):
        self.assertAlmostEqual(controllability_gramian([[0.0]], [[1.0]]).W[0, 0], 1.0, places=12)
        self.assertAlmostEqual(controllability_gramian([[0.5]], [[1.0]]).W[0, 0], 4.0 / 3.0, places=12)

    def test_unstable_system(self):
        with self.assertRaises(UnstableSystemError):
            controllability_gramian([[1.0]], [[1.0]])

    def test_matches_truncated_sum(self):
        system = platoon(3)
        for selection in ([1], [2], [1, 2], [1, 2, 3]):
            B_S = system.input_columns(selection)
            W = controllability_gramian(system.A, B_S).W
            reference = truncated_gramian(system.A, B_S, 5000)
            assert_allclose(W, reference, atol=1e-8 * (1.0 + np.linalg.norm(B_S @ B_S.T)))

    def test_residual_and_symmetry(self):
        for n in (3, 20):
            system = platoon(n)
            result = controllability_gramian(system.A, system.B_full)
            Q = system.B_full @ system.B_full.T
            self.assertLessEqual(result.residual, 1e-8 * (1.0 + np.linalg.norm(Q)))
            assert_array_equal(result.W, result.W.T)

    def test_service_checks_stability_once(self):
        system = platoon(5)
        with mock.patch('services.controllability.spectral_radius', wraps=spectral_radius) as counted:
            service = PlacementService(system)
        self.assertEqual(counted.call_count, 1)
        self.assertEqual(len(service.column_gramians), 5)
        with self.assertRaises(UnstableSystemError):
            controllability_gramian([[0.5]], [[1.0]], spectral_radius_value=1.2)

    def test_gramian_is_additive_over_columns(self):
        system = platoon(3)
        service = PlacementService(system)
        direct = controllability_gramian(system.A, system.input_columns([1, 3])).W
        assert_allclose(service.gramian([1, 3]), direct, atol=1e-12)


class PlacementMetricTests(SimpleTestCase):

    def test_identity_and_scaled_identity(self):
        self.assertAlmostEqual(placement_metric(np.eye(2), 0.0), 0.0, places=12)
        self.assertAlmostEqual(placement_metric(2.0 * np.eye(2), 0.0), -2.0 * math.log(2.0), places=12)

    def test_regularization_makes_singular_gramian_usable(self):
        W = np.diag([1.0, 0.0])
        with self.assertRaises(NotPositiveDefiniteError):
            placement_metric(W, 0.0)
        self.assertAlmostEqual(placement_metric(W, 1e-8), -math.log(1.0 + 1e-8) - math.log(1e-8), places=9)

    def test_negative_epsilon(self):
        with self.assertRaises(ModelError):
            placement_metric(np.eye(2), -1.0)


class GreedyPlacementTests(SimpleTestCase):

    def test_three_vehicles_two_actuators(self):
        selection = greedy_place(platoon(3), 2)
        self.assertEqual(set(selection.selected), {1, 2})
        self.assertEqual(selection.size, 2)
        self.assertEqual(len(selection.marginal_gains), 2)
        self.assertEqual(selection.objective, selection.objective_trace[-1])

    def test_prefix_property(self):
        service = PlacementService(platoon(3))
        full = service.greedy(3).selected
        for m in (1, 2):
            self.assertEqual(service.greedy(m).selected, full[:m])

    def test_every_pick_lowers_the_objective(self):
        selection = greedy_place(platoon(3), 3)
        self.assertTrue(all(gain > 0 for gain in selection.marginal_gains))
        self.assertEqual(selection.objective_trace, sorted(selection.objective_trace, reverse=True))

    def test_reflection_symmetry_of_the_objective(self):
        service = PlacementService(platoon(3))
        self.assertAlmostEqual(service.objective([1]), service.objective([3]), places=8)
        self.assertAlmostEqual(service.objective([1, 2]), service.objective([2, 3]), places=8)

    def test_matches_exhaustive_search(self):
        system = platoon(3)
        for m in (1, 2):
            greedy = greedy_place(system, m)
            best = exhaustive_place(system, m)
            self.assertGreaterEqual(greedy.objective, best.objective - 1e-9)
            self.assertAlmostEqual(greedy.objective, best.objective, places=8)

    def test_budget_out_of_range(self):
        service = PlacementService(platoon(3))
        for m in (0, 4, 1.5):
            with self.assertRaises(ModelError):
                service.greedy(m)

    @override_settings(ASAP_MAX_SUBSETS=10)
    def test_exhaustive_refuses_large_enumerations(self):
        with self.assertRaises(CombinatorialLimitError):
            exhaustive_place(platoon(6), 3)

    def test_threaded_evaluation_agrees(self):
        system = platoon(5)
        serial = PlacementService(system, max_workers=1).greedy(3)
        threaded = PlacementService(system, max_workers=4).greedy(3)
        self.assertEqual(serial.selected, threaded.selected)
        self.assertEqual(serial.objective_trace, threaded.objective_trace)

    def test_selection_for_fixed_locations(self):
        service = PlacementService(platoon(3))
        selection = service.selection_for([3, 1])
        self.assertEqual(selection.selected, [3, 1])
        self.assertAlmostEqual(selection.objective, service.objective([1, 3]), places=10)
        with self.assertRaises(ModelError):
            service.selection_for([1, 1])


class DiminishingReturnsTests(SimpleTestCase):

    def test_three_vehicle_chains(self):
        service = PlacementService(platoon(3))
        chains = sample_chains(3, 100, np.random.default_rng(7))
        self.assertEqual(service.diminishing_returns_violations(chains), [])

    def test_twenty_vehicle_chains(self):
        service = PlacementService(platoon(20))
        chains = sample_chains(20, 100, np.random.default_rng(11))
        self.assertEqual(service.diminishing_returns_violations(chains), [])

    def test_sampled_chains_are_nested(self):
        for small, large, element in sample_chains(10, 50, np.random.default_rng(3)):
            self.assertTrue(set(small) <= set(large))
            self.assertNotIn(element, large)


@tag('slow')
class TwentyVehiclePlacementTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.selection = PlacementService(platoon(20)).greedy(12)

    def test_selections_are_nested(self):
        s8, s9, s12 = (set(self.selection.selected[:m]) for m in (8, 9, 12))
        self.assertTrue(s8 < s9 < s12)
        self.assertEqual(len(s9 - s8), 1)
        self.assertEqual(len(s12 - s9), 3)

    def test_greedy_sets_for_the_printed_model(self):
        s8, s9, s12 = (set(self.selection.selected[:m]) for m in (8, 9, 12))
        self.assertEqual(s8, {1, 4, 8, 9, 13, 14, 16, 20})
        self.assertEqual(s9 - s8, {5})
        self.assertEqual(s12 - s9, {6, 11, 18})
