import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
from django.test import SimpleTestCase
from apps.platoon.models import DangerSet, HalfSpace, LtiSystem, PlatoonParams
from apps.platoon.serializers import PlatoonParamsSerializer
from core.exceptions import ComputationError, ModelError
from services.platoon_model import build_danger_set, build_platoon_system, spectral_radius


class PlatoonParamsTests(SimpleTestCase):

    def test_scalars_are_broadcast(self):
        params = PlatoonParams.uniform(4)
        self.assertEqual(params.kp, (0.2,) * 4)
        self.assertEqual(params.d_star, (2.0,) * 3)
        self.assertEqual(params.gamma, (1.0,) * 4)

    def test_per_vehicle_lists_are_kept(self):
        params = PlatoonParams.uniform(3, kd=[0.3, 0.25, 0.3], d_star=[2.0, 3.0])
        self.assertEqual(params.kd, (0.3, 0.25, 0.3))
        self.assertEqual(params.d_star, (2.0, 3.0))

    def test_invalid_parameters(self):
        with self.assertRaises(ModelError):
            PlatoonParams.uniform(1)
        with self.assertRaises(ModelError):
            PlatoonParams.uniform(3, dt=0.0)
        with self.assertRaises(ModelError):
            PlatoonParams.uniform(3, beta=0.1)
        with self.assertRaises(ModelError):
            PlatoonParams.uniform(3, d_star=[2.0, -1.0])
        with self.assertRaises(ModelError):
            PlatoonParams.uniform(3, gamma=0.0)
        with self.assertRaises(ModelError):
            PlatoonParams.uniform(3, kp=[0.2, 0.2])


class PlatoonModelTests(SimpleTestCase):

    def test_three_vehicle_matrix(self):
        system = build_platoon_system(PlatoonParams.uniform(3))
        expected = np.array([
            [1.0, 0.0, -0.5, 0.5, 0.0],
            [0.0, 1.0, 0.0, -0.5, 0.5],
            [0.2, 0.0, 0.6, 0.3, 0.0],
            [-0.2, 0.2, 0.3, 0.3, 0.3],
            [0.0, -0.2, 0.0, 0.3, 0.6],
        ])
        assert_allclose(system.A, expected, atol=1e-15)
        assert_array_equal(system.B_full, np.vstack([np.zeros((2, 3)), np.eye(3)]))
        self.assertEqual(system.state_labels, ('d1', 'd2', 'v1', 'v2', 'v3'))

    def test_dimensions(self):
        system = build_platoon_system(PlatoonParams.uniform(20))
        self.assertEqual(system.A.shape, (39, 39))
        self.assertEqual(system.B_full.shape, (39, 20))
        self.assertEqual(system.dim, 39)
        self.assertEqual(system.n_inputs, 20)

    def test_gap_rows_only_see_neighbouring_velocities(self):
        system = build_platoon_system(PlatoonParams.uniform(6))
        for i in range(5):
            row = system.A[i]
            self.assertEqual(row[i], 1.0)
            self.assertEqual(row[5 + i], -0.5)
            self.assertEqual(row[5 + i + 1], 0.5)
            self.assertEqual(np.count_nonzero(row), 3)

    def test_case_study_models_are_stable(self):
        for n in (3, 20):
            rho = spectral_radius(build_platoon_system(PlatoonParams.uniform(n)).A)
            self.assertLess(rho, 1.0)

    def test_large_gain_is_unstable(self):
        rho = spectral_radius(build_platoon_system(PlatoonParams.uniform(2, kp=5.0)).A)
        self.assertGreater(rho, 1.0)

    def test_spectral_radius_needs_square_matrix(self):
        with self.assertRaises(ModelError):
            spectral_radius(np.zeros((2, 3)))
        with self.assertRaises(ComputationError):
            spectral_radius(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_input_columns_are_one_based(self):
        system = build_platoon_system(PlatoonParams.uniform(3))
        assert_array_equal(system.input_columns([3, 1]), system.B_full[:, [2, 0]])
        with self.assertRaises(ModelError):
            system.input_columns([4])

    def test_label_indices(self):
        system = build_platoon_system(PlatoonParams.uniform(3))
        self.assertEqual(system.label_indices(['d1', 'd2', 'v1']), [0, 1, 2])
        self.assertEqual(system.label_indices([4, '3']), [4, 3])
        with self.assertRaises(ModelError):
            system.label_indices(['v9'])

    def test_system_shape_checks(self):
        with self.assertRaises(ModelError):
            LtiSystem(A=np.eye(2), B_full=np.ones((3, 1)), state_labels=('a', 'b'))
        with self.assertRaises(ModelError):
            LtiSystem(A=np.eye(2), B_full=np.ones((2, 1)), state_labels=('a',))


class DangerSetTests(SimpleTestCase):

    def test_one_plane_per_gap(self):
        danger = build_danger_set(PlatoonParams.uniform(3, d_star=[2.0, 3.0]))
        self.assertEqual(danger.kappa, 2)
        assert_array_equal(danger.normals(), [[-1, 0, 0, 0, 0], [0, -1, 0, 0, 0]])
        assert_array_equal(danger.offsets(), [2.0, 3.0])

    def test_contains_collision_states(self):
        danger = build_danger_set(PlatoonParams.uniform(3))
        states = np.array([
            [0.0, 0.0, 0.0, 0.0, 0.0],
            [-1.9, 0.0, 5.0, 0.0, 0.0],
            [-2.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, -3.0, 0.0, 0.0, 0.0],
        ])
        assert_array_equal(danger.contains(states), [False, False, True, True])

    def test_empty_danger_set_contains_nothing(self):
        assert_array_equal(DangerSet().contains(np.ones((3, 2))), [False] * 3)

    def test_invalid_planes(self):
        with self.assertRaises(ModelError):
            DangerSet(planes=(HalfSpace(c=np.zeros(3), b=1.0),))
        with self.assertRaises(ModelError):
            DangerSet(planes=(HalfSpace(c=np.ones(3), b=0.0),))


class PlatoonParamsSerializerTests(SimpleTestCase):

    def test_defaults_and_broadcast(self):
        serializer = PlatoonParamsSerializer(data={'n': 3, 'dt': 0.5, 'kp': 0.2, 'kd': 0.3,
                                                   'beta': -0.1, 'd_star': 2})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        params = serializer.save()
        self.assertEqual(params, PlatoonParams.uniform(3))

    def test_rejects_inconsistent_lengths(self):
        serializer = PlatoonParamsSerializer(data={'n': 3, 'dt': 0.5, 'kp': [0.2, 0.2], 'kd': 0.3,
                                                   'beta': -0.1, 'd_star': 2})
        self.assertFalse(serializer.is_valid())

    def test_rejects_booleans(self):
        serializer = PlatoonParamsSerializer(data={'n': 3, 'dt': 0.5, 'kp': True, 'kd': 0.3,
                                                   'beta': -0.1, 'd_star': 2})
        self.assertFalse(serializer.is_valid())
        self.assertIn('kp', serializer.errors)

    def test_representation_collapses_uniform_values(self):
        data = PlatoonParamsSerializer(PlatoonParams.uniform(3, kd=[0.3, 0.2, 0.3])).data
        self.assertEqual(data['kp'], 0.2)
        self.assertEqual(data['kd'], [0.3, 0.2, 0.3])
