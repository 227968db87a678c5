import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
from django.test import SimpleTestCase, override_settings, tag
from apps.placement.models import ActuatorSelection
from apps.platoon.models import LtiSystem, PlatoonParams
from apps.validation.models import SimConfig
from apps.validation.serializers import McReportSerializer, SimConfigSerializer
from core.exceptions import ModelError, SimulationError
from services.ellipsoid_geometry import Ellipsoid, from_certificate
from services.platoon_model import build_danger_set, build_platoon_system
from services.reach_sim import draw_inputs, empirical_hull_points, simulate
from services.safe_bounds import assemble_report, saturate_selection


def three_vehicles():
    params = PlatoonParams.uniform(3)
    return build_platoon_system(params), build_danger_set(params)


class SimConfigTests(SimpleTestCase):

    @override_settings(ASAP_MC_HORIZON=12, ASAP_MC_SEED=9)
    def test_defaults_come_from_settings(self):
        cfg = SimConfig()
        self.assertEqual(cfg.horizon, 12)
        self.assertEqual(cfg.seed, 9)
        self.assertEqual(cfg.strategy, 'mixed')

    def test_strategy_aliases(self):
        self.assertEqual(SimConfig(strategy='extreme').strategy, 'bang_bang')
        self.assertEqual(SimConfig(strategy='bang-bang').strategy, 'bang_bang')
        with self.assertRaises(ModelError):
            SimConfig(strategy='gaussian')

    def test_invalid_sizes(self):
        with self.assertRaises(ModelError):
            SimConfig(horizon=0)
        with self.assertRaises(ModelError):
            SimConfig(trajectories=0)
        with self.assertRaises(ModelError):
            SimConfig(chunk_size=0)

    def test_serializer(self):
        serializer = SimConfigSerializer(data={'horizon': 50, 'strategy': 'uniform'})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        cfg = serializer.save()
        self.assertEqual(cfg.horizon, 50)
        self.assertFalse(cfg.persist_traces)
        self.assertFalse(SimConfigSerializer(data={'strategy': 'gaussian'}).is_valid())


class InputSamplingTests(SimpleTestCase):

    def test_inputs_stay_within_bounds(self):
        amplitudes = np.array([0.5, 2.0])
        for strategy in ('uniform', 'bang_bang'):
            cfg = SimConfig(horizon=300, strategy=strategy, seed=1)
            inputs, keys = draw_inputs(cfg, 0, amplitudes)
            self.assertEqual(inputs.shape, (300, 2))
            self.assertEqual(keys.shape, (300,))
            self.assertTrue(np.all(np.abs(inputs) <= amplitudes))

    def test_bang_bang_hits_the_extremes(self):
        amplitudes = np.array([0.5, 2.0])
        inputs, _ = draw_inputs(SimConfig(horizon=100, strategy='bang_bang'), 3, amplitudes)
        assert_array_equal(np.abs(inputs), np.broadcast_to(amplitudes, inputs.shape))

    def test_mixed_alternates_by_trajectory(self):
        amplitudes = np.array([1.0])
        cfg = SimConfig(horizon=50, strategy='mixed')
        even, _ = draw_inputs(cfg, 4, amplitudes)
        odd, _ = draw_inputs(cfg, 5, amplitudes)
        self.assertTrue(np.any(np.abs(even) < 1.0))
        assert_array_equal(np.abs(odd), 1.0)

    def test_streams_depend_on_seed_and_index(self):
        amplitudes = np.array([1.0])
        cfg = SimConfig(horizon=20, strategy='uniform', seed=5)
        first, _ = draw_inputs(cfg, 0, amplitudes)
        assert_array_equal(first, draw_inputs(cfg, 0, amplitudes)[0])
        self.assertFalse(np.array_equal(first, draw_inputs(cfg, 1, amplitudes)[0]))
        other_seed = SimConfig(horizon=20, strategy='uniform', seed=6)
        self.assertFalse(np.array_equal(first, draw_inputs(other_seed, 0, amplitudes)[0]))


class SimulateTests(SimpleTestCase):

    def setUp(self):
        self.system, self.danger = three_vehicles()
        self.selection = ActuatorSelection(selected=[1, 2])
        self.ellipsoid = Ellipsoid(np.eye(5), 2.0)

    def run_sim(self, bounds, **overrides):
        options = {'horizon': 40, 'trajectories': 60, 'seed': 3, 'chunk_size': 16, 'reservoir_size': 500}
        options.update(overrides)
        max_workers = options.pop('max_workers', None)
        return simulate(self.system, self.selection, bounds, SimConfig(**options), self.ellipsoid,
                        danger=self.danger, max_workers=max_workers)

    def test_zero_bounds_stay_at_origin(self):
        report = self.run_sim([0.0, 0.0, 0.0])
        self.assertEqual(report.states_checked, 40 * 60)
        self.assertEqual(report.containment_ratio, 1.0)
        self.assertEqual(report.danger_hits, 0)
        self.assertEqual(report.max_quadratic_form, 0.0)
        points = empirical_hull_points(report, [0, 1])
        assert_array_equal(points, [[0.0, 0.0]])

    def test_deterministic_per_seed(self):
        first = self.run_sim([0.3, 0.3, 0.0])
        second = self.run_sim([0.3, 0.3, 0.0])
        self.assertEqual(first, second)
        assert_array_equal(first.samples, second.samples)
        self.assertNotEqual(first, self.run_sim([0.3, 0.3, 0.0], seed=4))

    def test_chunking_and_threads_do_not_change_results(self):
        serial = self.run_sim([0.3, 0.3, 0.0], chunk_size=60)
        chunked = self.run_sim([0.3, 0.3, 0.0], chunk_size=7, max_workers=3)
        self.assertEqual(serial.states_checked, chunked.states_checked)
        self.assertEqual(serial.danger_hits, chunked.danger_hits)
        self.assertEqual(serial.containment_ratio, chunked.containment_ratio)
        assert_allclose(serial.max_quadratic_form, chunked.max_quadratic_form, rtol=1e-12)
        assert_allclose(serial.samples, chunked.samples, rtol=1e-12, atol=1e-15)

    def test_states_scale_linearly_with_bounds(self):
        base = self.run_sim([0.1, 0.2, 0.0])
        doubled = self.run_sim([0.2, 0.4, 0.0])
        assert_allclose(doubled.max_quadratic_form, 4.0 * base.max_quadratic_form, rtol=1e-9)
        assert_allclose(doubled.extremal_state, 2.0 * np.array(base.extremal_state), rtol=1e-9, atol=1e-15)

    def test_unselected_bounds_are_ignored(self):
        assert_array_equal(
            self.run_sim([0.3, 0.3, 0.0]).samples, self.run_sim([0.3, 0.3, 5.0]).samples,
        )

    def test_bang_bang_pushes_at_least_as_far_as_uniform(self):
        uniform = self.run_sim([0.3, 0.3, 0.0], strategy='uniform', trajectories=200)
        bang_bang = self.run_sim([0.3, 0.3, 0.0], strategy='bang_bang', trajectories=200)
        self.assertGreaterEqual(bang_bang.max_quadratic_form, uniform.max_quadratic_form)

    def test_large_bounds_reach_the_danger_set(self):
        report = self.run_sim([5.0, 5.0, 0.0], strategy='bang_bang')
        self.assertGreater(report.danger_hits, 0)
        self.assertLessEqual(report.danger_hits, report.states_checked)
        self.assertLess(report.containment_ratio, 1.0)

    def test_reservoir_and_thinning_caps(self):
        report = self.run_sim([0.3, 0.3, 0.0], reservoir_size=100)
        self.assertEqual(report.samples.shape, (100, 5))
        self.assertEqual(empirical_hull_points(report, [0, 1, 2], max_points=30).shape, (30, 3))

    def test_persisted_traces(self):
        report = self.run_sim([0.3, 0.3, 0.0], persist_traces=True)
        self.assertEqual(report.traces.shape, (60, 40, 5))
        self.assertIsNone(self.run_sim([0.3, 0.3, 0.0]).traces)

    def test_invalid_inputs(self):
        with self.assertRaises(ModelError):
            self.run_sim([0.3, 0.3])
        with self.assertRaises(ModelError):
            self.run_sim([-0.3, 0.3, 0.0])
        with self.assertRaises(ModelError):
            simulate(self.system, self.selection, [0.3, 0.3, 0.0], SimConfig(), Ellipsoid(np.eye(2), 1.0))
        with self.assertRaises(ModelError):
            empirical_hull_points(self.run_sim([0.0, 0.0, 0.0]), [0])

    def test_divergence_is_reported(self):
        system = LtiSystem(A=np.diag([1e200, 1e200]), B_full=np.eye(2), state_labels=('d1', 'v1'))
        cfg = SimConfig(horizon=5, trajectories=4, strategy='bang_bang')
        with self.assertRaises(SimulationError) as cm:
            simulate(system, [1, 2], [1.0, 1.0], cfg, Ellipsoid(np.eye(2), 1.0))
        self.assertEqual(cm.exception.details['step'], 3)

    def test_report_serializer_round_trip(self):
        report = self.run_sim([0.3, 0.3, 0.0])
        serializer = McReportSerializer(data=dict(McReportSerializer(report).data))
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.save(), report)


class CertifiedBoundsTests(SimpleTestCase):
    """Monte Carlo never leaves the certified ellipsoid under redesigned bounds."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.system, cls.danger = three_vehicles()
        cls.selection = ActuatorSelection(selected=[1, 2])
        result = saturate_selection(cls.system, cls.selection, [1.0, 1.0, 1.0], cls.danger)
        cls.bounds = assemble_report(cls.selection, result, 3)
        cls.ellipsoid = from_certificate(result.Y, result.m_s)

    def check_soundness(self, cfg):
        report = simulate(self.system, self.selection, self.bounds, cfg, self.ellipsoid, danger=self.danger)
        self.assertEqual(report.danger_hits, 0)
        self.assertEqual(report.containment_ratio, 1.0)
        self.assertLessEqual(report.max_quadratic_form, self.ellipsoid.alpha * (1.0 + 1e-6))
        projected = self.ellipsoid.project([0, 1])
        points = empirical_hull_points(report, [0, 1])
        self.assertTrue(np.all(projected.quadratic_form(points) <= self.ellipsoid.alpha + 1e-6))
        return report

    def test_short_run(self):
        self.check_soundness(SimConfig(horizon=200, trajectories=400, seed=42))

    @tag('slow')
    def test_default_runs_over_several_seeds(self):
        for seed in (1, 2, 3, 42, 2024):
            self.check_soundness(SimConfig(seed=seed))
