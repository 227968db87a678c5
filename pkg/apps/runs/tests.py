import copy
import json
import tempfile
from pathlib import Path
from unittest import mock
import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag
from apps.runs.management.commands.asap import load_run_config
from apps.runs.serializers import RunConfigSerializer, RunReportSerializer
from apps.validation.models import McReport
from integrations.sdp.client import SdpOutcome
from services.asap_pipeline import AsapPipeline

CASE_STUDIES = Path(__file__).resolve().parent.parent.parent / 'case_studies'

THREE_VEHICLE = {
    'version': 1,
    'platoon': {'n': 3, 'dt': 0.5, 'kp': 0.2, 'kd': 0.3, 'beta': -0.1, 'd_star': 2.0,
                'v_star': 60.0, 'gamma': 1.0},
    'budget': 2,
    'sim': {'horizon': 60, 'trajectories': 120, 'seed': 42, 'strategy': 'mixed'},
    'export_dims': [['d1', 'd2'], ['d1', 'd2', 'v1']],
    'reference_selection': [1, 2],
}


def config_with(**overrides):
    config = copy.deepcopy(THREE_VEHICLE)
    for key, value in overrides.items():
        if key == 'platoon':
            config['platoon'].update(value)
        else:
            config[key] = value
    return config


class InfeasibleClient:
    def solve(self, problem):
        return SdpOutcome(status='infeasible', solver='FAKE', raw_status='infeasible')


class RunConfigSerializerTests(SimpleTestCase):

    def parse(self, data):
        serializer = RunConfigSerializer(data=data)
        return serializer, serializer.is_valid()

    def test_valid_config(self):
        serializer, valid = self.parse(config_with())
        self.assertTrue(valid, serializer.errors)
        config = serializer.save()
        self.assertEqual(config.budget, 2)
        self.assertEqual(config.platoon.n, 3)
        self.assertEqual(config.sim.horizon, 60)
        self.assertEqual(config.export_dims, (('d1', 'd2'), ('d1', 'd2', 'v1')))
        self.assertEqual(config.reference_selection, (1, 2))
        self.assertIsNone(config.fixed_selection)
        self.assertEqual(len(config.a_grid), 9)

    def test_invalid_configs(self):
        invalid = [
            config_with(version=2),
            config_with(budget=4),
            config_with(budget=0),
            config_with(a_grid=[0.5, 1.0]),
            config_with(a_grid=[0.5, 0.2]),
            config_with(export_dims=[['d1']]),
            config_with(fixed_selection=[1, 1]),
            config_with(fixed_selection=[1, 2, 3]),
            config_with(reference_selection=[1, 4]),
            config_with(reference_bounds=[0.4, 0.6]),
            config_with(reference_bounds=[0.4, -0.6, 0.0]),
            config_with(platoon={'beta': 0.1}),
            config_with(sim={'horizon': 0}),
        ]
        for data in invalid:
            serializer, valid = self.parse(data)
            self.assertFalse(valid, data)

    def test_shipped_case_studies_parse(self):
        paths = sorted(CASE_STUDIES.glob('*.json'))
        self.assertEqual(len(paths), 5)
        for path in paths:
            config = load_run_config(path)
            self.assertEqual(config.budget, len(config.reference_selection))
            self.assertEqual(len(config.reference_bounds), config.platoon.n)
            if config.platoon.n == 20:
                self.assertGreater(min(config.a_grid), 0.935)

    def test_command_line_overrides(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'config.json'
            path.write_text(json.dumps(config_with()))
            config = load_run_config(path, out='elsewhere', seed=7)
        self.assertEqual(config.output_dir, 'elsewhere')
        self.assertEqual(config.sim.seed, 7)
        self.assertEqual(config.sim.horizon, 60)


class AsapCommandTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, data, name='config.json'):
        path = self.root / name
        path.write_text(data if isinstance(data, str) else json.dumps(data))
        return path

    def run_command(self, data, stage='run', out='out'):
        path = self.write_config(data)
        call_command('asap', config=str(path), out=str(self.root / out), stage=stage, quiet=True)
        return self.root / out

    def assert_exit_code(self, code, data, stage='run'):
        with self.assertRaises(CommandError) as cm:
            self.run_command(data, stage=stage)
        self.assertEqual(cm.exception.returncode, code)
        return cm.exception

    def test_model_stage(self):
        out = self.run_command(config_with(), stage='model')
        self.assertEqual(sorted(p.name for p in out.iterdir()), ['model.json'])
        model = json.loads((out / 'model.json').read_text())
        self.assertEqual(np.array(model['A']).shape, (5, 5))
        self.assertEqual(model['state_labels'], ['d1', 'd2', 'v1', 'v2', 'v3'])
        self.assertEqual(len(model['danger_planes']), 2)
        self.assertLess(model['spectral_radius'], 1.0)

    def test_place_stage(self):
        out = self.run_command(config_with(), stage='place')
        selection = json.loads((out / 'selection.json').read_text())
        self.assertEqual(set(selection['selection']), {1, 2})
        self.assertTrue(selection['reference_match'])

    def test_fixed_selection_bypasses_greedy(self):
        out = self.run_command(config_with(fixed_selection=[1, 3], reference_selection=None), stage='place')
        selection = json.loads((out / 'selection.json').read_text())
        self.assertEqual(selection['selection'], [1, 3])
        self.assertIsNone(selection['reference_match'])

    def test_reference_mismatch_is_reported_not_raised(self):
        out = self.run_command(config_with(reference_selection=[2, 3]), stage='place')
        self.assertFalse(json.loads((out / 'selection.json').read_text())['reference_match'])

    def test_config_errors_exit_with_2(self):
        self.assert_exit_code(2, '{"version": 1, ')
        self.assert_exit_code(2, '[1, 2]')
        self.assert_exit_code(2, config_with(version=3))
        with self.assertRaises(CommandError) as cm:
            call_command('asap', config=str(self.root / 'missing.json'), quiet=True)
        self.assertEqual(cm.exception.returncode, 2)

    def test_unstable_platoon_exits_with_3(self):
        data = config_with(platoon={'n': 2, 'kp': 5.0, 'd_star': 2.0}, budget=1,
                           reference_selection=None, export_dims=[])
        self.assert_exit_code(3, data, stage='model')

    def test_no_safe_bounds_exits_with_4(self):
        with mock.patch('services.safe_bounds.SdpClient', InfeasibleClient):
            error = self.assert_exit_code(4, config_with(), stage='saturate')
        self.assertIn('a=0.1:below_spectral_bound', str(error))
        self.assertIn('a=0.9:infeasible', str(error))

    def test_danger_hit_under_certified_bounds_exits_with_5(self):
        report = McReport(states_checked=10, max_quadratic_form=1.0, containment_ratio=1.0,
                          danger_hits=2, extremal_state=[0.0] * 5)
        with mock.patch('services.asap_pipeline.simulate', return_value=report):
            self.assert_exit_code(5, config_with(), stage='validate')

    def test_reference_bound_deviation_is_reported(self):
        data = config_with(reference_bounds=[0.4690, 0.6775, 0.0])
        with self.assertLogs('asap', level='WARNING') as logs:
            out = self.run_command(data, stage='saturate')
        reference = json.loads((out / 'saturation.json').read_text())['reference']
        self.assertFalse(reference['match'])
        self.assertAlmostEqual(reference['deviation'], 0.6775 - 0.2909, delta=0.01)
        self.assertTrue(any('deviate from reference' in line for line in logs.output))

    def test_persisted_traces(self):
        data = config_with(sim={'horizon': 20, 'trajectories': 10, 'persist_traces': True})
        out = self.run_command(data, stage='validate')
        with np.load(out / 'mc_traces.npz') as archive:
            self.assertEqual(archive['traces'].shape, (10, 20, 5))


class FullRunTests(SimpleTestCase):
    """Three-vehicle run with two actuators, executed twice into separate directories."""

    ARTIFACTS = [
        'model.json', 'selection.json', 'saturation.json', 'bounds.csv', 'mc_report.json', 'report.json',
        'projection_d1-d2_original_boundary.csv', 'projection_d1-d2_final_boundary.csv',
        'projection_d1-d2_mc_scatter.csv', 'projection_d1-d2-v1_original_boundary.csv',
        'projection_d1-d2-v1_final_boundary.csv', 'projection_d1-d2-v1_mc_scatter.csv',
    ]

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        root = Path(cls.tmp.name)
        config = root / 'config.json'
        config.write_text(json.dumps(config_with()))
        cls.outputs = []
        for name in ('first', 'second'):
            call_command('asap', config=str(config), out=str(root / name), quiet=True)
            cls.outputs.append(root / name)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def test_all_artifacts_written(self):
        written = {p.name for p in self.outputs[0].iterdir()}
        self.assertTrue(set(self.ARTIFACTS) <= written)
        self.assertIn('timings.json', written)

    def test_reruns_are_byte_identical(self):
        first, second = self.outputs
        for name in self.ARTIFACTS:
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)

    def test_report_contents(self):
        report = json.loads((self.outputs[0] / 'report.json').read_text())
        self.assertNotIn('timings', report)
        self.assertEqual(len(report['bounds_table']), 3)
        self.assertEqual(set(report['selection']), {1, 2})
        self.assertTrue(report['reference_match'])
        self.assertIsNone(report['reference_bounds_match'])
        self.assertTrue(report['original_intersects'])
        self.assertFalse(report['final_intersects'])
        self.assertEqual(report['mc']['danger_hits'], 0)
        self.assertEqual(report['mc']['rng_algorithm'], 'Philox')
        unselected = [row for row in report['bounds_table'] if not row['selected']]
        self.assertEqual([row['bound'] for row in unselected], [0.0])

        timings = json.loads((self.outputs[0] / 'timings.json').read_text())
        self.assertTrue({'model', 'place', 'saturate', 'validate', 'total'} <= set(timings))

    def test_bounds_csv(self):
        lines = (self.outputs[0] / 'bounds.csv').read_text().splitlines()
        self.assertEqual(lines[0], 'vehicle,selected,bound')
        self.assertEqual(len(lines), 4)
        self.assertEqual(lines[3], '3,0,0')
        self.assertAlmostEqual(float(lines[1].split(',')[2]), 0.2148, delta=0.01)
        self.assertAlmostEqual(float(lines[2].split(',')[2]), 0.2909, delta=0.01)

    def test_projection_csvs(self):
        boundary = (self.outputs[0] / 'projection_d1-d2-v1_final_boundary.csv').read_text().splitlines()
        self.assertEqual(boundary[0], 'd1,d2,v1')
        self.assertEqual(len(boundary), 201)
        scatter = np.loadtxt(self.outputs[0] / 'projection_d1-d2_mc_scatter.csv', delimiter=',', skiprows=1)
        self.assertEqual(scatter.shape[1], 2)
        self.assertTrue(np.all(scatter[:, :2] > -2.0))


class RunReportRoundTripTests(SimpleTestCase):

    def test_report_survives_json(self):
        config = RunConfigSerializer(data=config_with(
            sim={'horizon': 30, 'trajectories': 20}, reference_bounds=[0.4690, 0.6775, 0.0],
        ))
        self.assertTrue(config.is_valid(), config.errors)
        report = AsapPipeline(config.save()).run()

        payload = json.loads(json.dumps(RunReportSerializer(report).data))
        parsed = RunReportSerializer(data=payload)
        self.assertTrue(parsed.is_valid(), parsed.errors)
        self.assertEqual(parsed.save(), report)
        self.assertFalse(report.reference_bounds_match)

    def test_bounds_table_must_have_n_rows(self):
        payload = {
            'version': 1, 'n': 3, 'budget': 1, 'selection': [1], 'marginal_gains': [1.0],
            'objective_trace': [1.0], 'reference_selection': None, 'reference_match': None,
            'bounds_table': [{'index': 1, 'selected': True, 'bound': 0.5}],
            'a_star': 0.5, 'per_a_trace': [], 'safety_distances': [], 'original_distances': [],
            'original_log_volume': 0.0, 'final_log_volume': 0.0, 'original_intersects': True,
            'final_intersects': False, 'spectral_radius': 0.9,
        }
        self.assertFalse(RunReportSerializer(data=payload).is_valid())
        payload['bounds_table'] += [{'index': 2, 'selected': False, 'bound': 0.1},
                                    {'index': 3, 'selected': False, 'bound': 0.0}]
        self.assertFalse(RunReportSerializer(data=payload).is_valid())
        payload['bounds_table'][1]['bound'] = 0.0
        self.assertTrue(RunReportSerializer(data=payload).is_valid())


@tag('slow')
class TwentyVehicleRunTests(SimpleTestCase):

    def load(self, **overrides):
        data = json.loads((CASE_STUDIES / 'twenty_vehicle_m12.json').read_text())
        data['sim']['trajectories'] = 1000
        data.update(overrides)
        config = RunConfigSerializer(data=data)
        self.assertTrue(config.is_valid(), config.errors)
        return config.save()

    def check_certificate(self, report):
        self.assertTrue(report.original_intersects)
        self.assertFalse(report.final_intersects)
        self.assertEqual(report.mc.danger_hits, 0)
        self.assertGreaterEqual(min(report.safety_distances), -1e-6)
        self.assertLessEqual(min(report.safety_distances), 2e-2)

    def test_twelve_actuator_case_study(self):
        with self.assertLogs('asap', level='WARNING') as logs:
            report = AsapPipeline(self.load()).run()

        self.assertEqual(set(report.selection), {1, 4, 5, 6, 8, 9, 11, 13, 14, 16, 18, 20})
        self.assertIs(report.reference_match, False)
        self.assertTrue(any('[AP]' in line and 'deviates from reference' in line for line in logs.output))
        self.assertIs(report.reference_bounds_match, False)
        self.assertGreater(report.a_star, 0.935)
        self.check_certificate(report)

    def test_reference_placement_has_reflection_symmetric_bounds(self):
        reference = [2, 4, 5, 7, 8, 10, 11, 13, 14, 16, 17, 19]
        report = AsapPipeline(self.load(fixed_selection=reference)).run()

        self.assertIs(report.reference_match, True)
        bounds = [row.bound for row in report.bounds_table]
        for i in reference:
            self.assertLessEqual(abs(bounds[i - 1] - bounds[20 - i]), 0.005)
        self.check_certificate(report)
