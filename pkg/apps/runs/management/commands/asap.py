import dataclasses
import json
import logging
from pathlib import Path
from django.core.management.base import BaseCommand
from apps.runs.serializers import RunConfigSerializer
from core.error_handling import command_exception_handler
from core.exceptions import ConfigError
from services import export_service
from services.asap_pipeline import AsapPipeline

logger = logging.getLogger('asap')

STAGES = ['model', 'place', 'saturate', 'validate', 'export', 'run']


def load_run_config(path, out=None, seed=None):
    """
    Parse and validate a versioned JSON run configuration.

    Args:
        path: Location of the JSON document
        out: Overrides output_dir when given
        seed: Overrides sim.seed when given

    Returns:
        RunConfig
    """
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")

    serializer = RunConfigSerializer(data=raw)
    if not serializer.is_valid():
        raise ConfigError(f"Invalid config {path}: {json.dumps(serializer.errors, sort_keys=True)}",
                          errors=serializer.errors)
    config = serializer.save()

    if seed is not None:
        config = dataclasses.replace(config, sim=dataclasses.replace(config.sim, seed=seed))
    if out is not None:
        config = dataclasses.replace(config, output_dir=str(out))
    return config


class Command(BaseCommand):
    help = 'Run the two-stage actuator placement and saturation defense on a platoon config'

    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Path to the JSON run configuration')
        parser.add_argument('--out', default=None, help='Output directory (overrides output_dir)')
        parser.add_argument('--seed', type=int, default=None, help='Monte Carlo seed (overrides sim.seed)')
        parser.add_argument('--quiet', action='store_true', help='Only log warnings and errors')
        parser.add_argument('--stage', choices=STAGES, default='run',
                            help='Stop after this stage (default: run)')

    def handle(self, *args, **options):
        self._configure_logging(options)
        stage = 'config'
        try:
            config = load_run_config(options['config'], out=options['out'], seed=options['seed'])
            pipeline = AsapPipeline(config)
            out_dir = Path(config.output_dir)
            for stage in STAGES[:STAGES.index(options['stage']) + 1]:
                getattr(self, f"cmd_{stage}")(pipeline, out_dir)
        except Exception as exc:
            raise command_exception_handler(exc, stage)

        logger.info(f"[RUN] Stage '{options['stage']}' finished; artifacts in {out_dir}")

    def _configure_logging(self, options):
        if options['quiet']:
            logger.setLevel(logging.WARNING)
        elif options.get('verbosity', 1) >= 2:
            logger.setLevel(logging.DEBUG)

    # ============= STAGES =============

    def cmd_model(self, pipeline, out_dir):
        system, danger, rho = pipeline.model()
        export_service.export_model(out_dir, system, danger, rho)

    def cmd_place(self, pipeline, out_dir):
        selection = pipeline.place()
        export_service.export_selection(
            out_dir, selection, pipeline.config.reference_selection, pipeline.reference_match,
        )

    def cmd_saturate(self, pipeline, out_dir):
        export_service.export_saturation(out_dir, pipeline.saturate(), pipeline.place())

    def cmd_validate(self, pipeline, out_dir):
        export_service.export_mc_report(out_dir, pipeline.validate())

    def cmd_export(self, pipeline, out_dir):
        written = export_service.export_projections(out_dir, pipeline.projections())
        logger.info(f"[EXPORT] {len(written)} projection files written")

    def cmd_run(self, pipeline, out_dir):
        export_service.export_report(out_dir, pipeline.run())
