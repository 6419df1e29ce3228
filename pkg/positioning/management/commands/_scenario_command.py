"""
Shared options and plumbing of the scenario commands.
"""

import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from positioning.models import ExperimentRun
from positioning.services.exceptions import ConfigError, PositioningError
from positioning.services.reporting import emit_csv, percentile_table
from positioning.services.scenario import default_output_dir, noise_profile, run_scenario
from positioning.utils import RunProgress

logger = logging.getLogger(__name__)


def u64(value):
    seed = int(value)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed {value} is not an unsigned 64-bit integer")
    return seed


class ScenarioCommand(BaseCommand):
    """Base for commands that run scenarios and write one CSV per scenario"""

    command_name = 'simulate'
    verbosity = 1

    def add_arguments(self, parser):
        parser.add_argument('--out', type=Path, default=None,
                            help='Output directory (default: FTM_OUTPUT_DIR)')
        parser.add_argument('--seed', type=u64, default=None, help='Run seed, unsigned 64-bit')
        parser.add_argument('--repetitions', type=int, default=None, help='Repetitions per RSTA')
        parser.add_argument('--legacy-mismatch', action='store_true',
                            help='Draw the AoA from a channel realization independent of the ToF')
        parser.add_argument('--save', action='store_true', help='Store the run in the database')

    def output_dir(self, options) -> Path:
        out = Path(options['out'] or default_output_dir())
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise CommandError(f"Cannot use output directory {out}: {e}")
        return out

    def noise(self, options):
        try:
            return noise_profile(options['noise'])
        except ConfigError as e:
            raise CommandError(str(e))

    def overrides(self, options) -> dict:
        repetitions = options['repetitions']
        if repetitions is not None and repetitions < 1:
            raise CommandError('--repetitions must be at least 1')
        return {
            'seed': options['seed'],
            'repetitions': repetitions,
            'legacy_mismatch': True if options['legacy_mismatch'] else None,
        }

    def run(self, config, out: Path, save: bool):
        """Run one scenario, write its CSV and table, optionally save it"""
        echo = self.stdout.write if self.verbosity > 1 else None
        experiment = ExperimentRun.start(config, self.command_name) if save else None
        progress = RunProgress(
            run_id=str(experiment.id) if experiment else None,
            total_steps=config.repetitions * len(config.rsta_specs),
            echo=echo,
        )
        try:
            result = run_scenario(config, progress)
            csv_path = emit_csv(result, out / f"{config.name}.csv")
        except (PositioningError, OSError) as e:
            progress.set_error(str(e))
            if experiment is not None:
                experiment.mark_failed(str(e))
            raise CommandError(f"Scenario {config.name} failed: {e}")

        progress.complete()
        self.stdout.write(percentile_table(result))
        self.stdout.write(self.style.SUCCESS(f"Wrote {csv_path}"))
        if experiment is not None:
            experiment.complete(result, csv_path)
            self.stdout.write(f"Saved run {experiment.id}")
        else:
            RunProgress.cleanup_progress(progress.run_id)
        return result

    def execute(self, *args, **options):
        self.verbosity = options.get('verbosity', 1)
        return super().execute(*args, **options)
