from django.core.management.base import CommandError

from positioning.services.exceptions import ConfigError
from positioning.services.scenario import load_scenario

from ._scenario_command import ScenarioCommand


class Command(ScenarioCommand):
    help = 'Run a scenario described by a JSON config and write its CSV'

    command_name = 'simulate'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Scenario JSON file')
        super().add_arguments(parser)

    def handle(self, *args, **options):
        try:
            config = load_scenario(options['config']).with_overrides(**self.overrides(options))
        except FileNotFoundError:
            raise CommandError(f"Config file not found: {options['config']}")
        except ConfigError as e:
            raise CommandError(f"Invalid config at {e.path or '<root>'}: {e}")
        self.run(config, self.output_dir(options), options['save'])
