from positioning.services.scenario import fig4a_scenario

from ._scenario_command import ScenarioCommand


class Command(ScenarioCommand):
    help = ('Run the six-RSTA room scenario (LOS and NLOS at 2, 4 and 8 m) '
            'and write the position error per AoA error as CSV')

    command_name = 'reproduce_fig4'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--noise', default='fig4b', help='Noise profile: none, fig4b or az')

    def handle(self, *args, **options):
        config = fig4a_scenario(self.noise(options), repetitions=100)
        config = config.with_overrides(**self.overrides(options))
        self.run(config, self.output_dir(options), options['save'])
