from django.core.management.base import CommandError

from positioning.services.exceptions import HarnessError
from positioning.services.reporting import compare_report
from positioning.services.scenario import compare_scenarios

from ._scenario_command import ScenarioCommand


class Command(ScenarioCommand):
    help = 'Simulate the 7 to 14.2 m comparison scenarios and print them next to the reference technologies'

    command_name = 'compare'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--noise', default='az', help='Noise profile: none, fig4b or az')

    def handle(self, *args, **options):
        out = self.output_dir(options)
        results = {}
        for config in compare_scenarios(self.noise(options)):
            config = config.with_overrides(**self.overrides(options))
            results[config.name] = self.run(config, out, options['save'])

        try:
            report = compare_report(results)
        except HarnessError as e:
            raise CommandError(str(e))
        path = out / 'comparison.txt'
        try:
            path.write_text(report, encoding='utf-8')
        except OSError as e:
            raise CommandError(f"Cannot write {path}: {e}")
        self.stdout.write(report)
        self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
