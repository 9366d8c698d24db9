"""
Run the pathway × seed comparison grid for one game.

Usage:
    python manage.py table --game prisoners_dilemma --workers 4
    python manage.py table --pathways qlearning,he_ad_pg,o_oae_he_ad --seeds 1,2,3 --epochs 5000
"""

from services.config import PATHWAYS
from services.exceptions import ConfigurationError
from services.harness import emit_results, format_table, run_grid

from experiments.management.base import ExperimentCommand


def _id_list(value):
    return [item.strip() for item in value.split(',') if item.strip()] if value else []


class Command(ExperimentCommand):
    help = 'Train and evaluate every pathway for every seed, then print the comparison table'
    command_name = 'table'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--pathways', help='Comma-separated pathway ids (default: all)')
        parser.add_argument('--seeds', help='Comma-separated seeds (default: the configured seeds)')

    def config_overrides(self, options):
        overrides = super().config_overrides(options)
        seeds = _id_list(options.get('seeds'))
        if seeds:
            try:
                overrides['seeds'] = [int(seed) for seed in seeds]
            except ValueError:
                raise ConfigurationError(f"--seeds must list integers, got '{options['seeds']}'") from None
        return overrides

    def run(self, config, options):
        pathways = _id_list(options.get('pathways')) or list(PATHWAYS)
        unknown = [p for p in pathways if p not in PATHWAYS]
        if unknown:
            raise ConfigurationError(f"Unknown pathways: {', '.join(unknown)}")

        output_dir = self.output_path(config, seeded=False)
        run = self.begin(config, output_dir=output_dir)
        rows = run_grid(config, pathways, seeds=config.seeds)

        config.write_yaml(output_dir / 'config.yaml')
        emit_results(rows, output_dir)
        self.record_rows(run, rows)
        self.finish_run(run)
        self.stdout.write(format_table(rows))
