"""
Reuse an estimator trained on one game when training on another.

Trains two target-game agents that differ only in the estimator: one
trained on the target game, one reused unchanged from the source game.

Usage:
    python manage.py transfer --source-game prisoners_dilemma --game chicken --pathway o_oae_he_ad --seed 1
    python manage.py transfer --game chicken --source-oae runs/train_oae/prisoners_dilemma/one_step/seed-1/oae.ckpt
"""

from services.harness import emit_results, final_rows, run_transfer, write_run_outputs
from services.oae import OpponentActionEstimator
from services.policy import Pathway

from experiments.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Train new-trained and reused estimator variants on the target game'
    command_name = 'transfer'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--source-game', default='prisoners_dilemma',
                            help='Game the reused estimator was trained on')
        parser.add_argument('--source-game-file', help='YAML definition of the source game')
        parser.add_argument('--source-oae', help='Estimator checkpoint to reuse instead of training one')

    def run(self, config, options):
        source_config = config.replace(game=options['source_game'], game_file=options.get('source_game_file'))
        pathway = Pathway(config.pathway)
        output_dir = self.output_path(config, pathway.value)
        run = self.begin(config, pathway=pathway.value, oae_mode=pathway.oae_mode or '', output_dir=output_dir)
        if run is not None:
            run.notes = f"source game: {source_config.game_file or source_config.game}"

        source_oae = OpponentActionEstimator.load(options['source_oae']) if options.get('source_oae') else None
        outcome = run_transfer(source_config, config, source_oae=source_oae)

        for variant, training in (('new_trained', outcome.new_trained), ('reused', outcome.reused)):
            write_run_outputs(training, output_dir / variant)
        config.write_yaml(output_dir / 'config.yaml')
        source_config.write_yaml(output_dir / 'source_config.yaml')
        if outcome.rows:
            emit_results(outcome.rows, output_dir)
        self.record_rows(run, outcome.rows)

        self.finish_run(run, checkpoint_hash=outcome.reused.agent_fingerprint, oae_hash=outcome.source_fingerprint)
        for row in final_rows(outcome.rows):
            self.stdout.write(f"{row.label:<28} {row.pool:<4} mean ΔR {row.mean_delta_r:+.4f} ± {row.stderr:.4f}")
        self.stdout.write(self.style.SUCCESS(f"Reused estimator sha256 {outcome.source_fingerprint[:12]}"))
