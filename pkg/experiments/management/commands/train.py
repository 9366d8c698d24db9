"""
Train one policy pathway with periodic evaluation.

Usage:
    python manage.py train --pathway o_oae_he_ad --game prisoners_dilemma --seed 1
    python manage.py train --pathway he_ad_pg --epochs 5000 --eval-every 500 --config exp.yaml
    python manage.py train --pathway m_oae_ad --oae runs/train_oae/.../oae.ckpt --memory runs/.../memory.jsonl
"""

from services.harness import ExperimentContext, final_rows, run_training, write_run_outputs
from services.policy import Pathway

from experiments.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Train a policy pathway against old-pool opponents, evaluating every eval_every epochs'
    command_name = 'train'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_component_arguments(parser)

    def run(self, config, options):
        pathway = Pathway(config.pathway)
        output_dir = self.output_path(config, pathway.value)
        run = self.begin(config, pathway=pathway.value, oae_mode=pathway.oae_mode or '', output_dir=output_dir)

        oae = memory = None
        if pathway.uses_oae:
            oae = self.load_estimator(options)
            memory = self.load_memory(options, config, ExperimentContext.resolve(config).matrix)

        outcome = run_training(config, oae=oae, memory=memory, on_rows=lambda rows: self.record_rows(run, rows))
        paths = write_run_outputs(outcome, output_dir)

        self.finish_run(run, checkpoint_hash=outcome.agent_fingerprint, oae_hash=outcome.oae_fingerprint)
        for row in final_rows(outcome.rows):
            self.stdout.write(
                f"{row.label:<14} {row.pool:<4} epoch {row.epoch:>6}  "
                f"mean ΔR {row.mean_delta_r:+.4f} ± {row.stderr:.4f} ({row.games} games)"
            )
        self.stdout.write(self.style.SUCCESS(f"Wrote agent to {paths['agent']}"))
