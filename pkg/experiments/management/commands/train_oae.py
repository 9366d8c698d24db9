"""
Pre-train and freeze an opponent action estimator.

Usage:
    python manage.py train_oae --game prisoners_dilemma --oae-mode one_step --oae-epochs 2000 --seed 1
    python manage.py train_oae --memory runs/populate_memory/.../memory.jsonl --oae-mode multi_step
"""

import csv

from services.harness import ExperimentContext, build_oae, populate_memory, rng_streams
from services.oae import train_oae

from experiments.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Train the estimator on a past game memory, freeze it and write oae.ckpt'
    command_name = 'train_oae'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--memory', help='Past game memory file; populated from the seed when omitted')

    def run(self, config, options):
        mode = config.oae_mode
        output_dir = self.output_path(config, mode)
        run = self.begin(config, oae_mode=mode, output_dir=output_dir)
        context = ExperimentContext.resolve(config)
        streams = rng_streams(config.seed)

        memory = self.load_memory(options, config, context.matrix)
        if memory is None:
            memory = populate_memory(config, streams['memory'], context=context)
            memory.save(output_dir / 'memory.jsonl')

        oae = build_oae(config, context.matrix.size, streams['oae'], mode=mode)
        result = train_oae(oae, memory, config.oae_epochs, streams['oae'], lr=config.oae_lr, k=config.k)

        config.write_yaml(output_dir / 'config.yaml')
        path = oae.save(output_dir / 'oae.ckpt')
        with open(output_dir / 'oae_losses.csv', 'w', newline='', encoding='utf-8') as fh:
            writer = csv.writer(fh, lineterminator='\n')
            writer.writerow(['epoch', 'loss'])
            for epoch, loss in enumerate(result.losses, start=1):
                writer.writerow([epoch, repr(loss)])

        fingerprint = oae.fingerprint()
        self.finish_run(run, checkpoint_hash=fingerprint, oae_hash=fingerprint)
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {mode} estimator to {path} (final L1 {result.final_loss}, sha256 {fingerprint[:12]})"
        ))
