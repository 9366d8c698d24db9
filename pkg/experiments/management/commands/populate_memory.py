"""
Fill a past game memory with warm-up games.

Usage:
    python manage.py populate_memory --game prisoners_dilemma --warmup-games 500 --seed 1
    python manage.py populate_memory --populate from-checkpoint --agent runs/.../agent.ckpt \
        --oae runs/.../oae.ckpt --memory runs/.../memory.jsonl
"""

from services.exceptions import ConfigurationError
from services.harness import ExperimentContext, populate_memory, rng_streams

from experiments.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Play warm-up games against old-pool opponents and write memory.jsonl'
    command_name = 'populate_memory'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--populate', choices=['random', 'from-checkpoint'], default=None,
                            help='Learner seat: uniform random actions or a trained agent')
        self.add_component_arguments(parser, agent=True)

    def config_overrides(self, options):
        overrides = super().config_overrides(options)
        overrides['populate'] = options.get('populate')
        return overrides

    def run(self, config, options):
        output_dir = self.output_path(config, config.populate)
        run = self.begin(config, output_dir=output_dir)
        context = ExperimentContext.resolve(config)
        streams = rng_streams(config.seed)

        agent = None
        if config.populate == 'from-checkpoint':
            if not options.get('agent'):
                raise ConfigurationError("--populate from-checkpoint needs --agent")
            agent, _, _ = self.load_learner(options, config, context.matrix)
            if run is not None:
                run.pathway = agent.pathway.value

        memory = populate_memory(config, streams['memory'], agent=agent, context=context)
        config.write_yaml(output_dir / 'config.yaml')
        path = memory.save(output_dir / 'memory.jsonl')

        self.finish_run(run)
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(memory)} records to {path}"))
