"""
Evaluate a saved agent against both strategy pools.

Usage:
    python manage.py eval --agent runs/train/.../agent.ckpt --oae runs/train/.../oae.ckpt \
        --memory runs/train/.../memory.jsonl --eval-games 200
    python manage.py eval --agent runs/train/.../qtable.jsonl
"""

from services.exceptions import ConfigurationError
from services.harness import ExperimentContext, emit_results, evaluate

from experiments.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Greedy evaluation of a saved agent; parameters and memory are left untouched'
    command_name = 'eval'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_component_arguments(parser, agent=True)

    def run(self, config, options):
        if not options.get('agent'):
            raise ConfigurationError("eval needs --agent")
        context = ExperimentContext.resolve(config)
        agent, oae, _ = self.load_learner(options, config, context.matrix)
        if agent.s != context.matrix.size:
            raise ConfigurationError(
                f"Agent plays {agent.s} actions but '{context.matrix.game_name}' has {context.matrix.size}"
            )

        config = config.replace(pathway=agent.pathway.value)
        context = ExperimentContext(config=config, matrix=context.matrix, pool=context.pool, game=context.game)
        output_dir = self.output_path(config, agent.pathway.value)
        run = self.begin(config, pathway=agent.pathway.value, oae_mode=agent.pathway.oae_mode or '',
                         output_dir=output_dir)

        rows = evaluate(agent, context, epoch=0)
        self.record_rows(run, rows)
        config.write_yaml(output_dir / 'config.yaml')
        emit_results(rows, output_dir)

        self.finish_run(run, checkpoint_hash=agent.fingerprint(), oae_hash=oae.fingerprint() if oae else '')
        for row in rows:
            self.stdout.write(f"{row.label:<14} {row.pool:<4} mean ΔR {row.mean_delta_r:+.4f} ± {row.stderr:.4f}")
