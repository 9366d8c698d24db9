"""
Shared plumbing for the harness management commands.

Key Features:
- Common configuration flags layered over the YAML config file
- ExperimentRun bookkeeping around each harness call
- AdaptLabError converted into CommandError, with the run marked FAILED
- Deterministic output directories derived from command, game and seed
"""

import logging
from pathlib import Path
from typing import Iterable, List, Optional

from django.core.management.base import BaseCommand, CommandError

from services.agents import load_agent
from services.config import ExperimentConfig, load_config
from services.exceptions import AdaptLabError
from services.harness import ResultRow
from services.history_memory import PastMemory
from services.oae import OpponentActionEstimator

from experiments.models import EvaluationResult, ExperimentRun, storable_seed

logger = logging.getLogger(__name__)


# Flag name -> ExperimentConfig field (argparse dest is the field name)
CONFIG_FLAGS = [
    ('--game', str, 'Built-in game name (prisoners_dilemma, chicken)'),
    ('--game-file', str, 'YAML game definition, overrides --game'),
    ('--pool-file', str, 'YAML strategy pool with old/new id lists'),
    ('--pathway', str, 'Policy pathway id'),
    ('--oae-mode', str, 'Estimator mode: one_step or multi_step'),
    ('--oae-target', str, 'Estimator target: retrieved or true_future'),
    ('--oae-epochs', int, 'Estimator training epochs'),
    ('--turns', int, 'Stage games per repeated game'),
    ('--epochs', int, 'Policy training epochs'),
    ('--eval-every', int, 'Epochs between evaluation blocks'),
    ('--eval-games', int, 'Games per pool in each evaluation block'),
    ('--warmup-games', int, 'Warm-up games used to fill the memory'),
    ('--memory-capacity', int, 'Past game memory capacity'),
    ('--k', int, 'Records retrieved per estimate'),
    ('--hidden-size', int, 'Hidden size d of every network'),
    ('--hops', int, 'Memory network hops'),
    ('--lr', float, 'Policy learning rate'),
    ('--seed', int, 'Master seed'),
    ('--workers', int, 'Worker processes for grid cells'),
    ('--output-dir', str, 'Root directory for run outputs'),
]


class ExperimentCommand(BaseCommand):
    """
    Base class for commands that run the harness.

    Subclasses set ``command_name`` (one of ExperimentRun.COMMANDS) and
    implement ``run(config, run, options)``.
    """

    command_name = ''

    def add_arguments(self, parser):
        parser.add_argument('--config', help='YAML experiment config file')
        for flag, kind, help_text in CONFIG_FLAGS:
            parser.add_argument(flag, type=kind, default=None, help=help_text)
        parser.add_argument('--no-record', action='store_true',
                            help='Do not write an ExperimentRun to the database')

    # =========================================================================
    # CONFIGURATION
    # =========================================================================

    def config_overrides(self, options) -> dict:
        overrides = {}
        for flag, _, _ in CONFIG_FLAGS:
            name = flag.lstrip('-').replace('-', '_')
            overrides[name] = options.get(name)
        return overrides

    def resolve_config(self, options) -> ExperimentConfig:
        try:
            return load_config(options.get('config'), overrides=self.config_overrides(options))
        except AdaptLabError as exc:
            raise CommandError(f"Invalid configuration: {exc}") from exc

    @staticmethod
    def game_label(config: ExperimentConfig) -> str:
        return Path(config.game_file).stem if config.game_file else config.game

    def output_path(self, config: ExperimentConfig, *parts, seeded: bool = True) -> Path:
        """<output_dir>/<command>/<game>/<parts...>/seed-<seed>"""
        path = Path(config.output_dir).joinpath(self.command_name, self.game_label(config), *[str(p) for p in parts])
        return path / f"seed-{config.seed}" if seeded else path

    def add_component_arguments(self, parser, agent=False):
        if agent:
            parser.add_argument('--agent', help='Agent checkpoint (agent.ckpt or qtable.jsonl)')
        parser.add_argument('--oae', help='Frozen estimator checkpoint (oae.ckpt)')
        parser.add_argument('--memory', help='Past game memory file (memory.jsonl)')

    def load_estimator(self, options) -> Optional[OpponentActionEstimator]:
        return OpponentActionEstimator.load(options['oae']) if options.get('oae') else None

    def load_memory(self, options, config: ExperimentConfig, matrix) -> Optional[PastMemory]:
        if not options.get('memory'):
            return None
        return PastMemory.load(options['memory'], matrix, capacity=config.memory_capacity)

    def load_learner(self, options, config: ExperimentConfig, matrix):
        """(agent, estimator, memory) from the --agent, --oae and --memory files."""
        oae = self.load_estimator(options)
        memory = self.load_memory(options, config, matrix)
        agent = load_agent(options['agent'], oae=oae, memory=memory)
        return agent, oae, memory

    # =========================================================================
    # RUN BOOKKEEPING
    # =========================================================================

    def start_run(self, config: ExperimentConfig, pathway: str = '', oae_mode: str = '',
                  output_dir: Optional[Path] = None) -> Optional[ExperimentRun]:
        if self.no_record:
            return None
        run = ExperimentRun.objects.create(
            command=self.command_name,
            game=self.game_label(config),
            pathway=pathway,
            oae_mode=oae_mode,
            seed=storable_seed(config.seed),
            config=config.to_dict(),
            output_dir=str(output_dir or ''),
        )
        run.mark_started()
        return run

    def record_rows(self, run: Optional[ExperimentRun], rows: Iterable[ResultRow]) -> List[EvaluationResult]:
        if run is None:
            return []
        results = [EvaluationResult.from_row(run, row) for row in rows]
        for result in results:
            result.save()
        return results

    def finish_run(self, run: Optional[ExperimentRun], **fields):
        if run is None:
            return
        for name, value in fields.items():
            setattr(run, name, value or '')
        run.mark_completed(success=True)

    def fail_run(self, run: Optional[ExperimentRun], exc: Exception):
        if run is None:
            return
        run.add_error(type(exc).__name__, str(exc))
        run.mark_completed(success=False)

    # =========================================================================
    # EXECUTION
    # =========================================================================

    def handle(self, *args, **options):
        self.no_record = options.get('no_record', False)
        config = self.resolve_config(options)
        self.current_run = None
        try:
            return self.run(config, options)
        except (AdaptLabError, OSError) as exc:
            self.fail_run(self.current_run, exc)
            logger.error(f"{self.command_name} failed: {exc}")
            raise CommandError(str(exc)) from exc

    def begin(self, config: ExperimentConfig, **fields) -> Optional[ExperimentRun]:
        """Create the run record; failures after this point are logged on it."""
        self.current_run = self.start_run(config, **fields)
        return self.current_run

    def run(self, config: ExperimentConfig, options):
        raise NotImplementedError
