"""
Experiment Harness Services for adaptlab.

Orchestrates everything the management commands run:

- populate_memory: warm-up games that fill the past game memory
- pretrain_oae: estimator training on that memory, then freezing
- run_training: policy training with an evaluation block every
  ``eval_every`` epochs against the old and new strategy pools
- run_transfer: estimator reuse across games (new-trained vs reused)
- run_grid: the pathway × seed comparison grid, optionally in worker processes
- emit_results / read_results: results.csv and summary.json

Key Features:
- One seed determines every random draw; independent streams are spawned
  per concern (memory, estimator, agent init, training) and evaluation uses
  a stream derived from (seed, epoch, pool) so a block never disturbs training
- Evaluation acts greedily, never learns and never inserts into memory; the
  agent fingerprint is checked across every block
- The frozen estimator fingerprint is checked at the end of every run
"""

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .agents import build_agent
from .config import ExperimentConfig
from .exceptions import ConfigurationError, GameDomainError, TrainingError
from .game_core import GameConfig, HistoryView, PayoffMatrix, play_repeated_game, resolve_game
from .history_memory import PastMemory
from .neural_core import build_optimizer
from .oae import OpponentActionEstimator, train_oae
from .policy import Learner, Pathway
from .strategies import StrategyPool, load_pool, sample_opponent

logger = logging.getLogger(__name__)

POOLS = ('old', 'new')
STREAMS = ('memory', 'oae', 'agent', 'train')

VARIANT_NEW_TRAINED = 'new_trained'
VARIANT_REUSED = 'reused'


# =============================================================================
# RESULT ROWS
# =============================================================================

@dataclass(frozen=True)
class ResultRow:
    pathway: str
    pool: str
    mean_delta_r: float
    stderr: float
    games: int
    seed: int
    game: str = ''
    epoch: int = 0
    variant: str = ''

    @property
    def label(self) -> str:
        label = Pathway(self.pathway).label
        return f"{label} [{self.variant}]" if self.variant else label


RESULT_COLUMNS = [f.name for f in fields(ResultRow)]


def summarize_deltas(deltas: Sequence[float]) -> Tuple[float, float]:
    """Mean and standard error of per-game score differences."""
    if not deltas:
        raise GameDomainError("Cannot summarize an empty evaluation block")
    mean = math.fsum(deltas) / len(deltas)
    if len(deltas) < 2:
        return mean, 0.0
    return mean, float(np.std(np.asarray(deltas), ddof=1) / math.sqrt(len(deltas)))


# =============================================================================
# CONTEXT AND RANDOM STREAMS
# =============================================================================

@dataclass
class ExperimentContext:
    config: ExperimentConfig
    matrix: PayoffMatrix
    pool: StrategyPool
    game: GameConfig

    @classmethod
    def resolve(cls, config: ExperimentConfig) -> 'ExperimentContext':
        """Raises ConfigurationError for anything that cannot be resolved."""
        try:
            matrix = resolve_game(config.game, config.game_file)
        except GameDomainError as exc:
            raise ConfigurationError(str(exc)) from exc
        pool = load_pool(config.pool_file).validate()
        return cls(config=config, matrix=matrix, pool=pool,
                   game=GameConfig(game_name=matrix.game_name, turns=config.turns, seed=config.seed))


def rng_streams(seed: int) -> Dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


def eval_rng(seed: int, epoch: int, pool: str) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, POOLS.index(pool)])


class RandomLearner:
    """Uniformly random actions; fills the memory before any agent exists."""

    def __init__(self, s: int, rng: np.random.Generator):
        self.s = s
        self.rng = rng

    def __call__(self, view: HistoryView) -> int:
        return int(self.rng.integers(self.s))


# =============================================================================
# MEMORY AND ESTIMATOR
# =============================================================================

def populate_memory(config: ExperimentConfig, rng: np.random.Generator, agent: Optional[Learner] = None,
                    context: Optional[ExperimentContext] = None) -> PastMemory:
    """
    Play ``warmup_games`` games against uniformly drawn old-pool opponents
    and insert each into a fresh memory. With ``agent`` the learner seat is
    played greedily by that agent instead of uniformly at random.
    """
    ctx = context or ExperimentContext.resolve(config)
    memory = PastMemory(capacity=config.memory_capacity, game_name=ctx.matrix.game_name)
    random_learner = RandomLearner(ctx.matrix.size, rng)
    for _ in range(config.warmup_games):
        opponent = sample_opponent(ctx.pool, 'old', rng).player(rng, ctx.matrix)
        if agent is not None:
            record = agent.play_game(ctx.game, opponent, ctx.matrix, training=False, rng=rng)
        else:
            record = play_repeated_game(ctx.game, random_learner, opponent, matrix=ctx.matrix)
        memory.insert_with_eviction(record)
    mean_delta = math.fsum(rec.delta_r for rec in memory) / len(memory) if len(memory) else 0.0
    logger.info(
        f"Populated '{ctx.matrix.game_name}' memory with {len(memory)} records "
        f"from {config.warmup_games} warm-up games (mean ΔR {mean_delta:.3f})"
    )
    return memory


def build_oae(config: ExperimentConfig, s: int, rng: np.random.Generator,
              mode: Optional[str] = None) -> OpponentActionEstimator:
    """Untrained estimator with the configured sizes and optimizer."""
    return OpponentActionEstimator(
        s,
        hidden_size=config.hidden_size,
        hops=config.hops,
        mode=mode or config.pathway_oae_mode,
        target=config.oae_target,
        rng=rng,
        init_scale=config.init_scale,
        optimizer=build_optimizer(config.optimizer, config.adam_beta1, config.adam_beta2, config.adam_eps),
    )


def pretrain_oae(config: ExperimentConfig, memory: PastMemory, rng: np.random.Generator,
                 mode: Optional[str] = None, s: Optional[int] = None) -> OpponentActionEstimator:
    s = s if s is not None else ExperimentContext.resolve(config).matrix.size
    oae = build_oae(config, s, rng, mode=mode)
    result = train_oae(oae, memory, config.oae_epochs, rng, lr=config.oae_lr, k=config.k)
    logger.info(f"Estimator trained: final L1 {result.final_loss}, fingerprint {oae.fingerprint()[:12]}")
    return oae


# =============================================================================
# TRAINING AND EVALUATION
# =============================================================================

@dataclass
class TrainingOutcome:
    config: ExperimentConfig
    agent: Learner
    rows: List[ResultRow] = field(default_factory=list)
    oae: Optional[OpponentActionEstimator] = None
    memory: Optional[PastMemory] = None
    oae_fingerprint: Optional[str] = None

    @property
    def agent_fingerprint(self) -> str:
        return self.agent.fingerprint()


def evaluate(agent: Learner, context: ExperimentContext, epoch: int = 0, variant: str = '',
             games: Optional[int] = None) -> List[ResultRow]:
    """Greedy play against each pool; parameters and memory are left untouched."""
    config = context.config
    games = games or config.eval_games
    before = agent.fingerprint()
    rows = []
    for pool in POOLS:
        rng = eval_rng(config.seed, epoch, pool)
        deltas = []
        for _ in range(games):
            opponent = sample_opponent(context.pool, pool, rng).player(rng, context.matrix)
            record = agent.play_game(context.game, opponent, context.matrix, training=False, rng=rng)
            deltas.append(record.delta_r)
        mean, stderr = summarize_deltas(deltas)
        rows.append(ResultRow(
            pathway=agent.pathway.value,
            pool=pool,
            mean_delta_r=mean,
            stderr=stderr,
            games=games,
            seed=config.seed,
            game=context.matrix.game_name,
            epoch=epoch,
            variant=variant,
        ))
    if agent.fingerprint() != before:
        raise TrainingError(f"Evaluation at epoch {epoch} changed the agent's parameters")
    return rows


def run_training(config: ExperimentConfig, oae: Optional[OpponentActionEstimator] = None,
                 memory: Optional[PastMemory] = None, variant: str = '',
                 on_rows: Optional[Callable[[List[ResultRow]], None]] = None) -> TrainingOutcome:
    """
    Train the configured pathway against old-pool opponents, evaluating every
    ``eval_every`` epochs. Estimator pathways build their memory and estimator
    from the seed unless they are handed in.
    """
    ctx = ExperimentContext.resolve(config)
    streams = rng_streams(config.seed)
    pathway = Pathway(config.pathway)

    if pathway.uses_oae:
        if memory is None:
            memory = populate_memory(config, streams['memory'], context=ctx)
        if oae is None:
            oae = pretrain_oae(config, memory, streams['oae'], mode=pathway.oae_mode, s=ctx.matrix.size)
    agent = build_agent(config, ctx.matrix.size, oae=oae, memory=memory, rng=streams['agent'])
    oae_fingerprint = oae.fingerprint() if oae is not None else None

    outcome = TrainingOutcome(config=config, agent=agent, oae=oae if pathway.uses_oae else None,
                              memory=memory if pathway.uses_oae else None, oae_fingerprint=oae_fingerprint)
    logger.info(
        f"Training {pathway.label} on '{ctx.matrix.game_name}' seed {config.seed} "
        f"for {config.epochs} epochs{f' ({variant})' if variant else ''}"
    )

    rng = streams['train']
    window: List[float] = []
    for epoch in range(1, config.epochs + 1):
        opponent = sample_opponent(ctx.pool, 'old', rng).player(rng, ctx.matrix)
        record = agent.play_game(ctx.game, opponent, ctx.matrix, training=True, rng=rng)
        agent.learn()
        if outcome.memory is not None:
            outcome.memory.insert_with_eviction(record)
        window.append(record.delta_r)

        if epoch % config.eval_every == 0:
            rows = evaluate(agent, ctx, epoch=epoch, variant=variant)
            outcome.rows.extend(rows)
            cells = ', '.join(f"{row.pool} {row.mean_delta_r:+.3f}" for row in rows)
            logger.info(
                f"{pathway.label} epoch {epoch}/{config.epochs}: train ΔR {math.fsum(window) / len(window):+.3f}, "
                f"eval {cells}"
            )
            window.clear()
            if on_rows is not None:
                on_rows(rows)

    if oae is not None and oae.fingerprint() != oae_fingerprint:
        raise TrainingError("The frozen opponent action estimator changed during policy training")
    return outcome


# =============================================================================
# TRANSFER
# =============================================================================

@dataclass
class TransferOutcome:
    source_fingerprint: str
    new_trained: TrainingOutcome
    reused: TrainingOutcome

    @property
    def rows(self) -> List[ResultRow]:
        return self.new_trained.rows + self.reused.rows

    @property
    def reused_fingerprint(self) -> str:
        return self.reused.oae_fingerprint


def run_transfer(source_config: ExperimentConfig, target_config: ExperimentConfig,
                 source_oae: Optional[OpponentActionEstimator] = None) -> TransferOutcome:
    """
    Train two target-game agents that differ only in where their estimator
    came from: trained on the target game, or reused unchanged from the
    source game (actions mapped by index).

    Raises:
        ConfigurationError: the games have different numbers of actions, or
            the pathway does not use an estimator.
    """
    pathway = Pathway(target_config.pathway)
    if not pathway.uses_oae:
        raise ConfigurationError(f"Transfer needs an estimator pathway, got {pathway.label}")
    source_ctx = ExperimentContext.resolve(source_config)
    target_ctx = ExperimentContext.resolve(target_config)
    if source_ctx.matrix.size != target_ctx.matrix.size:
        raise ConfigurationError(
            f"Cannot reuse a {source_ctx.matrix.size}-action estimator on a {target_ctx.matrix.size}-action game"
        )

    if source_oae is None:
        source_streams = rng_streams(source_config.seed)
        source_memory = populate_memory(source_config, source_streams['memory'], context=source_ctx)
        source_oae = pretrain_oae(source_config, source_memory, source_streams['oae'],
                                  mode=pathway.oae_mode, s=source_ctx.matrix.size)
    elif source_oae.mode.value != pathway.oae_mode:
        raise ConfigurationError(f"{pathway.label} needs a {pathway.oae_mode} estimator, got {source_oae.mode.value}")
    source_fingerprint = source_oae.fingerprint()

    target_streams = rng_streams(target_config.seed)
    target_memory = populate_memory(target_config, target_streams['memory'], context=target_ctx)
    target_oae = pretrain_oae(target_config, target_memory, target_streams['oae'],
                              mode=pathway.oae_mode, s=target_ctx.matrix.size)

    logger.info(
        f"Transfer {source_ctx.matrix.game_name} -> {target_ctx.matrix.game_name} "
        f"for {pathway.label}, seed {target_config.seed}"
    )
    new_trained = run_training(target_config, oae=target_oae, memory=target_memory.copy(),
                               variant=VARIANT_NEW_TRAINED)
    reused = run_training(target_config, oae=source_oae, memory=target_memory.copy(), variant=VARIANT_REUSED)

    if source_oae.fingerprint() != source_fingerprint:
        raise TrainingError("The reused estimator changed during target-game training")
    return TransferOutcome(source_fingerprint=source_fingerprint, new_trained=new_trained, reused=reused)


# =============================================================================
# GRID
# =============================================================================

def _run_cell(config: ExperimentConfig) -> List[ResultRow]:
    return run_training(config).rows


def run_grid(config: ExperimentConfig, pathways: Sequence[str], seeds: Optional[Sequence[int]] = None,
             workers: Optional[int] = None) -> List[ResultRow]:
    """Every pathway × seed cell for the configured game; cells are independent."""
    seeds = list(seeds or config.seeds)
    workers = workers or config.workers
    cells = [config.replace(pathway=str(pathway), seed=int(seed)) for pathway in pathways for seed in seeds]
    logger.info(f"Running {len(cells)} grid cells on {workers} worker(s)")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(cell) for cell in cells]
    return [row for rows in results for row in rows]


# =============================================================================
# RESULT FILES
# =============================================================================

def final_rows(rows: Sequence[ResultRow]) -> List[ResultRow]:
    """Rows from the last evaluation block of each (game, pathway, variant, seed)."""
    last: Dict[tuple, int] = {}
    for row in rows:
        key = (row.game, row.pathway, row.variant, row.seed)
        last[key] = max(last.get(key, row.epoch), row.epoch)
    return [row for row in rows if row.epoch == last[(row.game, row.pathway, row.variant, row.seed)]]


def summarize(rows: Sequence[ResultRow]) -> Dict[str, Dict[str, Dict[str, float]]]:
    """{game: {label: {old, new}}}: final-block mean ΔR averaged over seeds."""
    cells: Dict[Tuple[str, str, str], List[float]] = {}
    for row in final_rows(rows):
        cells.setdefault((row.game, row.label, row.pool), []).append(row.mean_delta_r)
    summary: Dict[str, Dict[str, Dict[str, float]]] = {}
    for (game, label, pool), values in cells.items():
        summary.setdefault(game, {}).setdefault(label, {})[pool] = math.fsum(values) / len(values)
    return summary


def format_table(rows: Sequence[ResultRow]) -> str:
    summary = summarize(rows)
    lines = []
    for game, cells in summary.items():
        width = max([len(label) for label in cells] + [len('Pathway')])
        lines.append(f"{game}")
        lines.append(f"{'Pathway'.ljust(width)}  {'Old':>8}  {'New':>8}")
        for label, pools in cells.items():
            old = f"{pools['old']:+.3f}" if 'old' in pools else '-'
            new = f"{pools['new']:+.3f}" if 'new' in pools else '-'
            lines.append(f"{label.ljust(width)}  {old:>8}  {new:>8}")
        lines.append('')
    return '\n'.join(lines)


def emit_results(rows: Sequence[ResultRow], output_dir: Union[str, Path]) -> Tuple[Path, Path]:
    """Write results.csv and summary.json into ``output_dir``."""
    if not rows:
        raise GameDomainError("No result rows to emit")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    csv_path = output_dir / 'results.csv'
    with open(csv_path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            data = asdict(row)
            data['mean_delta_r'] = repr(row.mean_delta_r)
            data['stderr'] = repr(row.stderr)
            writer.writerow(data)

    json_path = output_dir / 'summary.json'
    with open(json_path, 'w', encoding='utf-8') as fh:
        json.dump(summarize(rows), fh, indent=2, sort_keys=True)
        fh.write('\n')

    logger.info(f"Wrote {len(rows)} result rows to {csv_path}")
    return csv_path, json_path


def read_results(path: Union[str, Path]) -> List[ResultRow]:
    with open(path, 'r', newline='', encoding='utf-8') as fh:
        return [
            ResultRow(
                pathway=entry['pathway'],
                pool=entry['pool'],
                mean_delta_r=float(entry['mean_delta_r']),
                stderr=float(entry['stderr']),
                games=int(entry['games']),
                seed=int(entry['seed']),
                game=entry.get('game', ''),
                epoch=int(entry.get('epoch') or 0),
                variant=entry.get('variant', ''),
            )
            for entry in csv.DictReader(fh)
        ]


def write_run_outputs(outcome: TrainingOutcome, output_dir: Union[str, Path]) -> Dict[str, Path]:
    """Resolved config, result files and checkpoints for one training run."""
    output_dir = Path(output_dir)
    paths = {'config': outcome.config.write_yaml(output_dir / 'config.yaml')}
    suffix = 'qtable.jsonl' if outcome.agent.pathway is Pathway.QLEARNING else 'agent.ckpt'
    paths['agent'] = outcome.agent.save(output_dir / suffix)
    if outcome.oae is not None:
        paths['oae'] = outcome.oae.save(output_dir / 'oae.ckpt')
    if outcome.memory is not None:
        paths['memory'] = outcome.memory.save(output_dir / 'memory.jsonl')
    if outcome.rows:
        paths['results'], paths['summary'] = emit_results(outcome.rows, output_dir)
    return paths


__all__ = [
    'POOLS',
    'RESULT_COLUMNS',
    'VARIANT_NEW_TRAINED',
    'VARIANT_REUSED',
    'ResultRow',
    'ExperimentContext',
    'TrainingOutcome',
    'TransferOutcome',
    'RandomLearner',
    'rng_streams',
    'eval_rng',
    'summarize_deltas',
    'populate_memory',
    'build_oae',
    'pretrain_oae',
    'evaluate',
    'run_training',
    'run_transfer',
    'run_grid',
    'final_rows',
    'summarize',
    'format_table',
    'emit_results',
    'read_results',
    'write_run_outputs',
]
