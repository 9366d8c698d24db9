"""
Opponent Strategy Library for adaptlab.

A representative catalog of classic iterated-game strategies and the
Old/New pool split used for training and held-out evaluation.

Key Features:
- Twelve strategies with per-game state and reproducible randomness
- StrategyPool with disjoint old (training) and new (held-out) sub-pools
- YAML pool files
- StrategyPlayer adapter that plugs a strategy into the game engine

Strategies reason in action indices: 0 is the cooperative action
(C in the Prisoner's Dilemma, S in Chicken), 1 the defecting one
(D, G). The same logic therefore runs unchanged on both built-in games.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .exceptions import ConfigurationError, GameDomainError
from .game_core import Action, HistoryView, PayoffMatrix

logger = logging.getLogger(__name__)

COOPERATE = 0
DEFECT = 1


# =============================================================================
# STRATEGY BASE CLASS
# =============================================================================

class Strategy:
    """
    Base class for opponent strategies.

    Subclasses implement ``step(own, other, state, rng) -> (action, state)``
    where ``own`` and ``other`` are the action indices played so far from the
    strategy's point of view. ``state`` is private per-game state created by
    ``initial_state``.
    """

    id: str = ''
    name: str = ''
    description: str = ''
    stochastic: bool = False

    def initial_state(self) -> Any:
        return None

    def step(self, own: Sequence[int], other: Sequence[int], state: Any, rng: np.random.Generator) -> Tuple[int, Any]:
        raise NotImplementedError

    def player(self, rng: Optional[np.random.Generator] = None, matrix: Optional[PayoffMatrix] = None) -> 'StrategyPlayer':
        return StrategyPlayer(self, rng=rng, matrix=matrix)

    def as_dict(self) -> Dict[str, Any]:
        return {
            'id': self.id,
            'name': self.name,
            'description': self.description,
            'stochastic': self.stochastic,
        }

    def __repr__(self):
        return f"<Strategy: {self.id}>"


class StrategyPlayer:
    """Engine-facing callable holding one game's worth of strategy state."""

    def __init__(self, strategy: Strategy, rng: Optional[np.random.Generator] = None,
                 matrix: Optional[PayoffMatrix] = None):
        self.strategy = strategy
        self.strategy_id = strategy.id
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.matrix = matrix
        self.state = strategy.initial_state()

    def __call__(self, view: HistoryView) -> Union[Action, int]:
        action, self.state = self.strategy.step(view.own, view.other, self.state, self.rng)
        if self.matrix is not None:
            return self.matrix.actions[action]
        return action


# =============================================================================
# CATALOG
# =============================================================================

class Cooperator(Strategy):
    id = 'cooperator'
    name = 'Cooperator'
    description = 'Always cooperates.'

    def step(self, own, other, state, rng):
        return COOPERATE, state


class Defector(Strategy):
    id = 'defector'
    name = 'Defector'
    description = 'Always defects.'

    def step(self, own, other, state, rng):
        return DEFECT, state


class RandomStrategy(Strategy):
    id = 'random'
    name = 'Random'
    description = 'Cooperates with probability p (0.5).'
    stochastic = True

    def __init__(self, p: float = 0.5):
        self.p = p

    def step(self, own, other, state, rng):
        return (COOPERATE if rng.random() < self.p else DEFECT), state


class TitForTat(Strategy):
    id = 'tit_for_tat'
    name = 'Tit For Tat'
    description = "Cooperates first, then repeats the opponent's last move."

    def step(self, own, other, state, rng):
        if not other:
            return COOPERATE, state
        return other[-1], state


class TitForTwoTats(Strategy):
    id = 'tit_for_two_tats'
    name = 'Tit For Two Tats'
    description = 'Defects only if the opponent defected in both of the last two rounds.'

    def step(self, own, other, state, rng):
        if len(other) >= 2 and other[-1] == DEFECT and other[-2] == DEFECT:
            return DEFECT, state
        return COOPERATE, state


class Grudger(Strategy):
    id = 'grudger'
    name = 'Grudger'
    description = 'Cooperates until the opponent defects once, then defects forever.'

    def initial_state(self):
        return False

    def step(self, own, other, state, rng):
        grudge = state or (bool(other) and other[-1] == DEFECT)
        return (DEFECT if grudge else COOPERATE), grudge


class WinStayLoseShift(Strategy):
    id = 'win_stay_lose_shift'
    name = 'Win-Stay Lose-Shift'
    description = 'Cooperates first, then cooperates iff both players made the same move last round.'

    def step(self, own, other, state, rng):
        if not own:
            return COOPERATE, state
        return (COOPERATE if own[-1] == other[-1] else DEFECT), state


class Alternator(Strategy):
    id = 'alternator'
    name = 'Alternator'
    description = 'Alternates C, D, C, D, ... starting with cooperation.'

    def step(self, own, other, state, rng):
        return (COOPERATE if len(own) % 2 == 0 else DEFECT), state


class SuspiciousTitForTat(Strategy):
    id = 'suspicious_tit_for_tat'
    name = 'Suspicious Tit For Tat'
    description = "Defects first, then repeats the opponent's last move."

    def step(self, own, other, state, rng):
        if not other:
            return DEFECT, state
        return other[-1], state


class SpitefulTitForTat(Strategy):
    id = 'spiteful_tit_for_tat'
    name = 'Spiteful Tit For Tat'
    description = 'Plays Tit For Tat until the opponent defects twice in a row, then defects forever.'

    def initial_state(self):
        return False

    def step(self, own, other, state, rng):
        spite = state or (len(other) >= 2 and other[-1] == DEFECT and other[-2] == DEFECT)
        if spite:
            return DEFECT, True
        if not other:
            return COOPERATE, False
        return other[-1], False


class HardTitForTwoTats(Strategy):
    """
    Defects if the opponent defected twice in a row within the last three
    moves, otherwise cooperates. This is the Axelrod library rule; a pair that
    reaches back past those three moves does not count.
    """

    id = 'hard_tit_for_two_tats'
    name = 'Hard Tit For Two Tats'
    description = "Defects if the opponent's last three moves contain two consecutive defections."

    def step(self, own, other, state, rng):
        window = list(other[-3:])
        for first, second in zip(window, window[1:]):
            if first == DEFECT and second == DEFECT:
                return DEFECT, state
        return COOPERATE, state


class HardTitForTat(Strategy):
    id = 'hard_tit_for_tat'
    name = 'Hard Tit For Tat'
    description = 'Cooperates first, then defects if the opponent defected in any of the last three rounds.'

    def step(self, own, other, state, rng):
        return (DEFECT if DEFECT in other[-3:] else COOPERATE), state


CATALOG: Dict[str, Strategy] = {
    strategy.id: strategy
    for strategy in (
        Cooperator(),
        Defector(),
        RandomStrategy(),
        TitForTat(),
        TitForTwoTats(),
        Grudger(),
        WinStayLoseShift(),
        Alternator(),
        SuspiciousTitForTat(),
        SpitefulTitForTat(),
        HardTitForTwoTats(),
        HardTitForTat(),
    )
}

DEFAULT_OLD = (
    'cooperator',
    'defector',
    'random',
    'tit_for_tat',
    'grudger',
    'win_stay_lose_shift',
    'alternator',
)
DEFAULT_NEW = (
    'suspicious_tit_for_tat',
    'spiteful_tit_for_tat',
    'hard_tit_for_two_tats',
    'tit_for_two_tats',
    'hard_tit_for_tat',
)


def get_strategy(strategy_id: str) -> Strategy:
    try:
        return CATALOG[strategy_id]
    except KeyError:
        raise ConfigurationError(f"Unknown strategy '{strategy_id}'") from None


def strategy_step(s: Strategy, history: HistoryView, state: Any, rng: np.random.Generator,
                  matrix: Optional[PayoffMatrix] = None) -> Tuple[Union[Action, int], Any]:
    """
    Advance a strategy by one move.

    Returns the chosen action (an Action of ``matrix`` when given, the bare
    index otherwise) and the updated state.
    """
    if len(history.own) != len(history.other):
        raise GameDomainError("Both players' histories must have the same length")
    action, state = s.step(history.own, history.other, state, rng)
    if matrix is not None:
        return matrix.actions[action], state
    return action, state


# =============================================================================
# POOLS
# =============================================================================

@dataclass(frozen=True)
class StrategyPool:
    """Old (training) and New (held-out) strategy ids; never overlapping."""
    old: Tuple[str, ...]
    new: Tuple[str, ...]

    def __post_init__(self):
        overlap = set(self.old) & set(self.new)
        if overlap:
            raise ConfigurationError(f"Strategies appear in both pools: {', '.join(sorted(overlap))}")
        for strategy_id in (*self.old, *self.new):
            get_strategy(strategy_id)

    def members(self, which: str) -> Tuple[str, ...]:
        if which == 'old':
            return self.old
        if which == 'new':
            return self.new
        raise GameDomainError(f"Pool selector must be 'old' or 'new', got '{which}'")

    def validate(self):
        """Both sub-pools must be populated before training."""
        if not self.old or not self.new:
            raise ConfigurationError("Strategy pool needs at least one old and one new strategy")
        return self

    def as_dict(self) -> Dict[str, List[str]]:
        return {'old': list(self.old), 'new': list(self.new)}


DEFAULT_POOL = StrategyPool(old=DEFAULT_OLD, new=DEFAULT_NEW)


def sample_opponent(pool: StrategyPool, which: str, rng: np.random.Generator) -> Strategy:
    """Uniform draw from the selected sub-pool."""
    members = pool.members(which)
    if not members:
        raise GameDomainError(f"The '{which}' strategy pool is empty")
    return get_strategy(members[int(rng.integers(len(members)))])


def load_pool(path: Optional[Union[str, Path]] = None) -> StrategyPool:
    """
    Load a pool file, or the default split when no path is given.

    Pool files are YAML mappings with ``old`` and ``new`` lists of ids.
    """
    if path is None:
        return DEFAULT_POOL

    with open(path, 'r', encoding='utf-8') as fh:
        data = yaml.safe_load(fh) or {}

    pool = StrategyPool(
        old=tuple(str(s) for s in data.get('old') or ()),
        new=tuple(str(s) for s in data.get('new') or ()),
    ).validate()
    logger.info(f"Loaded strategy pool from {path}: {len(pool.old)} old, {len(pool.new)} new")
    return pool


__all__ = [
    'COOPERATE',
    'DEFECT',
    'Strategy',
    'StrategyPlayer',
    'CATALOG',
    'DEFAULT_POOL',
    'StrategyPool',
    'get_strategy',
    'strategy_step',
    'sample_opponent',
    'load_pool',
]
