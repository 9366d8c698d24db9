"""
Game Core Services for adaptlab.

Stage games, finitely repeated games and the score-difference metric.

Key Features:
- Action / PayoffMatrix value types with the built-in Prisoner's Dilemma
  and Chicken tables
- Stage execution and the repeated-game engine
- GameRecord: one terminated game with final mean rewards
- YAML loader for additional two-player normal-form games

Conventions:
- The learner is always the row player, the opponent the column player.
- Turns are numbered from 1.
- Players are callables receiving a HistoryView; the number of turns in
  the game is never part of what they see.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .exceptions import GameDomainError, ProtocolError

logger = logging.getLogger(__name__)

MAX_SEED = 2 ** 64 - 1
JOINT_BASE = 1 << 16


# =============================================================================
# VALUE TYPES
# =============================================================================

@dataclass(frozen=True)
class Action:
    """One element of a game's action set."""
    index: int
    label: str

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class PayoffMatrix:
    """
    Complete s×s table of (row reward, column reward) pairs.

    ``entries[i][j]`` is the reward pair when the row player plays action i
    and the column player plays action j.
    """
    game_name: str
    labels: Tuple[str, ...]
    entries: Tuple[Tuple[Tuple[float, float], ...], ...]

    def __post_init__(self):
        s = len(self.labels)
        if s < 1:
            raise GameDomainError(f"Game '{self.game_name}' defines no actions")
        if len(set(self.labels)) != s:
            raise GameDomainError(f"Game '{self.game_name}' has duplicate action labels: {self.labels}")
        if len(self.entries) != s or any(len(row) != s for row in self.entries):
            raise GameDomainError(f"Game '{self.game_name}' payoff table is not {s}x{s}")
        for row in self.entries:
            for cell in row:
                if len(cell) != 2 or not all(math.isfinite(v) for v in cell):
                    raise GameDomainError(f"Game '{self.game_name}' has an invalid payoff cell: {cell}")

    @property
    def size(self) -> int:
        return len(self.labels)

    @cached_property
    def actions(self) -> Tuple[Action, ...]:
        return tuple(Action(i, label) for i, label in enumerate(self.labels))

    def action(self, key: Union[int, str]) -> Action:
        """Look up an action by index or label."""
        if isinstance(key, str):
            if key not in self.labels:
                raise GameDomainError(f"Unknown action label '{key}' for game '{self.game_name}'")
            return self.actions[self.labels.index(key)]
        return self.actions[self._index(key)]

    def _index(self, value) -> int:
        if isinstance(value, Action):
            if not (0 <= value.index < self.size) or self.labels[value.index] != value.label:
                raise GameDomainError(f"Action {value!r} does not belong to game '{self.game_name}'")
            return value.index
        if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
            raise GameDomainError(f"Expected an action, got {value!r}")
        if not 0 <= int(value) < self.size:
            raise GameDomainError(f"Action index {value} out of range for game '{self.game_name}'")
        return int(value)

    def as_dict(self) -> Dict:
        return {
            'name': self.game_name,
            'labels': list(self.labels),
            'payoffs': [[list(cell) for cell in row] for row in self.entries],
        }


@dataclass(frozen=True)
class StageOutcome:
    turn: int
    a_learner: Action
    a_opponent: Action
    r_learner: float
    r_opponent: float


@dataclass(frozen=True)
class GameConfig:
    game_name: str
    turns: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.turns < 1:
            raise GameDomainError(f"A repeated game needs at least one turn, got {self.turns}")
        if not 0 <= self.seed <= MAX_SEED:
            raise GameDomainError(f"Seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class GameRecord:
    """
    One terminated repeated game: every stage outcome plus final mean rewards.

    ``r_learner`` and ``r_opponent`` are the arithmetic means of the stage
    rewards; ``delta_r`` is their difference.
    """
    outcomes: Tuple[StageOutcome, ...]
    r_learner: float
    r_opponent: float
    delta_r: float
    opponent_id: str
    game_name: str = ''

    @property
    def n(self) -> int:
        return len(self.outcomes)

    @cached_property
    def learner_actions(self) -> Tuple[int, ...]:
        return tuple(o.a_learner.index for o in self.outcomes)

    @cached_property
    def opponent_actions(self) -> Tuple[int, ...]:
        return tuple(o.a_opponent.index for o in self.outcomes)

    @cached_property
    def joint_codes(self) -> np.ndarray:
        """Joint action per turn encoded as ``a_learner * JOINT_BASE + a_opponent``."""
        return np.asarray(
            [joint_code(o.a_learner.index, o.a_opponent.index) for o in self.outcomes],
            dtype=np.int64,
        )

    @classmethod
    def from_actions(
        cls,
        matrix: PayoffMatrix,
        learner_actions: Sequence[int],
        opponent_actions: Sequence[int],
        opponent_id: str,
        r_learner: Optional[float] = None,
        r_opponent: Optional[float] = None,
    ) -> 'GameRecord':
        """
        Rebuild a record from action index sequences.

        Stage rewards are re-derived from the payoff table. Stored final
        rewards may be passed through to keep a serialized record bit-exact.
        """
        if len(learner_actions) != len(opponent_actions):
            raise GameDomainError("Learner and opponent action sequences differ in length")
        outcomes = tuple(
            play_stage(matrix, a_l, a_o, turn)
            for turn, (a_l, a_o) in enumerate(zip(learner_actions, opponent_actions), start=1)
        )
        if r_learner is None:
            r_learner = average_reward([o.r_learner for o in outcomes])
        if r_opponent is None:
            r_opponent = average_reward([o.r_opponent for o in outcomes])
        return cls(
            outcomes=outcomes,
            r_learner=r_learner,
            r_opponent=r_opponent,
            delta_r=r_learner - r_opponent,
            opponent_id=opponent_id,
            game_name=matrix.game_name,
        )


@dataclass(frozen=True)
class HistoryView:
    """
    What a player observes before choosing its next action.

    ``own`` and ``other`` are action indices of the completed stages, from the
    observing player's point of view.
    """
    own: Tuple[int, ...] = ()
    other: Tuple[int, ...] = ()

    @property
    def turns_elapsed(self) -> int:
        return len(self.own)

    def mirrored(self) -> 'HistoryView':
        return HistoryView(own=self.other, other=self.own)


Player = Callable[[HistoryView], Union[Action, int]]
StageObserver = Callable[[StageOutcome], None]


def joint_code(a_learner: int, a_opponent: int) -> int:
    """Single integer for a joint action, independent of the alphabet size."""
    return a_learner * JOINT_BASE + a_opponent


# =============================================================================
# BUILT-IN GAMES
# =============================================================================

PRISONERS_DILEMMA = PayoffMatrix(
    game_name='prisoners_dilemma',
    labels=('C', 'D'),
    entries=(
        ((3.0, 3.0), (0.0, 5.0)),
        ((5.0, 0.0), (1.0, 1.0)),
    ),
)

CHICKEN = PayoffMatrix(
    game_name='chicken',
    labels=('S', 'G'),
    entries=(
        ((2.0, 2.0), (1.0, 5.0)),
        ((5.0, 1.0), (0.0, 0.0)),
    ),
)

BUILTIN_GAMES: Dict[str, PayoffMatrix] = {
    PRISONERS_DILEMMA.game_name: PRISONERS_DILEMMA,
    CHICKEN.game_name: CHICKEN,
}

GAME_ALIASES = {
    'pd': 'prisoners_dilemma',
    'prisoners-dilemma': 'prisoners_dilemma',
    'ipd': 'prisoners_dilemma',
}


def get_game(name: str) -> PayoffMatrix:
    """Return a built-in game by name or alias."""
    key = GAME_ALIASES.get(name.lower(), name.lower())
    try:
        return BUILTIN_GAMES[key]
    except KeyError:
        raise GameDomainError(
            f"Unknown game '{name}'. Built-in games: {', '.join(sorted(BUILTIN_GAMES))}"
        ) from None


def load_game(path: Union[str, Path]) -> PayoffMatrix:
    """
    Load a game definition from YAML.

    Expected layout::

        name: stag_hunt
        labels: [S, H]
        payoffs:
          - [[4, 4], [0, 3]]
          - [[3, 0], [3, 3]]
    """
    with open(path, 'r', encoding='utf-8') as fh:
        data = yaml.safe_load(fh) or {}

    missing = [key for key in ('name', 'labels', 'payoffs') if key not in data]
    if missing:
        raise GameDomainError(f"Game file {path} is missing keys: {', '.join(missing)}")

    try:
        entries = tuple(
            tuple((float(cell[0]), float(cell[1])) for cell in row)
            for row in data['payoffs']
        )
    except (TypeError, IndexError, ValueError) as exc:
        raise GameDomainError(f"Game file {path} has a malformed payoff table: {exc}") from exc

    matrix = PayoffMatrix(
        game_name=str(data['name']),
        labels=tuple(str(label) for label in data['labels']),
        entries=entries,
    )
    logger.info(f"Loaded game '{matrix.game_name}' with {matrix.size} actions from {path}")
    return matrix


def resolve_game(name: Optional[str] = None, path: Optional[Union[str, Path]] = None) -> PayoffMatrix:
    """A game file wins over a built-in name."""
    if path:
        return load_game(path)
    if not name:
        raise GameDomainError("Either a game name or a game file is required")
    return get_game(name)


# =============================================================================
# STAGE AND REPEATED GAME EXECUTION
# =============================================================================

def payoff_lookup(m: PayoffMatrix, a_row: Union[Action, int], a_col: Union[Action, int]) -> Tuple[float, float]:
    """Return the (row, column) reward pair for one joint action."""
    row, col = m._index(a_row), m._index(a_col)
    return m.entries[row][col]


def play_stage(m: PayoffMatrix, a_l: Union[Action, int], a_o: Union[Action, int], turn: int) -> StageOutcome:
    if turn < 1:
        raise GameDomainError(f"Stage turns start at 1, got {turn}")
    r_l, r_o = payoff_lookup(m, a_l, a_o)
    return StageOutcome(
        turn=turn,
        a_learner=m.actions[m._index(a_l)],
        a_opponent=m.actions[m._index(a_o)],
        r_learner=r_l,
        r_opponent=r_o,
    )


def average_reward(rewards: Sequence[float]) -> float:
    """Arithmetic mean of the stage rewards."""
    if len(rewards) == 0:
        raise GameDomainError("Cannot average an empty reward list")
    return math.fsum(rewards) / len(rewards)


def score_difference(rec: GameRecord) -> float:
    return rec.r_learner - rec.r_opponent


def _checked_action(m: PayoffMatrix, value, seat: str, turn: int) -> Action:
    try:
        return m.action(m._index(value))
    except GameDomainError as exc:
        raise ProtocolError(f"{seat} returned an invalid action at turn {turn}: {value!r} ({exc})") from exc


def play_repeated_game(
    cfg: GameConfig,
    learner: Player,
    opponent: Player,
    matrix: Optional[PayoffMatrix] = None,
    on_stage: Optional[StageObserver] = None,
    opponent_id: Optional[str] = None,
) -> GameRecord:
    """
    Play ``cfg.turns`` stage games between learner (row) and opponent (column).

    Each player is called once per turn with its own HistoryView. ``on_stage``,
    when given, receives every StageOutcome as soon as it is played.

    Raises:
        ProtocolError: a player returned something other than a legal action.
    """
    matrix = matrix or get_game(cfg.game_name)
    own: List[int] = []
    other: List[int] = []
    outcomes: List[StageOutcome] = []

    for turn in range(1, cfg.turns + 1):
        view = HistoryView(own=tuple(own), other=tuple(other))
        a_l = _checked_action(matrix, learner(view), 'learner', turn)
        a_o = _checked_action(matrix, opponent(view.mirrored()), 'opponent', turn)
        outcome = play_stage(matrix, a_l, a_o, turn)
        outcomes.append(outcome)
        own.append(a_l.index)
        other.append(a_o.index)
        if on_stage is not None:
            on_stage(outcome)

    r_l = average_reward([o.r_learner for o in outcomes])
    r_o = average_reward([o.r_opponent for o in outcomes])
    if opponent_id is None:
        opponent_id = getattr(opponent, 'strategy_id', None) or getattr(opponent, '__name__', type(opponent).__name__)

    return GameRecord(
        outcomes=tuple(outcomes),
        r_learner=r_l,
        r_opponent=r_o,
        delta_r=r_l - r_o,
        opponent_id=str(opponent_id),
        game_name=matrix.game_name,
    )


__all__ = [
    'Action',
    'PayoffMatrix',
    'StageOutcome',
    'GameConfig',
    'GameRecord',
    'HistoryView',
    'joint_code',
    'Player',
    'PRISONERS_DILEMMA',
    'CHICKEN',
    'BUILTIN_GAMES',
    'get_game',
    'load_game',
    'resolve_game',
    'payoff_lookup',
    'play_stage',
    'average_reward',
    'score_difference',
    'play_repeated_game',
]
