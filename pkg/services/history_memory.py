"""
History Memory Services for adaptlab.

Houses the two history stores the learner consults and the updater that
maintains the long-term one:

- CurrentHistory: joint-action prefix of the game being played
- PastMemory: capacity-bounded store of terminated games; when full, the
  record with the smallest score difference is evicted (oldest first on ties,
  and the incoming record takes part in the comparison)
- HistorySplit / suffix extraction used to build estimator targets

PastMemory serializes to JSON lines, one record per line, and round-trips
bit-exactly.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np

from .exceptions import GameDomainError, SequencingError
from .game_core import Action, GameRecord, PayoffMatrix, StageOutcome, joint_code

logger = logging.getLogger(__name__)


class OAEMode(str, Enum):
    ONE_STEP = 'one_step'
    MULTI_STEP = 'multi_step'


# =============================================================================
# CURRENT GAME HISTORY
# =============================================================================

@dataclass
class CurrentHistory:
    """Ordered (learner, opponent) action-index pairs of the ongoing game."""
    pairs: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def append_stage(self, o: StageOutcome) -> 'CurrentHistory':
        if o.turn != self.length + 1:
            raise SequencingError(f"Expected turn {self.length + 1}, got outcome for turn {o.turn}")
        self.pairs.append((o.a_learner.index, o.a_opponent.index))
        return self

    def clear(self):
        self.pairs.clear()

    def codes(self) -> np.ndarray:
        return np.asarray([joint_code(a_l, a_o) for a_l, a_o in self.pairs], dtype=np.int64)

    @classmethod
    def from_pairs(cls, pairs) -> 'CurrentHistory':
        return cls(pairs=[(int(a_l), int(a_o)) for a_l, a_o in pairs])


def append_stage(c: CurrentHistory, o: StageOutcome) -> CurrentHistory:
    return c.append_stage(o)


# =============================================================================
# PAST GAME HISTORY
# =============================================================================

class PastMemory:
    """
    Capacity-bounded store of terminated GameRecords for a single game.

    Records keep their insertion order; every record gets a monotonically
    increasing sequence number used for tie-breaking.
    """

    def __init__(self, capacity: int = 1000, game_name: Optional[str] = None):
        if capacity < 1:
            raise GameDomainError(f"Memory capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.game_name = game_name
        self.items: List[GameRecord] = []
        self._seqs: List[int] = []
        self._next_seq = 0
        self.version = 0
        self.last_evicted: Optional[GameRecord] = None
        self._matrix_cache = None

    def __len__(self):
        return len(self.items)

    def __iter__(self) -> Iterator[GameRecord]:
        return iter(self.items)

    def __getitem__(self, index: int) -> GameRecord:
        return self.items[index]

    def __repr__(self):
        return f"<PastMemory: {self.game_name or 'any'} {len(self.items)}/{self.capacity}>"

    @property
    def seqs(self) -> Tuple[int, ...]:
        return tuple(self._seqs)

    def seq_of(self, index: int) -> int:
        return self._seqs[index]

    def copy(self) -> 'PastMemory':
        """Independent memory holding the same records with the same sequence numbers."""
        clone = PastMemory(capacity=self.capacity, game_name=self.game_name)
        clone.items = list(self.items)
        clone._seqs = list(self._seqs)
        clone._next_seq = self._next_seq
        clone.version = self.version
        return clone

    def _check_record(self, rec: GameRecord):
        if rec.n < 1 or not math.isfinite(rec.delta_r):
            raise GameDomainError("Only complete records with final scores can be stored")
        if self.game_name is None:
            self.game_name = rec.game_name or None
        elif rec.game_name and rec.game_name != self.game_name:
            raise GameDomainError(
                f"Record from game '{rec.game_name}' cannot enter the '{self.game_name}' memory"
            )

    def insert_with_eviction(self, rec: GameRecord) -> Optional[GameRecord]:
        """
        Append ``rec``; at capacity, evict the minimum-ΔR record of the
        resulting set. Returns the evicted record (possibly ``rec`` itself).
        """
        self._check_record(rec)
        self.items.append(rec)
        self._seqs.append(self._next_seq)
        self._next_seq += 1
        self.last_evicted = None

        if len(self.items) > self.capacity:
            # list order is insertion order, so the first minimum is the oldest
            victim = min(range(len(self.items)), key=lambda i: self.items[i].delta_r)
            self.last_evicted = self.items.pop(victim)
            self._seqs.pop(victim)

        self.version += 1
        self._matrix_cache = None
        return self.last_evicted

    def code_matrix(self):
        """
        Vectorised view for retrieval.

        Returns ``(codes, lengths, deltas, seqs)`` where ``codes`` is an
        (N, max_len) int array of joint codes padded with -1.
        """
        if self._matrix_cache is None:
            count = len(self.items)
            max_len = max((rec.n for rec in self.items), default=0)
            codes = np.full((count, max_len), -1, dtype=np.int64)
            lengths = np.zeros(count, dtype=np.int64)
            for row, rec in enumerate(self.items):
                codes[row, :rec.n] = rec.joint_codes
                lengths[row] = rec.n
            deltas = np.asarray([rec.delta_r for rec in self.items], dtype=np.float64)
            seqs = np.asarray(self._seqs, dtype=np.int64)
            self._matrix_cache = (codes, lengths, deltas, seqs)
        return self._matrix_cache

    # =========================================================================
    # SERIALIZATION
    # =========================================================================

    def dumps(self) -> str:
        lines = []
        for rec in self.items:
            lines.append(json.dumps({
                'game': rec.game_name,
                'opponent': rec.opponent_id,
                'learner_actions': list(rec.learner_actions),
                'opponent_actions': list(rec.opponent_actions),
                'r_learner': rec.r_learner,
                'r_opponent': rec.r_opponent,
                'delta_r': rec.delta_r,
            }))
        return ''.join(line + '\n' for line in lines)

    @classmethod
    def loads(cls, text: str, matrix: PayoffMatrix, capacity: int = 1000) -> 'PastMemory':
        """Rebuild a memory from JSON lines; more records than ``capacity`` is an error."""
        memory = cls(capacity=capacity, game_name=matrix.game_name)
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GameDomainError(f"Memory line {lineno} is not valid JSON: {exc}") from exc
            if data.get('game') != matrix.game_name:
                raise GameDomainError(
                    f"Memory line {lineno} belongs to game '{data.get('game')}', expected '{matrix.game_name}'"
                )
            rec = GameRecord.from_actions(
                matrix,
                data['learner_actions'],
                data['opponent_actions'],
                opponent_id=data['opponent'],
                r_learner=data['r_learner'],
                r_opponent=data['r_opponent'],
            )
            if rec.delta_r != data['delta_r']:
                logger.warning(f"Memory line {lineno}: stored delta_r differs from r_learner - r_opponent")
            if len(memory) >= capacity:
                raise GameDomainError(
                    f"Memory line {lineno} exceeds the capacity of {capacity} records; "
                    f"load with a larger capacity instead of evicting saved games"
                )
            memory.insert_with_eviction(rec)
        return memory

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding='utf-8')
        logger.info(f"Saved {len(self)} records to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path], matrix: PayoffMatrix, capacity: int = 1000) -> 'PastMemory':
        memory = cls.loads(Path(path).read_text(encoding='utf-8'), matrix, capacity=capacity)
        logger.info(f"Loaded {len(memory)} records from {path}")
        return memory


def insert_with_eviction(p: PastMemory, rec: GameRecord) -> PastMemory:
    p.insert_with_eviction(rec)
    return p


# =============================================================================
# SPLITS
# =============================================================================

@dataclass(frozen=True)
class HistorySplit:
    """A record cut after ``m`` turns into prefix and suffix joint actions."""
    prefix: Tuple[Tuple[Action, Action], ...]
    suffix: Tuple[Tuple[Action, Action], ...]

    @property
    def m(self) -> int:
        return len(self.prefix)

    def joined(self) -> Tuple[Tuple[Action, Action], ...]:
        return self.prefix + self.suffix


def split_at(rec: GameRecord, m: int) -> HistorySplit:
    if not 1 <= m < rec.n:
        raise GameDomainError(f"Split point must satisfy 1 <= m < {rec.n}, got {m}")
    pairs = tuple((o.a_learner, o.a_opponent) for o in rec.outcomes)
    return HistorySplit(prefix=pairs[:m], suffix=pairs[m:])


def suffix_opponent_actions(split: HistorySplit, mode: Union[OAEMode, str]) -> List[Action]:
    """Opponent actions after the split: just the next one, or all of them."""
    mode = OAEMode(mode)
    if not split.suffix:
        raise GameDomainError("Cannot extract opponent actions from an empty suffix")
    if mode is OAEMode.ONE_STEP:
        return [split.suffix[0][1]]
    return [pair[1] for pair in split.suffix]


__all__ = [
    'OAEMode',
    'CurrentHistory',
    'PastMemory',
    'HistorySplit',
    'append_stage',
    'insert_with_eviction',
    'split_at',
    'suffix_opponent_actions',
]
