"""
Baseline Learner Services for adaptlab.

Two value-based learners that use only the current game history:

- QLearningAgent: tabular Q-learning over a second-order state (the last
  two joint actions, padded at the start of a game), ε-greedy, stage rewards
- DQNAgent: LSTM history encoder plus a two-layer head producing one
  Q-value per action, trained from a replay buffer toward a lagged target
  network with one-step TD targets

Both learn online during training games through ``observe`` and act greedily
without learning during evaluation.
"""

import hashlib
import json
import logging
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import GameDomainError, SequencingError
from .game_core import GameRecord, HistoryView, StageOutcome
from .history_memory import CurrentHistory
from .neural_core import (
    Feedforward,
    ParameterStore,
    SequenceEncoder,
    Tensor,
    backward,
    build_optimizer,
    detach,
    dumps_checkpoint,
    encode_joint,
    feedforward_backward_batch,
    feedforward_forward_batch,
    joint_start_token,
    lstm_backward_batch,
    lstm_forward_batch,
    optimizer_step,
    pick,
    scale,
    square,
    stack,
    sub,
    total,
)
from .policy import EncoderState, HierarchicalEncoder, Learner, Pathway

logger = logging.getLogger(__name__)

Pairs = Tuple[Tuple[int, int], ...]


# =============================================================================
# TABULAR Q-LEARNING
# =============================================================================

class QTable:
    """
    Q-values over (state, action) for a second-order Markov state.

    A state is the pair (second-to-last joint action, last joint action),
    each one of s² joint actions or the padding symbol, giving (s²+1)²
    states.
    """

    def __init__(self, s: int, alpha: float = 0.1, gamma: float = 0.9, epsilon: float = 0.1):
        self.s = s
        self.alpha = alpha
        self.gamma = gamma
        self.epsilon = epsilon
        self.pad = s * s
        self.values = np.zeros(((s * s + 1) ** 2, s))

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    def state_of(self, pairs: Sequence[Tuple[int, int]]) -> int:
        slots = [self.pad, self.pad]
        for k, (a_own, a_other) in enumerate(pairs[-2:][::-1]):
            slots[1 - k] = a_own * self.s + a_other
        return slots[0] * (self.pad + 1) + slots[1]

    def greedy(self, state: int) -> int:
        return int(np.argmax(self.values[state]))

    def check(self, state: int, action: int):
        if not 0 <= state < self.n_states:
            raise GameDomainError(f"Q-table state {state} outside 0..{self.n_states - 1}")
        if not 0 <= action < self.s:
            raise GameDomainError(f"Q-table action {action} outside 0..{self.s - 1}")

    # =========================================================================
    # SERIALIZATION
    # =========================================================================

    def dumps(self) -> str:
        lines = [json.dumps({'actions': self.s, 'alpha': self.alpha, 'gamma': self.gamma,
                             'epsilon': self.epsilon})]
        for state in range(self.n_states):
            for action in range(self.s):
                lines.append(json.dumps({'state': state, 'action': action,
                                         'value': float(self.values[state, action])}))
        return ''.join(line + '\n' for line in lines)

    @classmethod
    def loads(cls, text: str) -> 'QTable':
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise GameDomainError("Empty Q-table file")
        header = json.loads(lines[0])
        table = cls(int(header['actions']), header['alpha'], header['gamma'], header['epsilon'])
        for line in lines[1:]:
            entry = json.loads(line)
            table.check(entry['state'], entry['action'])
            table.values[entry['state'], entry['action']] = entry['value']
        return table


def qlearning_step(q: QTable, state: int, action: int, reward: float, next_state: int):
    """Q(s,a) ← Q(s,a) + α·(r + γ·max_a' Q(s',a') − Q(s,a))."""
    q.check(state, action)
    q.check(next_state, 0)
    target = reward + q.gamma * q.values[next_state].max()
    q.values[state, action] += q.alpha * (target - q.values[state, action])


class QLearningAgent(Learner):
    pathway = Pathway.QLEARNING

    def __init__(self, s: int, alpha: float = 0.1, gamma: float = 0.9, epsilon: float = 0.1):
        self.s = s
        self.table = QTable(s, alpha, gamma, epsilon)
        self.training = False
        self._rng: Optional[np.random.Generator] = None
        self.current = CurrentHistory()

    def __repr__(self):
        return f"<QLearningAgent: {self.table.n_states} states>"

    def begin_game(self, training: bool, rng: np.random.Generator):
        self.training = training
        self._rng = rng
        self.current = CurrentHistory()

    def act(self, view: HistoryView) -> int:
        if view.turns_elapsed != self.current.length:
            raise SequencingError(
                f"Agent has seen {self.current.length} turns but was asked to act after {view.turns_elapsed}"
            )
        if self.training and self._rng.random() < self.table.epsilon:
            return int(self._rng.integers(self.s))
        return self.table.greedy(self.table.state_of(self.current.pairs))

    def observe(self, outcome: StageOutcome):
        state = self.table.state_of(self.current.pairs)
        self.current.append_stage(outcome)
        if self.training:
            next_state = self.table.state_of(self.current.pairs)
            qlearning_step(self.table, state, outcome.a_learner.index, outcome.r_learner, next_state)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.table.dumps().encode('utf-8')).hexdigest()

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.table.dumps(), encoding='utf-8')
        logger.info(f"Saved Q-table to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'QLearningAgent':
        table = QTable.loads(Path(path).read_text(encoding='utf-8'))
        agent = cls(table.s, table.alpha, table.gamma, table.epsilon)
        agent.table = table
        return agent


# =============================================================================
# REPLAY BUFFER
# =============================================================================

@dataclass(frozen=True)
class Transition:
    prefix: Pairs
    action: int
    reward: float
    next_prefix: Pairs
    done: bool = False


class ReplayBuffer:
    """Fixed-capacity ring buffer; once full, the oldest transition is overwritten."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise GameDomainError(f"Replay capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.buffer: List[Transition] = []
        self.position = 0

    def push(self, transition: Transition):
        if len(self.buffer) < self.capacity:
            self.buffer.append(transition)
        else:
            self.buffer[self.position] = transition
        self.position = (self.position + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        batch_size = min(batch_size, len(self.buffer))
        indices = rng.choice(len(self.buffer), size=batch_size, replace=False)
        return [self.buffer[i] for i in indices]

    def __len__(self):
        return len(self.buffer)


def td_targets(rewards: np.ndarray, next_max: np.ndarray, dones: np.ndarray, gamma: float) -> np.ndarray:
    return rewards + gamma * next_max * (1.0 - dones)


def td_loss(q_sa: float, reward: float, next_max: float, gamma: float, done: bool = False) -> float:
    """(Q(s,a) − (r + γ·max_a' Q_target(s',a')))², the target being r at a terminal."""
    y = td_targets(np.asarray([reward]), np.asarray([next_max]), np.asarray([float(done)]), gamma)[0]
    return float((q_sa - y) ** 2)


def prefix_batch(prefixes: Sequence[Pairs], s: int) -> Tuple[np.ndarray, np.ndarray]:
    """Padded (B, T, 2s+1) start-token-prefixed joint encodings and their lengths."""
    lengths = np.asarray([len(p) + 1 for p in prefixes], dtype=np.int64)
    xs = np.zeros((len(prefixes), int(lengths.max()), 2 * s + 1))
    start = joint_start_token(s)
    for row, prefix in enumerate(prefixes):
        xs[row, 0] = start
        for t, (a_own, a_other) in enumerate(prefix, start=1):
            xs[row, t] = encode_joint(a_own, a_other, s)
    return xs, lengths


# =============================================================================
# DQN
# =============================================================================

class QNetwork:
    """History encoder (joint LSTM, or the full hierarchical encoder) plus a two-layer head."""

    def __init__(self, store: ParameterStore, s: int, hidden_size: int, encoder: str = 'history'):
        if encoder not in ('history', 'hierarchical'):
            raise ValueError(f"Unknown DQN encoder '{encoder}'")
        self.s = s
        self.hidden_size = hidden_size
        self.encoder_kind = encoder
        if encoder == 'history':
            self.encoder = SequenceEncoder(store, 'dqn.history', 2 * s + 1, hidden_size)
        else:
            self.encoder = HierarchicalEncoder(store, s, hidden_size, components='full', prefix='dqn.he')
        self.head = Feedforward(store, 'dqn.head', [hidden_size, hidden_size, s])

    # incremental path used while playing

    def begin(self):
        if self.encoder_kind == 'history':
            return detach(self.encoder.step(self.encoder.initial_state(), joint_start_token(self.s)))
        return _detached(self.encoder.begin())

    def advance(self, state, a_own: int, a_other: int):
        if self.encoder_kind == 'history':
            return detach(self.encoder.step(state, encode_joint(a_own, a_other, self.s)))
        return _detached(self.encoder.advance(state, a_own, a_other))

    def q_from_state(self, state) -> np.ndarray:
        if self.encoder_kind == 'history':
            h = self.encoder.hidden(state)
        else:
            h = self.encoder.combine(state)
        return self.head(detach(h)).value

    # graph and batched paths used while learning

    def q_graph(self, prefix: Pairs) -> Tensor:
        if self.encoder_kind == 'history':
            steps = [joint_start_token(self.s)] + [encode_joint(a, b, self.s) for a, b in prefix]
            h = self.encoder.encode(steps)
        else:
            state = self.encoder.begin()
            for a_own, a_other in prefix:
                state = self.encoder.advance(state, a_own, a_other)
            h = self.encoder.combine(state)
        return self.head(h)

    def q_batch(self, prefixes: Sequence[Pairs]) -> np.ndarray:
        if self.encoder_kind == 'history':
            xs, lengths = prefix_batch(prefixes, self.s)
            h, _ = lstm_forward_batch(self.encoder.w.value, self.encoder.b.value, xs, lengths)
            q, _ = feedforward_forward_batch(self.head, h)
            return q
        return np.stack([self.q_graph(prefix).value for prefix in prefixes])


def _detached(state: EncoderState) -> EncoderState:
    return EncoderState(
        own=detach(state.own) if state.own is not None else None,
        other=detach(state.other) if state.other is not None else None,
        joint=detach(state.joint),
        turns=state.turns,
    )


class DQNAgent(Learner):
    """
    Online network trained on replay minibatches; the target network is a
    frozen copy refreshed every ``sync_every`` learning steps. Only the
    last ``loss_window`` minibatch losses are kept.
    """

    pathway = Pathway.HE_AD_DQN

    def __init__(self, s: int, hidden_size: int = 64, encoder: str = 'history',
                 buffer_size: int = 10000, batch_size: int = 32, gamma: float = 0.99,
                 sync_every: int = 200, epsilon_start: float = 1.0, epsilon_end: float = 0.05,
                 epsilon_steps: int = 20000, lr: float = 1e-3,
                 rng: Optional[np.random.Generator] = None, init_scale: float = 0.08, optimizer=None,
                 loss_window: int = 1000):
        self.s = s
        self.hidden_size = hidden_size
        self.encoder_kind = encoder
        self.batch_size = batch_size
        self.gamma = gamma
        self.sync_every = sync_every
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_steps = epsilon_steps
        self.lr = lr

        self.store = ParameterStore(rng=rng, init_scale=init_scale, optimizer=optimizer or build_optimizer('adam'))
        self.online = QNetwork(self.store, s, hidden_size, encoder)
        self.target_store = ParameterStore(init_scale=init_scale)
        self.target = QNetwork(self.target_store, s, hidden_size, encoder)
        self.target_store.freeze()
        self.sync_target()

        self.buffer = ReplayBuffer(buffer_size)
        self.env_steps = 0
        self.learn_steps = 0
        if loss_window < 1:
            raise ValueError(f"loss_window must be positive, got {loss_window}")
        self.losses: Deque[float] = deque(maxlen=loss_window)

        self.training = False
        self._rng: Optional[np.random.Generator] = None
        self.current = CurrentHistory()
        self._state = None
        self._pending: Optional[Transition] = None

    def __repr__(self):
        return f"<DQNAgent: {self.encoder_kind} d={self.hidden_size} buffer={len(self.buffer)}>"

    @property
    def mean_loss(self) -> Optional[float]:
        """Mean of the retained minibatch losses."""
        return sum(self.losses) / len(self.losses) if self.losses else None

    @property
    def epsilon(self) -> float:
        if self.epsilon_steps == 0:
            return self.epsilon_end
        frac = min(1.0, self.env_steps / self.epsilon_steps)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def sync_target(self):
        self.target_store.copy_from(self.store)

    def begin_game(self, training: bool, rng: np.random.Generator):
        self.training = training
        self._rng = rng
        self.current = CurrentHistory()
        self._state = self.online.begin()
        self._pending = None

    def act(self, view: HistoryView) -> int:
        if view.turns_elapsed != self.current.length:
            raise SequencingError(
                f"Agent has seen {self.current.length} turns but was asked to act after {view.turns_elapsed}"
            )
        if self.training:
            explore = self._rng.random() < self.epsilon
            self.env_steps += 1
            if explore:
                return int(self._rng.integers(self.s))
        return int(np.argmax(self.online.q_from_state(self._state)))

    def observe(self, outcome: StageOutcome):
        prefix = tuple(self.current.pairs)
        self.current.append_stage(outcome)
        a_own, a_other = outcome.a_learner.index, outcome.a_opponent.index
        self._state = self.online.advance(self._state, a_own, a_other)
        if not self.training:
            return
        if self._pending is not None:
            dqn_step(self, self._pending)
        self._pending = Transition(prefix, a_own, outcome.r_learner, tuple(self.current.pairs))

    def end_game(self, record: GameRecord):
        if self.training and self._pending is not None:
            dqn_step(self, replace(self._pending, done=True))
        self._pending = None

    def learn_batch(self, batch: Sequence[Transition]) -> float:
        """One gradient step on mean squared TD error; returns the loss."""
        actions = np.asarray([t.action for t in batch], dtype=np.int64)
        rewards = np.asarray([t.reward for t in batch])
        dones = np.asarray([float(t.done) for t in batch])
        next_max = self.target.q_batch([t.next_prefix for t in batch]).max(axis=1)
        y = td_targets(rewards, next_max, dones, self.gamma)

        if self.encoder_kind == 'history':
            loss = self._learn_history(batch, actions, y)
        else:
            loss = self._learn_graph(batch, actions, y)
        optimizer_step(self.store, self.lr)
        self.learn_steps += 1
        if self.learn_steps % self.sync_every == 0:
            self.sync_target()
            logger.debug(f"DQN step {self.learn_steps}: target synced, mean loss {self.mean_loss}")
        return loss

    def _learn_history(self, batch: Sequence[Transition], actions: np.ndarray, y: np.ndarray) -> float:
        net = self.online
        xs, lengths = prefix_batch([t.prefix for t in batch], self.s)
        h, cache = lstm_forward_batch(net.encoder.w.value, net.encoder.b.value, xs, lengths)
        q, outputs = feedforward_forward_batch(net.head, h)
        rows = np.arange(len(batch))
        err = q[rows, actions] - y
        dq = np.zeros_like(q)
        dq[rows, actions] = 2.0 * err / len(batch)
        dh = feedforward_backward_batch(net.head, dq, outputs)
        dw, db = lstm_backward_batch(net.encoder.w.value, dh, cache)
        net.encoder.w.grad += dw
        net.encoder.b.grad += db
        return float(np.mean(err * err))

    def _learn_graph(self, batch: Sequence[Transition], actions: np.ndarray, y: np.ndarray) -> float:
        errors = [
            square(sub(pick(self.online.q_graph(t.prefix), int(a)), Tensor(target)))
            for t, a, target in zip(batch, actions, y)
        ]
        loss = scale(total(stack(errors)), 1.0 / len(batch))
        backward(loss)
        return loss.item()

    def fingerprint(self) -> str:
        return self.store.fingerprint()

    def metadata(self) -> Dict:
        return {
            'kind': 'agent',
            'pathway': self.pathway.value,
            'actions': self.s,
            'hidden_size': self.hidden_size,
            'dqn_encoder': self.encoder_kind,
            'env_steps': self.env_steps,
            'learn_steps': self.learn_steps,
        }

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_checkpoint(self.store, self.metadata()), encoding='utf-8')
        logger.info(f"Saved {self!r} to {path}")
        return path


def dqn_step(agent: DQNAgent, transition: Transition, rng: Optional[np.random.Generator] = None) -> float:
    """Store ``transition`` and train on one uniformly sampled minibatch."""
    agent.buffer.push(transition)
    batch = agent.buffer.sample(agent.batch_size, rng if rng is not None else agent._rng)
    loss = agent.learn_batch(batch)
    agent.losses.append(loss)
    return loss


__all__ = [
    'QTable',
    'QLearningAgent',
    'Transition',
    'ReplayBuffer',
    'QNetwork',
    'DQNAgent',
    'qlearning_step',
    'dqn_step',
    'td_loss',
    'td_targets',
    'prefix_batch',
]
