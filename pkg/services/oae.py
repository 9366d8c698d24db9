"""
Opponent Action Estimator Services for adaptlab.

The estimator turns "what has happened so far in this game" plus "how similar
past games continued" into an embedding of the opponent's likely future play.

Components:
- EstimateNetwork: memory network over the current history (query) and the
  retrieved past prefixes, with adjacent weight tying between hops
  (layer l reads keys with encoder l-1 and values with encoder l, so layer
  l+1's key encoder is layer l's value encoder)
- FusionNet: LSTM over retrieved opponent suffixes, averaged, then an MLP
- train_oae: L1 regression of the estimate onto the fused target with
  leave-one-out retrieval, after which both networks are frozen
- OpponentActionEstimator: the pair plus its parameter store, mode and
  provenance, with cached frozen-time encodings for fast play

Every joint-history encoder reads a start token before the first joint
action, so an empty history is encoded as the start token alone.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .exceptions import GameDomainError, TrainingError
from .game_core import Action, GameRecord
from .history_memory import CurrentHistory, OAEMode, PastMemory, split_at, suffix_opponent_actions
from .neural_core import (
    Feedforward,
    ParameterStore,
    SequenceEncoder,
    Tensor,
    add,
    attention_weights,
    backward,
    build_optimizer,
    dumps_checkpoint,
    encode_action,
    encode_joint,
    joint_start_token,
    l1_loss,
    load_into,
    loads_checkpoint,
    mean,
    optimizer_step,
    read_checkpoint,
    save_checkpoint,
    select_action,
    stack,
    weighted_sum,
)
from .retrieval import rank_similar

logger = logging.getLogger(__name__)

TARGET_RETRIEVED = 'retrieved'
TARGET_TRUE_FUTURE = 'true_future'


def joint_steps(pairs: Sequence, s: int) -> List[np.ndarray]:
    """Start token followed by one joint encoding per (learner, opponent) pair."""
    steps = [joint_start_token(s)]
    steps.extend(encode_joint(int(a_l), int(a_o), s) for a_l, a_o in pairs)
    return steps


def record_pairs(rec: GameRecord, m: Optional[int] = None):
    m = rec.n if m is None else m
    return list(zip(rec.learner_actions[:m], rec.opponent_actions[:m]))


# =============================================================================
# ESTIMATE NETWORK
# =============================================================================

class EstimateNetwork:
    """Query encoder, hops+1 tied memory encoders and an affine output projection."""

    def __init__(self, store: ParameterStore, s: int, hidden_size: int, hops: int = 3):
        self.s = s
        self.hidden_size = hidden_size
        self.hops = hops
        self.query_encoder = SequenceEncoder(store, 'oae.query', 2 * s + 1, hidden_size)
        self.memory_encoders = [
            SequenceEncoder(store, f'oae.memory.{level}', 2 * s + 1, hidden_size)
            for level in range(hops + 1)
        ]
        self.projection = Feedforward(store, 'oae.projection', [hidden_size, hidden_size])

    def input_embedding(self, layer: int) -> SequenceEncoder:
        """A_layer for layer in 1..hops."""
        return self.memory_encoders[layer - 1]

    def output_embedding(self, layer: int) -> SequenceEncoder:
        """C_layer for layer in 1..hops."""
        return self.memory_encoders[layer]

    def encode_query(self, c: CurrentHistory) -> Tensor:
        return self.query_encoder.encode(joint_steps(c.pairs, self.s))

    def encode_prefixes(self, sim: Sequence[GameRecord], m: int) -> List[List[Tensor]]:
        """Per memory encoder, the m-turn prefix encoding of every retrieved record."""
        return [
            [encoder.encode(joint_steps(record_pairs(rec, m), self.s)) for rec in sim]
            for encoder in self.memory_encoders
        ]

    def hop(self, u: Tensor, memory_encodings: List[List[Tensor]]) -> Tensor:
        for layer in range(1, self.hops + 1):
            keys = memory_encodings[layer - 1]
            values = memory_encodings[layer]
            weights = attention_weights(u, keys)
            u = add(u, weighted_sum(weights, stack(values)))
        return u


def estimate(net: EstimateNetwork, c: CurrentHistory, sim: Sequence[GameRecord]) -> Tensor:
    """E_x for the current history given the retrieved records (may be empty)."""
    u = net.encode_query(c)
    if sim and net.hops > 0:
        u = net.hop(u, net.encode_prefixes(sim, c.length))
    return net.projection(u)


# =============================================================================
# FUSION NETWORK
# =============================================================================

class FusionNet:
    """LSTM over one opponent-action suffix, mean over suffixes, then an MLP."""

    def __init__(self, store: ParameterStore, s: int, hidden_size: int):
        self.s = s
        self.hidden_size = hidden_size
        self.encoder = SequenceEncoder(store, 'oae.fusion.lstm', s, hidden_size)
        self.head = Feedforward(store, 'oae.fusion.head', [hidden_size, hidden_size, hidden_size])


def _action_index(a: Union[Action, int]) -> int:
    return a.index if isinstance(a, Action) else int(a)


def fuse_targets(net: FusionNet, suffix_sets: Sequence[Sequence[Union[Action, int]]]) -> Tensor:
    """E_y from K opponent-action suffixes."""
    if not suffix_sets or any(len(suffix) == 0 for suffix in suffix_sets):
        raise GameDomainError("FusionNet needs at least one non-empty suffix")
    encodings = [
        net.encoder.encode([encode_action(_action_index(a), net.s) for a in suffix])
        for suffix in suffix_sets
    ]
    pooled = encodings[0] if len(encodings) == 1 else mean(encodings)
    return net.head(pooled)


# =============================================================================
# ESTIMATOR BUNDLE
# =============================================================================

class OpponentActionEstimator:
    """
    Estimate and fusion networks sharing one parameter store.

    After ``freeze()`` the parameters are immutable; memory prefix
    encodings are then cached per record for play-time estimates.
    """

    CACHE_LIMIT = 8192

    def __init__(self, s: int, hidden_size: int = 64, hops: int = 3,
                 mode: Union[OAEMode, str] = OAEMode.ONE_STEP, target: str = TARGET_RETRIEVED,
                 rng: Optional[np.random.Generator] = None, init_scale: float = 0.08,
                 optimizer=None):
        if target not in (TARGET_RETRIEVED, TARGET_TRUE_FUTURE):
            raise ValueError(f"Unknown estimator target '{target}'")
        self.s = s
        self.hidden_size = hidden_size
        self.hops = hops
        self.mode = OAEMode(mode)
        self.target = target
        self.source_game: Optional[str] = None
        self.trained_examples = 0
        self.store = ParameterStore(rng=rng, init_scale=init_scale, optimizer=optimizer or build_optimizer('adam'))
        self.estimate_net = EstimateNetwork(self.store, s, hidden_size, hops)
        self.fusion_net = FusionNet(self.store, s, hidden_size)
        self._prefix_cache: Dict[int, tuple] = {}

    def __repr__(self):
        return f"<OpponentActionEstimator: {self.mode.value} d={self.hidden_size} hops={self.hops}>"

    @property
    def frozen(self) -> bool:
        return self.store.frozen

    def freeze(self) -> 'OpponentActionEstimator':
        self.store.freeze()
        self._prefix_cache.clear()
        return self

    def fingerprint(self) -> str:
        return hashlib.sha256(dumps_checkpoint(self.store, self.metadata()).encode('utf-8')).hexdigest()

    def metadata(self) -> Dict:
        return {
            'kind': 'oae',
            'mode': self.mode.value,
            'target': self.target,
            'actions': self.s,
            'hidden_size': self.hidden_size,
            'hops': self.hops,
            'source_game': self.source_game,
            'trained_examples': self.trained_examples,
        }

    # =========================================================================
    # FROZEN-TIME ESTIMATES
    # =========================================================================

    def prefix_states(self, rec: GameRecord) -> np.ndarray:
        """(hops+1, n+1, d) hidden states of every memory encoder on every prefix."""
        entry = self._prefix_cache.get(id(rec))
        if entry is not None and entry[0] is rec:
            return entry[1]
        steps = joint_steps(record_pairs(rec), self.s)
        d = self.hidden_size
        states = np.empty((self.hops + 1, len(steps), d))
        for level, encoder in enumerate(self.estimate_net.memory_encoders):
            for t, state in enumerate(encoder.run(steps)):
                states[level, t] = state.value[:d]
        if not self.frozen:
            return states
        if len(self._prefix_cache) >= self.CACHE_LIMIT:
            self._prefix_cache.clear()
        # holding rec keeps its id from being reused while cached
        self._prefix_cache[id(rec)] = (rec, states)
        return states

    def estimate_from_query(self, query_hidden: Tensor, sim: Sequence[GameRecord], m: int) -> Tensor:
        """
        E_x from an already encoded query; memory prefixes come from the
        cache. Matches ``estimate`` on a frozen estimator.
        """
        u = query_hidden
        if sim and self.hops > 0:
            cached = [self.prefix_states(rec) for rec in sim]
            encodings = [
                [Tensor(states[level, m]) for states in cached]
                for level in range(self.hops + 1)
            ]
            u = self.estimate_net.hop(u, encodings)
        return self.estimate_net.projection(u)

    # =========================================================================
    # PERSISTENCE
    # =========================================================================

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(self.store, path, self.metadata())

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'OpponentActionEstimator':
        text = read_checkpoint(path)
        metadata, _ = loads_checkpoint(text)
        if metadata.get('kind') != 'oae':
            raise GameDomainError(f"{path} is not an estimator checkpoint")
        oae = cls(
            s=int(metadata['actions']),
            hidden_size=int(metadata['hidden_size']),
            hops=int(metadata['hops']),
            mode=metadata['mode'],
            target=metadata.get('target', TARGET_RETRIEVED),
        )
        load_into(oae.store, text)
        oae.source_game = metadata.get('source_game')
        oae.trained_examples = int(metadata.get('trained_examples', 0))
        oae.freeze()
        logger.info(f"Loaded {oae!r} trained on '{oae.source_game}' from {path}")
        return oae


# =============================================================================
# TRAINING
# =============================================================================

@dataclass
class OAETrainingResult:
    estimator: OpponentActionEstimator
    losses: List[float] = field(default_factory=list)

    @property
    def final_loss(self) -> Optional[float]:
        return self.losses[-1] if self.losses else None


def oae_loss(oae: OpponentActionEstimator, memory: PastMemory, index: int, m: int, k: int) -> Tensor:
    """L1 loss for record ``index`` cut after ``m`` turns, retrieving from the rest of memory."""
    rec = memory[index]
    c = CurrentHistory.from_pairs(record_pairs(rec, m))
    sim = [memory[score.record_ref] for score in rank_similar(c, memory, k, exclude=index)]
    e_x = estimate(oae.estimate_net, c, sim)

    if oae.target == TARGET_RETRIEVED and sim:
        suffix_sets = [suffix_opponent_actions(split_at(other, m), oae.mode) for other in sim]
    else:
        suffix_sets = [suffix_opponent_actions(split_at(rec, m), oae.mode)]
    e_y = fuse_targets(oae.fusion_net, suffix_sets)
    return l1_loss(e_x, e_y)


def train_oae(oae: OpponentActionEstimator, memory: PastMemory, epochs: int,
              rng: np.random.Generator, lr: float = 1e-3, k: int = 5,
              log_every: int = 500) -> OAETrainingResult:
    """
    Fit estimate and fusion networks jointly, one sampled example per epoch,
    then freeze them.

    Raises:
        TrainingError: fewer than two records usable for retrieval.
    """
    if oae.frozen:
        raise TrainingError("Estimator is already frozen")
    eligible = [i for i, rec in enumerate(memory) if rec.n >= 2]
    if len(eligible) < 2:
        raise TrainingError(
            f"Estimator training needs at least 2 records with 2+ turns, memory has {len(eligible)}"
        )

    logger.info(
        f"Training {oae.mode.value} estimator on {len(memory)} '{memory.game_name}' records for {epochs} epochs"
    )
    result = OAETrainingResult(estimator=oae)
    for epoch in range(1, epochs + 1):
        index = eligible[int(rng.integers(len(eligible)))]
        m = int(rng.integers(1, memory[index].n))
        loss = oae_loss(oae, memory, index, m, k)
        backward(loss)
        optimizer_step(oae.store, lr)
        result.losses.append(loss.item())
        if log_every and epoch % log_every == 0:
            window = result.losses[-log_every:]
            logger.info(f"Estimator epoch {epoch}/{epochs}: mean L1 {sum(window) / len(window):.4f}")

    oae.trained_examples += epochs
    oae.source_game = memory.game_name
    oae.freeze()
    return result


def oae_direct_action(phi1: EstimateNetwork, decoder: Feedforward, c: CurrentHistory,
                      sim: Sequence[GameRecord], mode: str = 'greedy',
                      rng: Optional[np.random.Generator] = None) -> int:
    """Action index straight from decoder(E_x)."""
    if decoder.out_dim != phi1.s:
        raise GameDomainError(f"Decoder emits {decoder.out_dim} logits for a {phi1.s}-action game")
    index, _ = select_action(decoder(estimate(phi1, c, sim)), mode, rng)
    return index


__all__ = [
    'TARGET_RETRIEVED',
    'TARGET_TRUE_FUTURE',
    'EstimateNetwork',
    'FusionNet',
    'OpponentActionEstimator',
    'OAETrainingResult',
    'joint_steps',
    'estimate',
    'fuse_targets',
    'oae_loss',
    'train_oae',
    'oae_direct_action',
]
