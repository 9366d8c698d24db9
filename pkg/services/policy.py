"""
Policy Services for adaptlab.

The learner's decision stack:

- HierarchicalEncoder: two action-level encoders (own moves, opponent moves)
  and one history-level encoder (joint moves), fused by CombineNet into h_c,
  optionally together with the opponent estimate E_x
- ActionDecoder: h_c (or E_x alone) to logits over the action set
- EpisodeTrace / reinforce_update: whole-episode REINFORCE on the final
  score difference ΔR
- PolicyAgent: the policy-gradient pathways (HE+AD, PG, OAE+AD, OAE+HE+AD)

Encoders are driven incrementally during play (one LSTM step per turn), so a
turn costs a constant amount of work regardless of how far the game is.
``encode_history`` recomputes from scratch and agrees with the incremental
path.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ConfigurationError, SequencingError, ShapeError
from .game_core import GameConfig, GameRecord, HistoryView, PayoffMatrix, StageOutcome, play_repeated_game
from .history_memory import CurrentHistory, PastMemory
from .neural_core import (
    Feedforward,
    ParameterStore,
    SequenceEncoder,
    Tensor,
    backward,
    build_optimizer,
    concat,
    dumps_checkpoint,
    encode_joint,
    encode_single,
    joint_start_token,
    optimizer_step,
    scale,
    select_action,
    single_start_token,
    stack,
    total,
)
from .oae import OpponentActionEstimator, estimate
from .retrieval import top_k_similar

logger = logging.getLogger(__name__)


# =============================================================================
# PATHWAYS
# =============================================================================

class Pathway(str, Enum):
    QLEARNING = 'qlearning'
    HE_AD_DQN = 'he_ad_dqn'
    HE_AD_PG = 'he_ad_pg'
    PG = 'pg'
    O_OAE_AD = 'o_oae_ad'
    M_OAE_AD = 'm_oae_ad'
    O_OAE_HE_AD = 'o_oae_he_ad'
    M_OAE_HE_AD = 'm_oae_he_ad'

    @property
    def label(self) -> str:
        return PATHWAY_LABELS[self]

    @property
    def uses_oae(self) -> bool:
        return 'oae' in self.value

    @property
    def uses_encoder(self) -> bool:
        return self in (Pathway.HE_AD_PG, Pathway.PG, Pathway.O_OAE_HE_AD, Pathway.M_OAE_HE_AD)

    @property
    def is_policy_gradient(self) -> bool:
        return self not in (Pathway.QLEARNING, Pathway.HE_AD_DQN)

    @property
    def oae_mode(self) -> Optional[str]:
        if self.value.startswith('o_oae'):
            return 'one_step'
        if self.value.startswith('m_oae'):
            return 'multi_step'
        return None


PATHWAY_LABELS = {
    Pathway.QLEARNING: 'Q-learning',
    Pathway.HE_AD_DQN: 'HE+AD(DQN)',
    Pathway.HE_AD_PG: 'HE+AD(PG)',
    Pathway.PG: 'PG',
    Pathway.O_OAE_AD: 'O-OAE+AD',
    Pathway.M_OAE_AD: 'M-OAE+AD',
    Pathway.O_OAE_HE_AD: 'O-OAE+HE+AD',
    Pathway.M_OAE_HE_AD: 'M-OAE+HE+AD',
}


# =============================================================================
# HIERARCHICAL HISTORY ENCODER
# =============================================================================

@dataclass
class EncoderState:
    """LSTM states of the three encoders after the turns seen so far."""
    own: Optional[Tensor]
    other: Optional[Tensor]
    joint: Tensor
    turns: int = 0


class HierarchicalEncoder:
    """
    components='full': own, opponent and joint encoders (CombineNet input 3d,
    4d with an estimate). components='history': joint encoder only
    (input d, 2d with an estimate).
    """

    def __init__(self, store: ParameterStore, s: int, hidden_size: int, components: str = 'full',
                 with_estimate: bool = False, prefix: str = 'he'):
        if components not in ('full', 'history'):
            raise ConfigurationError(f"Unknown encoder components '{components}'")
        self.s = s
        self.hidden_size = hidden_size
        self.components = components
        self.with_estimate = with_estimate
        if components == 'full':
            self.own_encoder = SequenceEncoder(store, f'{prefix}.own', s + 1, hidden_size)
            self.other_encoder = SequenceEncoder(store, f'{prefix}.other', s + 1, hidden_size)
        else:
            self.own_encoder = None
            self.other_encoder = None
        self.history_encoder = SequenceEncoder(store, f'{prefix}.history', 2 * s + 1, hidden_size)
        width = (3 if components == 'full' else 1) + (1 if with_estimate else 0)
        self.combine_net = Feedforward(store, f'{prefix}.combine', [width * hidden_size, hidden_size, hidden_size])

    @property
    def combine_width(self) -> int:
        return self.combine_net.in_dim

    def begin(self) -> EncoderState:
        """State after the start token, i.e. for an empty history."""
        own = other = None
        if self.components == 'full':
            own = self.own_encoder.step(self.own_encoder.initial_state(), single_start_token(self.s))
            other = self.other_encoder.step(self.other_encoder.initial_state(), single_start_token(self.s))
        joint = self.history_encoder.step(self.history_encoder.initial_state(), joint_start_token(self.s))
        return EncoderState(own=own, other=other, joint=joint)

    def advance(self, state: EncoderState, a_own: int, a_other: int) -> EncoderState:
        own = other = None
        if self.components == 'full':
            own = self.own_encoder.step(state.own, encode_single(a_own, self.s))
            other = self.other_encoder.step(state.other, encode_single(a_other, self.s))
        joint = self.history_encoder.step(state.joint, encode_joint(a_own, a_other, self.s))
        return EncoderState(own=own, other=other, joint=joint, turns=state.turns + 1)

    def combine(self, state: EncoderState, ex: Optional[Tensor] = None) -> Tensor:
        """h_c from the encoder states, fused with E_x when the encoder was built for it."""
        if ex is not None and not self.with_estimate:
            raise ShapeError(
                f"CombineNet takes {self.combine_width} inputs and has no slot for an opponent estimate"
            )
        if ex is None and self.with_estimate:
            raise ShapeError("CombineNet was built for an opponent estimate but none was given")
        parts = []
        if self.components == 'full':
            parts.append(self.own_encoder.hidden(state.own))
            parts.append(self.other_encoder.hidden(state.other))
        parts.append(self.history_encoder.hidden(state.joint))
        if ex is not None:
            if ex.shape != (self.hidden_size,):
                raise ShapeError(f"Opponent estimate has shape {ex.shape}, expected ({self.hidden_size},)")
            parts.append(ex)
        return self.combine_net(concat(parts))


def encode_history(he: HierarchicalEncoder, c: CurrentHistory, ex: Optional[Tensor] = None) -> Tensor:
    state = he.begin()
    for a_own, a_other in c.pairs:
        state = he.advance(state, a_own, a_other)
    return he.combine(state, ex)


# =============================================================================
# ACTION DECODER
# =============================================================================

class ActionDecoder:
    def __init__(self, store: ParameterStore, hidden_size: int, s: int, prefix: str = 'ad'):
        self.s = s
        self.net = Feedforward(store, prefix, [hidden_size, hidden_size, s])

    @property
    def out_dim(self) -> int:
        return self.net.out_dim

    def __call__(self, h: Tensor) -> Tensor:
        return self.net(h)


@dataclass
class EpisodeTrace:
    """Sampled actions and their log-probabilities over one game."""
    actions: List[int] = field(default_factory=list)
    log_probs: List[Tensor] = field(default_factory=list)
    delta_r: Optional[float] = None
    turns: Optional[int] = None

    def record(self, action: int, log_prob: Optional[Tensor]):
        self.actions.append(action)
        if log_prob is not None:
            self.log_probs.append(log_prob)

    def finish(self, record: GameRecord) -> 'EpisodeTrace':
        if len(self.actions) != record.n:
            raise SequencingError(f"Trace holds {len(self.actions)} actions for a {record.n}-turn game")
        self.delta_r = record.delta_r
        self.turns = record.n
        return self

    @property
    def complete(self) -> bool:
        return (
            self.delta_r is not None
            and len(self.actions) == self.turns
            and len(self.log_probs) == self.turns
        )


def decode_action(ad: ActionDecoder, h_c: Tensor, mode: str = 'greedy',
                  rng: Optional[np.random.Generator] = None,
                  trace: Optional[EpisodeTrace] = None) -> int:
    index, log_prob = select_action(ad(h_c), mode, rng)
    if trace is not None:
        trace.record(index, log_prob)
    return index


# =============================================================================
# REINFORCE
# =============================================================================

def reinforce_surrogate(trace: EpisodeTrace, baseline: float = 0.0) -> Tensor:
    """-(ΔR - b) * Σ_t log π(a_t); its gradient is the REINFORCE estimate."""
    if not trace.complete:
        raise SequencingError("REINFORCE needs a finished trace with a log-probability for every turn")
    return scale(total(stack(trace.log_probs)), -(trace.delta_r - baseline))


def reinforce_update(trace: EpisodeTrace, store: ParameterStore, lr: float, baseline: float = 0.0) -> float:
    surrogate = reinforce_surrogate(trace, baseline)
    backward(surrogate)
    optimizer_step(store, lr)
    return surrogate.item()


# =============================================================================
# AGENTS
# =============================================================================

class Learner:
    """
    Common surface for every pathway.

    A game is ``begin_game`` → ``act``/``observe`` per turn → ``end_game``.
    ``learn`` is the post-game update (a no-op for online learners).
    """

    pathway: Pathway
    s: int

    def begin_game(self, training: bool, rng: np.random.Generator):
        raise NotImplementedError

    def act(self, view: HistoryView) -> int:
        raise NotImplementedError

    def __call__(self, view: HistoryView) -> int:
        return self.act(view)

    def observe(self, outcome: StageOutcome):
        raise NotImplementedError

    def end_game(self, record: GameRecord):
        pass

    def learn(self) -> Optional[float]:
        return None

    def fingerprint(self) -> str:
        raise NotImplementedError

    def save(self, path: Union[str, Path]) -> Path:
        raise NotImplementedError

    def play_game(self, cfg: GameConfig, opponent, matrix: PayoffMatrix, training: bool,
                  rng: np.random.Generator) -> GameRecord:
        self.begin_game(training, rng)
        record = play_repeated_game(cfg, self, opponent, matrix=matrix, on_stage=self.observe)
        self.end_game(record)
        return record


class PolicyAgent(Learner):
    """
    Policy-gradient learner for the HE+AD, PG, OAE+AD and OAE+HE+AD pathways.

    Trains by sampling actions and applying REINFORCE after each game;
    evaluates greedily without touching its parameters. The estimator, when
    used, must be frozen and is never updated here.
    """

    def __init__(self, pathway: Union[Pathway, str], s: int, hidden_size: int = 64,
                 oae: Optional[OpponentActionEstimator] = None, memory: Optional[PastMemory] = None,
                 k: int = 5, lr: float = 1e-3, rng: Optional[np.random.Generator] = None,
                 init_scale: float = 0.08, optimizer=None, reinforce_baseline: bool = False,
                 baseline_momentum: float = 0.9):
        self.pathway = Pathway(pathway)
        if not self.pathway.is_policy_gradient:
            raise ConfigurationError(f"{self.pathway.label} is not a policy-gradient pathway")
        if self.pathway.uses_oae:
            _check_estimator(oae, memory, s, hidden_size)
        self.s = s
        self.hidden_size = hidden_size
        self.oae = oae if self.pathway.uses_oae else None
        self.memory = memory if self.pathway.uses_oae else None
        self.k = k
        self.lr = lr
        self.reinforce_baseline = reinforce_baseline
        self.baseline_momentum = baseline_momentum
        self.baseline = 0.0

        self.store = ParameterStore(rng=rng, init_scale=init_scale, optimizer=optimizer or build_optimizer('adam'))
        if self.pathway.uses_encoder:
            components = 'history' if self.pathway is Pathway.PG else 'full'
            self.encoder = HierarchicalEncoder(self.store, s, hidden_size, components=components,
                                               with_estimate=self.pathway.uses_oae)
        else:
            self.encoder = None
        self.decoder = ActionDecoder(self.store, hidden_size, s)

        self.training = False
        self._rng: Optional[np.random.Generator] = None
        self.current = CurrentHistory()
        self.trace = EpisodeTrace()
        self._encoder_state: Optional[EncoderState] = None
        self._query_state: Optional[Tensor] = None

    def __repr__(self):
        return f"<PolicyAgent: {self.pathway.label} d={self.hidden_size}>"

    def begin_game(self, training: bool, rng: np.random.Generator):
        self.training = training
        self._rng = rng
        self.current = CurrentHistory()
        self.trace = EpisodeTrace()
        if self.encoder is not None:
            self._encoder_state = self.encoder.begin()
        if self.oae is not None:
            query = self.oae.estimate_net.query_encoder
            self._query_state = query.step(query.initial_state(), joint_start_token(self.s))

    def opponent_estimate(self) -> Tensor:
        """E_x for the current history, retrieving from memory once a turn has been played."""
        sim = top_k_similar(self.current, self.memory, self.k) if self.current.length else []
        query = self.oae.estimate_net.query_encoder
        return self.oae.estimate_from_query(query.hidden(self._query_state), sim, self.current.length)

    def features(self) -> Tensor:
        ex = self.opponent_estimate() if self.oae is not None else None
        if self.encoder is None:
            return ex
        return self.encoder.combine(self._encoder_state, ex)

    def act(self, view: HistoryView) -> int:
        if view.turns_elapsed != self.current.length:
            raise SequencingError(
                f"Agent has seen {self.current.length} turns but was asked to act after {view.turns_elapsed}"
            )
        mode = 'sample' if self.training else 'greedy'
        return decode_action(self.decoder, self.features(), mode, self._rng, self.trace)

    def observe(self, outcome: StageOutcome):
        self.current.append_stage(outcome)
        a_own, a_other = outcome.a_learner.index, outcome.a_opponent.index
        if self.encoder is not None:
            self._encoder_state = self.encoder.advance(self._encoder_state, a_own, a_other)
        if self.oae is not None:
            query = self.oae.estimate_net.query_encoder
            self._query_state = query.step(self._query_state, encode_joint(a_own, a_other, self.s))

    def end_game(self, record: GameRecord):
        self.trace.finish(record)

    def learn(self) -> Optional[float]:
        if not self.training:
            return None
        baseline = self.baseline if self.reinforce_baseline else 0.0
        surrogate = reinforce_update(self.trace, self.store, self.lr, baseline)
        if self.reinforce_baseline:
            beta = self.baseline_momentum
            self.baseline = beta * self.baseline + (1.0 - beta) * self.trace.delta_r
        # drop the episode graph
        self.trace = EpisodeTrace()
        self._encoder_state = None
        return surrogate

    def fingerprint(self) -> str:
        return self.store.fingerprint()

    def metadata(self) -> Dict:
        return {
            'kind': 'agent',
            'pathway': self.pathway.value,
            'actions': self.s,
            'hidden_size': self.hidden_size,
            'k': self.k,
            'baseline': self.baseline,
            'oae_fingerprint': self.oae.fingerprint() if self.oae is not None else None,
        }

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_checkpoint(self.store, self.metadata()), encoding='utf-8')
        logger.info(f"Saved {self!r} to {path}")
        return path


def _check_estimator(oae: Optional[OpponentActionEstimator], memory: Optional[PastMemory], s: int,
                     hidden_size: int):
    if oae is None:
        raise ConfigurationError("This pathway needs a trained opponent action estimator")
    if memory is None:
        raise ConfigurationError("This pathway needs a past game memory to retrieve from")
    if not oae.frozen:
        raise ConfigurationError("The opponent action estimator must be trained and frozen before policy training")
    if oae.s != s:
        raise ConfigurationError(f"Estimator was built for {oae.s} actions, the game has {s}")
    if oae.hidden_size != hidden_size:
        raise ConfigurationError(
            f"Estimator hidden size {oae.hidden_size} does not match policy hidden size {hidden_size}"
        )


def policy_logits(agent: PolicyAgent, pairs: Sequence[Tuple[int, int]]) -> Tensor:
    """Logits after replaying ``pairs`` from scratch (greedy, no trace)."""
    c = CurrentHistory.from_pairs(pairs)
    ex = None
    if agent.oae is not None:
        sim = top_k_similar(c, agent.memory, agent.k) if c.length else []
        ex = estimate(agent.oae.estimate_net, c, sim)
    h = encode_history(agent.encoder, c, ex) if agent.encoder is not None else ex
    return agent.decoder(h)


__all__ = [
    'Pathway',
    'PATHWAY_LABELS',
    'EncoderState',
    'HierarchicalEncoder',
    'ActionDecoder',
    'EpisodeTrace',
    'Learner',
    'PolicyAgent',
    'encode_history',
    'decode_action',
    'reinforce_surrogate',
    'reinforce_update',
    'policy_logits',
]
