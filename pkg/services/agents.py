"""
Agent construction and persistence for adaptlab.

``build_agent`` turns a resolved ExperimentConfig into the learner for its
pathway; ``load_agent`` restores one from disk. Neural agents use the
checkpoint format with a pathway descriptor in the metadata line, the
tabular agent uses its JSON-lines Q-table.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .baselines import DQNAgent, QLearningAgent
from .config import ExperimentConfig
from .exceptions import ConfigurationError
from .history_memory import PastMemory
from .neural_core import CHECKPOINT_MAGIC, build_optimizer, load_into, loads_checkpoint
from .oae import OpponentActionEstimator
from .policy import Learner, Pathway, PolicyAgent

logger = logging.getLogger(__name__)


def build_agent(config: ExperimentConfig, s: int, oae: Optional[OpponentActionEstimator] = None,
                memory: Optional[PastMemory] = None, rng: Optional[np.random.Generator] = None) -> Learner:
    """
    Raises:
        ConfigurationError: a component the pathway needs is missing or incompatible.
    """
    pathway = Pathway(config.pathway)
    optimizer = build_optimizer(config.optimizer, config.adam_beta1, config.adam_beta2, config.adam_eps)

    if pathway is Pathway.QLEARNING:
        agent = QLearningAgent(s, alpha=config.q_alpha, gamma=config.q_gamma, epsilon=config.q_epsilon)
    elif pathway is Pathway.HE_AD_DQN:
        agent = DQNAgent(
            s,
            hidden_size=config.hidden_size,
            encoder=config.dqn_encoder,
            buffer_size=config.dqn_buffer,
            batch_size=config.dqn_batch,
            gamma=config.dqn_gamma,
            sync_every=config.dqn_sync_every,
            epsilon_start=config.dqn_epsilon_start,
            epsilon_end=config.dqn_epsilon_end,
            epsilon_steps=config.dqn_epsilon_steps,
            lr=config.lr,
            rng=rng,
            init_scale=config.init_scale,
            optimizer=optimizer,
        )
    else:
        if pathway.uses_oae and oae is not None and oae.mode.value != pathway.oae_mode:
            raise ConfigurationError(
                f"{pathway.label} needs a {pathway.oae_mode} estimator, got {oae.mode.value}"
            )
        agent = PolicyAgent(
            pathway,
            s,
            hidden_size=config.hidden_size,
            oae=oae,
            memory=memory,
            k=config.k,
            lr=config.lr,
            rng=rng,
            init_scale=config.init_scale,
            optimizer=optimizer,
            reinforce_baseline=config.reinforce_baseline,
            baseline_momentum=config.baseline_momentum,
        )
    logger.debug(f"Built {agent!r} for {pathway.label}")
    return agent


def load_agent(path: Union[str, Path], oae: Optional[OpponentActionEstimator] = None,
               memory: Optional[PastMemory] = None) -> Learner:
    path = Path(path)
    text = path.read_text(encoding='utf-8')
    if not text.startswith(CHECKPOINT_MAGIC):
        return QLearningAgent.load(path)

    metadata, _ = loads_checkpoint(text)
    if metadata.get('kind') != 'agent':
        raise ConfigurationError(f"{path} is not an agent checkpoint")
    pathway = Pathway(metadata['pathway'])
    s = int(metadata['actions'])
    hidden_size = int(metadata['hidden_size'])

    if pathway is Pathway.HE_AD_DQN:
        agent = DQNAgent(s, hidden_size=hidden_size, encoder=metadata.get('dqn_encoder', 'history'))
        load_into(agent.store, text)
        agent.sync_target()
        agent.env_steps = int(metadata.get('env_steps', 0))
        agent.learn_steps = int(metadata.get('learn_steps', 0))
        return agent

    expected = metadata.get('oae_fingerprint')
    if expected is not None and (oae is None or oae.fingerprint() != expected):
        raise ConfigurationError(f"{path} was trained with a different opponent action estimator")
    agent = PolicyAgent(pathway, s, hidden_size=hidden_size, oae=oae, memory=memory,
                        k=int(metadata.get('k', 5)))
    load_into(agent.store, text)
    agent.baseline = float(metadata.get('baseline', 0.0))
    logger.info(f"Loaded {agent!r} from {path}")
    return agent


__all__ = [
    'build_agent',
    'load_agent',
]
