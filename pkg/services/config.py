"""
Experiment configuration for adaptlab.

Resolution order, later wins:
1. ExperimentConfig field defaults
2. ``settings.EXPERIMENT_DEFAULTS``
3. ``ADAPTLAB_<KEY>`` environment variables (scalar keys, YAML-parsed)
4. A YAML config file
5. Explicit overrides (command-line flags); ``None`` means "not given"

Every harness run writes the fully resolved config next to its outputs.
"""

import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import yaml
from django.conf import settings

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

ENV_PREFIX = 'ADAPTLAB_'

PATHWAYS = (
    'qlearning',
    'he_ad_dqn',
    'he_ad_pg',
    'pg',
    'o_oae_ad',
    'm_oae_ad',
    'o_oae_he_ad',
    'm_oae_he_ad',
)


@dataclass
class ExperimentConfig:
    # Game and opponents
    game: str = 'prisoners_dilemma'
    game_file: Optional[str] = None
    pool_file: Optional[str] = None
    turns: int = 50

    # Policy pathway and estimator
    pathway: str = 'o_oae_he_ad'
    oae_mode: str = 'one_step'
    oae_target: str = 'retrieved'
    oae_epochs: int = 2000
    oae_lr: float = 1e-3

    # Past game history memory
    memory_capacity: int = 1000
    warmup_games: int = 500
    populate: str = 'random'
    k: int = 5

    # Network sizes
    hidden_size: int = 64
    hops: int = 3
    init_scale: float = 0.08

    # Policy training
    epochs: int = 20000
    eval_every: int = 500
    eval_games: int = 200
    seeds: List[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    seed: int = 1
    lr: float = 1e-3
    optimizer: str = 'adam'
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    reinforce_baseline: bool = False
    baseline_momentum: float = 0.9

    # Tabular Q-learning baseline
    q_alpha: float = 0.1
    q_gamma: float = 0.9
    q_epsilon: float = 0.1

    # DQN baseline
    dqn_encoder: str = 'history'
    dqn_buffer: int = 10000
    dqn_batch: int = 32
    dqn_gamma: float = 0.99
    dqn_sync_every: int = 200
    dqn_epsilon_start: float = 1.0
    dqn_epsilon_end: float = 0.05
    dqn_epsilon_steps: int = 20000

    # Execution
    workers: int = 1
    output_dir: str = 'runs'

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def replace(self, **changes) -> 'ExperimentConfig':
        data = self.to_dict()
        data.update(changes)
        return ExperimentConfig(**data).validate()

    @property
    def uses_oae(self) -> bool:
        return 'oae' in self.pathway

    @property
    def pathway_oae_mode(self) -> str:
        """Estimator mode implied by the pathway name (o_ one-step, m_ multi-step)."""
        if self.pathway.startswith('m_oae'):
            return 'multi_step'
        if self.pathway.startswith('o_oae'):
            return 'one_step'
        return self.oae_mode

    def validate(self) -> 'ExperimentConfig':
        problems = []
        if self.pathway not in PATHWAYS:
            problems.append(f"pathway must be one of {', '.join(PATHWAYS)}, got '{self.pathway}'")
        if self.oae_mode not in ('one_step', 'multi_step'):
            problems.append(f"oae_mode must be one_step or multi_step, got '{self.oae_mode}'")
        if self.oae_target not in ('retrieved', 'true_future'):
            problems.append(f"oae_target must be retrieved or true_future, got '{self.oae_target}'")
        if self.populate not in ('random', 'from-checkpoint'):
            problems.append(f"populate must be random or from-checkpoint, got '{self.populate}'")
        if self.dqn_encoder not in ('history', 'hierarchical'):
            problems.append(f"dqn_encoder must be history or hierarchical, got '{self.dqn_encoder}'")
        if self.optimizer not in ('adam', 'sgd'):
            problems.append(f"optimizer must be adam or sgd, got '{self.optimizer}'")
        for name in ('turns', 'memory_capacity', 'k', 'hidden_size', 'eval_every', 'eval_games',
                     'dqn_buffer', 'dqn_batch', 'dqn_sync_every', 'workers'):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be at least 1, got {getattr(self, name)}")
        for name in ('hops', 'epochs', 'oae_epochs', 'warmup_games', 'dqn_epsilon_steps'):
            if getattr(self, name) < 0:
                problems.append(f"{name} must not be negative, got {getattr(self, name)}")
        if not self.seeds:
            problems.append("seeds must list at least one seed")
        for seed in [self.seed, *self.seeds]:
            if not 0 <= int(seed) <= 2 ** 64 - 1:
                problems.append(f"seed {seed} is not a 64-bit unsigned integer")
        if problems:
            raise ConfigurationError('; '.join(problems))
        return self

    def write_yaml(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)
        return path


def _check_keys(data: Mapping[str, Any], source: str):
    unknown = sorted(set(data) - set(ExperimentConfig.field_names()))
    if unknown:
        raise ConfigurationError(f"Unknown config keys in {source}: {', '.join(unknown)}")


def settings_defaults() -> Dict[str, Any]:
    defaults = dict(getattr(settings, 'EXPERIMENT_DEFAULTS', {}) or {})
    _check_keys(defaults, 'EXPERIMENT_DEFAULTS')
    return defaults


def environment_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    overrides = {}
    for name in ExperimentConfig.field_names():
        raw = environ.get(ENV_PREFIX + name.upper())
        if raw is not None:
            overrides[name] = yaml.safe_load(raw)
    return overrides


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigurationError(f"Cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"Config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config file {path} must contain a mapping")
    _check_keys(data, str(path))
    return data


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None,
                environ: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """Resolve an ExperimentConfig from every configuration layer."""
    data = ExperimentConfig().to_dict()
    data.update(settings_defaults())
    data.update(environment_overrides(environ))
    if path:
        data.update(read_config_file(path))
    if overrides:
        given = {key: value for key, value in overrides.items() if value is not None}
        _check_keys(given, 'overrides')
        data.update(given)

    try:
        config = ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigurationError(f"Invalid configuration: {exc}") from exc
    config.seeds = [int(seed) for seed in config.seeds]
    config.validate()
    logger.debug(f"Resolved config: {config.to_dict()}")
    return config


__all__ = [
    'PATHWAYS',
    'ExperimentConfig',
    'load_config',
    'read_config_file',
    'environment_overrides',
    'settings_defaults',
]
