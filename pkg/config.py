"""
Configuration module for the noise tolerant domain adaptation toolkit.
Operational settings come from the environment (.env supported); experiment
hyper-parameters live in TrainConfig / ExperimentSpec and are loaded from a
JSON config file with command-line overrides.
"""
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

from dotenv import load_dotenv

from core.errors import ConfigurationError

load_dotenv()

CONFIG_SCHEMA_VERSION = 1


class Config:
    """Operational settings"""

    ENV = os.environ.get('NTDA_ENV', 'development')
    LOG_LEVEL = os.environ.get('NTDA_LOG_LEVEL', 'INFO')

    # Run registry (empty disables it)
    DATABASE_URL = os.environ.get('NTDA_DATABASE_URL', '')

    # Outputs
    RUNS_DIR = os.environ.get('NTDA_RUNS_DIR', 'runs')

    # Sweep execution
    SWEEP_WORKERS = int(os.environ.get('NTDA_SWEEP_WORKERS', '1'))

    # Gradient oracle
    GRADCHECK_STATES = int(os.environ.get('NTDA_GRADCHECK_STATES', '100'))
    GRADCHECK_STEP = float(os.environ.get('NTDA_GRADCHECK_STEP', '1e-4'))
    GRADCHECK_TOL = float(os.environ.get('NTDA_GRADCHECK_TOL', '1e-4'))

    # Monitoring
    SLOW_EPOCH_MS = int(os.environ.get('NTDA_SLOW_EPOCH_MS', '5000'))

    @classmethod
    def validate(cls) -> tuple[bool, list[str]]:
        """Validates operational settings"""
        problems = []
        if cls.SWEEP_WORKERS < 1:
            problems.append('NTDA_SWEEP_WORKERS must be >= 1')
        if cls.GRADCHECK_STATES < 1:
            problems.append('NTDA_GRADCHECK_STATES must be >= 1')
        if cls.GRADCHECK_STEP <= 0:
            problems.append('NTDA_GRADCHECK_STEP must be > 0')
        if cls.GRADCHECK_TOL <= 0:
            problems.append('NTDA_GRADCHECK_TOL must be > 0')
        return len(problems) == 0, problems

    @classmethod
    def to_dict(cls) -> Dict[str, Any]:
        """Returns configuration as dictionary"""
        config_vars = {}
        for key in dir(cls):
            if not key.startswith('_') and key.isupper():
                config_vars[key] = getattr(cls, key)
        return config_vars


class DevelopmentConfig(Config):
    LOG_LEVEL = os.environ.get('NTDA_LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    pass


class TestingConfig(Config):
    """Testing configuration: fewer oracle states, no registry"""
    GRADCHECK_STATES = 10
    DATABASE_URL = ''


config_map = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': Config,
}


def get_config(config_name: str = None) -> type:
    """Get configuration class based on environment"""
    if config_name is None:
        config_name = os.environ.get('NTDA_ENV', 'default')
    return config_map.get(config_name, Config)


UPDATE_MODES = ('simultaneous', 'alternating')


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of one training run"""
    warmup_epochs: int = 10
    train_epochs: int = 20
    batch_size: int = 64
    temperature: float = 10.0
    eta: float = 0.5
    lambda1: float = 0.5
    lambda2: float = 1.0
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    hidden_dims: Tuple[int, ...] = (64, 64)
    embedding_dim: int = 16
    update_mode: str = 'simultaneous'
    noise_removal: bool = True
    adversarial: bool = True
    em_max_iter: int = 100
    em_tol: float = 1e-6
    histogram_bins: int = 20
    checkpoint_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'hidden_dims', tuple(int(h) for h in self.hidden_dims))

    def validate(self) -> 'TrainConfig':
        problems = []
        if self.warmup_epochs < 1:
            problems.append(f'warmup_epochs must be >= 1, got {self.warmup_epochs}')
        if self.train_epochs < 0:
            problems.append(f'train_epochs must be >= 0, got {self.train_epochs}')
        if self.batch_size < 1:
            problems.append(f'batch_size must be >= 1, got {self.batch_size}')
        if not self.temperature > 0:
            problems.append(f'temperature must be > 0, got {self.temperature}')
        if not 0.0 <= self.eta < 1.0:
            problems.append(f'eta must lie in [0, 1), got {self.eta}')
        if self.lambda1 < 0 or self.lambda2 < 0:
            problems.append('lambda1 and lambda2 must be >= 0')
        if self.learning_rate < 0 or not 0.0 <= self.momentum < 1.0 or self.weight_decay < 0:
            problems.append('learning_rate and weight_decay must be >= 0, momentum in [0, 1)')
        if self.embedding_dim < 1 or any(h < 1 for h in self.hidden_dims):
            problems.append('layer widths must be >= 1')
        if self.update_mode not in UPDATE_MODES:
            problems.append(f'update_mode must be one of {UPDATE_MODES}, got {self.update_mode!r}')
        if self.em_max_iter < 1 or self.em_tol <= 0:
            problems.append('em_max_iter must be >= 1 and em_tol > 0')
        if self.histogram_bins < 1 or self.checkpoint_every < 0:
            problems.append('histogram_bins must be >= 1 and checkpoint_every >= 0')
        if problems:
            raise ConfigurationError('; '.join(problems))
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['hidden_dims'] = list(self.hidden_dims)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TrainConfig':
        return _build(cls, data, 'train')

    def with_overrides(self, **changes) -> 'TrainConfig':
        return replace(self, **changes).validate()


@dataclass(frozen=True)
class ExperimentSpec:
    """Synthetic domain pair: blobs, target shift and source corruption"""
    classes: int = 4
    in_dim: int = 10
    n_per_class: int = 500
    class_sep: float = 6.0
    rotation_degrees: float = 30.0
    translation_norm: float = 1.0
    scale: float = 1.0
    corruption: str = 'mixed'
    noise_level: float = 0.4
    exclude_original_label: bool = False
    gaussian_scale: float = 2.0
    saturation_rate: float = 0.1

    def validate(self) -> 'ExperimentSpec':
        problems = []
        if self.classes < 2:
            problems.append('classes must be >= 2')
        if self.in_dim < 2:
            problems.append('in_dim must be >= 2')
        if self.n_per_class < 0:
            problems.append('n_per_class must be >= 0')
        if self.corruption not in ('label', 'feature', 'mixed'):
            problems.append(f"corruption must be label, feature or mixed, got {self.corruption!r}")
        if not 0.0 <= self.noise_level <= 1.0:
            problems.append('noise_level must lie in [0, 1]')
        if not self.scale > 0:
            problems.append('scale must be > 0')
        if problems:
            raise ConfigurationError('; '.join(problems))
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentSpec':
        return _build(cls, data, 'data')

    def with_overrides(self, **changes) -> 'ExperimentSpec':
        return replace(self, **changes).validate()


def _build(cls, data: Dict[str, Any], section: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown {section} keys: {', '.join(unknown)}")
    return cls(**data).validate()


def _coerce(raw: str, current: Any) -> Any:
    """Parse a --set value using the type of the field it replaces"""
    try:
        if isinstance(current, bool):
            if raw.lower() in ('1', 'true', 'yes'):
                return True
            if raw.lower() in ('0', 'false', 'no'):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(int(v) for v in raw.split(',') if v)
    except ValueError:
        raise ConfigurationError(f"cannot parse {raw!r} as {type(current).__name__}")
    return raw


def load_config_file(path: Optional[str], overrides: Iterable[str] = (),
                     seed: Optional[int] = None) -> Tuple[TrainConfig, ExperimentSpec]:
    """Read a JSON config file and apply dotted ``section.key=value`` overrides"""
    raw: Dict[str, Any] = {}
    if path:
        config_path = Path(path)
        if not config_path.exists():
            raise ConfigurationError(f"config file not found: {config_path}")
        try:
            raw = json.loads(config_path.read_text(encoding='utf-8'))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{config_path}:{e.lineno}: invalid JSON ({e.msg})")
        unknown = sorted(set(raw) - {'train', 'data', 'schema_version'})
        if unknown:
            raise ConfigurationError(f"unknown config sections: {', '.join(unknown)}")
    train = TrainConfig.from_dict(raw.get('train', {}))
    spec = ExperimentSpec.from_dict(raw.get('data', {}))

    for item in overrides:
        if '=' not in item:
            raise ConfigurationError(f"override must look like section.key=value, got {item!r}")
        key, value = item.split('=', 1)
        section, _, name = key.partition('.')
        if not name:
            section, name = 'train', section
        target = {'train': train, 'data': spec}.get(section)
        if target is None or name not in {f.name for f in fields(target)}:
            raise ConfigurationError(f"unknown config key {key!r}")
        changed = replace(target, **{name: _coerce(value, getattr(target, name))}).validate()
        if section == 'train':
            train = changed
        else:
            spec = changed
    if seed is not None:
        train = train.with_overrides(seed=seed)
    return train, spec
