"""
Source corruption protocols adapted to vector data.

Label corruption redraws a label uniformly; feature corruption adds Gaussian
noise (the vector analog of blur) and saturates coordinates to the data
min/max (the analog of salt-and-pepper). Mixed corruption applies each at
half the noise level, independently per sample.
"""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from core.errors import ConfigurationError, InsufficientDataError
from data.dataset import DomainDataset

logger = logging.getLogger(__name__)

GAUSSIAN_SCALE = 2.0
SATURATION_RATE = 0.1


class CorruptionKind(str, Enum):
    LABEL = 'label'
    FEATURE = 'feature'
    MIXED = 'mixed'


@dataclass(frozen=True)
class CorruptionSpec:
    kind: CorruptionKind = CorruptionKind.MIXED
    p_noise: float = 0.0
    seed: int = 0
    exclude_original: bool = False
    gaussian_scale: float = GAUSSIAN_SCALE
    saturation_rate: float = SATURATION_RATE

    def __post_init__(self):
        object.__setattr__(self, 'kind', CorruptionKind(self.kind))
        _check_rate('p_noise', self.p_noise)
        _check_rate('saturation_rate', self.saturation_rate)
        if self.gaussian_scale < 0:
            raise ConfigurationError(f"gaussian_scale must be non-negative, got {self.gaussian_scale}")


def _check_rate(name: str, value: float):
    if not 0.0 <= value <= 1.0:
        raise ConfigurationError(f"{name} must lie in [0, 1], got {value}")


def _current_flags(ds: DomainDataset) -> np.ndarray:
    if ds.clean_flags is not None:
        return ds.clean_flags.copy()
    return np.ones(ds.n_samples, dtype=bool)


def _redraw_labels(ds: DomainDataset, p_noise: float, rng: np.random.Generator,
                   exclude_original: bool) -> np.ndarray:
    n, m = ds.n_samples, ds.class_count
    hit = rng.random(n) < p_noise
    if exclude_original:
        drawn = (ds.labels + rng.integers(1, m, size=n)) % m
    else:
        drawn = rng.integers(0, m, size=n)
    return np.where(hit, drawn, ds.labels)


def _damage_features(ds: DomainDataset, p_noise: float, rng: np.random.Generator,
                     gaussian_scale: float, saturation_rate: float) -> np.ndarray:
    x = ds.features
    n, d = x.shape
    hit = rng.random(n) < p_noise
    noise = rng.standard_normal((n, d)) * (gaussian_scale * x.std(axis=0))
    saturate = rng.random((n, d)) < saturation_rate
    to_max = rng.random((n, d)) < 0.5
    extremes = np.where(to_max, x.max(axis=0), x.min(axis=0))
    damaged = np.where(saturate, extremes, x + noise)
    return np.where(hit[:, None], damaged, x)


def corrupt_labels(ds: DomainDataset, p_noise: float, seed: int,
                   exclude_original: bool = False) -> DomainDataset:
    """Each label redrawn with probability p_noise; flags cleared only where the label changed"""
    _check_rate('p_noise', p_noise)
    if p_noise == 0.0 or ds.n_samples == 0:
        return ds.with_updates(clean_flags=_current_flags(ds))
    labels = _redraw_labels(ds, p_noise, np.random.default_rng(seed), exclude_original)
    flags = _current_flags(ds) & (labels == ds.labels)
    return ds.with_updates(labels=labels, clean_flags=flags)


def corrupt_features(ds: DomainDataset, p_noise: float, seed: int,
                     gaussian_scale: float = GAUSSIAN_SCALE,
                     saturation_rate: float = SATURATION_RATE) -> DomainDataset:
    """Each row damaged with probability p_noise; labels untouched"""
    _check_rate('p_noise', p_noise)
    if ds.n_samples == 0:
        raise InsufficientDataError("cannot corrupt the features of an empty dataset")
    if p_noise == 0.0:
        return ds.with_updates(clean_flags=_current_flags(ds))
    features = _damage_features(ds, p_noise, np.random.default_rng(seed), gaussian_scale, saturation_rate)
    flags = _current_flags(ds) & np.all(features == ds.features, axis=1)
    return ds.with_updates(features=features, clean_flags=flags)


def corrupt_mixed(ds: DomainDataset, p_noise: float, seed: int, exclude_original: bool = False,
                  gaussian_scale: float = GAUSSIAN_SCALE,
                  saturation_rate: float = SATURATION_RATE) -> DomainDataset:
    """Label and feature corruption, each at p_noise / 2 with independent draws"""
    _check_rate('p_noise', p_noise)
    if ds.n_samples == 0:
        raise InsufficientDataError("cannot corrupt an empty dataset")
    if p_noise == 0.0:
        return ds.with_updates(clean_flags=_current_flags(ds))
    label_seq, feature_seq = np.random.SeedSequence(seed).spawn(2)
    half = p_noise / 2.0
    labels = _redraw_labels(ds, half, np.random.default_rng(label_seq), exclude_original)
    features = _damage_features(ds, half, np.random.default_rng(feature_seq), gaussian_scale, saturation_rate)
    flags = _current_flags(ds) & (labels == ds.labels) & np.all(features == ds.features, axis=1)
    return ds.with_updates(features=features, labels=labels, clean_flags=flags)


def corrupt(ds: DomainDataset, spec: CorruptionSpec) -> DomainDataset:
    if spec.kind is CorruptionKind.LABEL:
        out = corrupt_labels(ds, spec.p_noise, spec.seed, spec.exclude_original)
    elif spec.kind is CorruptionKind.FEATURE:
        out = corrupt_features(ds, spec.p_noise, spec.seed, spec.gaussian_scale, spec.saturation_rate)
    else:
        out = corrupt_mixed(ds, spec.p_noise, spec.seed, spec.exclude_original,
                            spec.gaussian_scale, spec.saturation_rate)
    unclean = int((~out.clean_flags).sum())
    logger.debug(f"{spec.kind.value} corruption at {spec.p_noise}: {unclean}/{out.n_samples} samples unclean")
    meta = dict(out.metadata, corruption={'kind': spec.kind.value, 'p_noise': spec.p_noise, 'seed': spec.seed,
                                          'exclude_original': spec.exclude_original})
    return out.with_updates(metadata=meta)
