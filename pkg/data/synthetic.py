"""
Synthetic cross-domain datasets: Gaussian class blobs and affine domain shift
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from core.errors import ConfigurationError, ShapeError
from data.dataset import DomainDataset, DomainTag

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShiftSpec:
    rotation_degrees: float = 0.0
    translation: Tuple[float, ...] = ()
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigurationError(f"shift scale must be positive, got {self.scale}")

    @classmethod
    def with_translation_norm(cls, in_dim: int, rotation_degrees: float, norm: float,
                              scale: float = 1.0) -> 'ShiftSpec':
        """Translation of the given length along the all-ones direction"""
        direction = np.ones(in_dim) / math.sqrt(in_dim)
        return cls(rotation_degrees, tuple(float(v) for v in direction * norm), scale)


def class_centers(class_count: int, in_dim: int, class_sep: float) -> np.ndarray:
    """Regular polygon in the first two coordinates, neighbouring centers class_sep apart"""
    angles = 2.0 * math.pi * np.arange(class_count) / class_count
    radius = class_sep / (2.0 * math.sin(math.pi / class_count))
    centers = np.zeros((class_count, in_dim))
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)
    return centers


def gen_blobs(class_count: int, n_per_class: int, in_dim: int, class_sep: float, seed: int,
              domain_tag: DomainTag = DomainTag.SOURCE) -> DomainDataset:
    """Balanced unit-variance isotropic clusters, deterministic per seed"""
    if class_count < 2:
        raise ConfigurationError(f"need at least 2 classes, got {class_count}")
    if in_dim < 2:
        raise ConfigurationError(f"need at least 2 input dimensions, got {in_dim}")
    if n_per_class < 0:
        raise ConfigurationError(f"n_per_class must be non-negative, got {n_per_class}")
    rng = np.random.default_rng(seed)
    centers = class_centers(class_count, in_dim, class_sep)
    labels = np.repeat(np.arange(class_count), n_per_class)
    features = centers[labels] + rng.standard_normal((labels.size, in_dim))
    order = rng.permutation(labels.size)
    return DomainDataset(
        features=features[order].reshape(-1, in_dim),
        labels=labels[order],
        class_count=class_count,
        domain_tag=domain_tag,
        metadata={'generator': 'blobs', 'class_count': int(class_count), 'n_per_class': int(n_per_class),
                  'in_dim': int(in_dim), 'class_sep': float(class_sep), 'seed': int(seed)},
    )


def rotation_matrix(in_dim: int, degrees: float) -> np.ndarray:
    theta = math.radians(degrees)
    r = np.eye(in_dim)
    c, s = math.cos(theta), math.sin(theta)
    r[:2, :2] = [[c, -s], [s, c]]
    return r


def apply_shift(ds: DomainDataset, shift: ShiftSpec) -> DomainDataset:
    """x -> scale * R(theta) x + translation; rotation acts on the first two coordinates"""
    translation = np.asarray(shift.translation, dtype=np.float64)
    if translation.size == 0:
        translation = np.zeros(ds.in_dim)
    if translation.shape != (ds.in_dim,):
        raise ShapeError(f"translation has {translation.size} entries, dataset has {ds.in_dim} columns")
    shifted = ds.features.copy()
    if shift.rotation_degrees % 360.0 != 0.0:
        shifted = shifted @ rotation_matrix(ds.in_dim, shift.rotation_degrees).T
    if shift.scale != 1.0:
        shifted = shifted * shift.scale
    if np.any(translation != 0.0):
        shifted = shifted + translation
    meta = dict(ds.metadata, shift={'rotation_degrees': shift.rotation_degrees,
                                    'translation': translation.tolist(), 'scale': shift.scale})
    return ds.with_updates(features=shifted, metadata=meta)


def make_domain_pair(spec, seed: int) -> Tuple[DomainDataset, DomainDataset]:
    """Source and shifted target drawn independently, then the source corrupted per spec"""
    from data.corruption import CorruptionSpec, corrupt

    source = gen_blobs(spec.classes, spec.n_per_class, spec.in_dim, spec.class_sep, seed)
    target = gen_blobs(spec.classes, spec.n_per_class, spec.in_dim, spec.class_sep, seed + 1,
                       domain_tag=DomainTag.TARGET)
    shift = ShiftSpec.with_translation_norm(spec.in_dim, spec.rotation_degrees, spec.translation_norm, spec.scale)
    target = apply_shift(target, shift)
    corruption = CorruptionSpec(kind=spec.corruption, p_noise=spec.noise_level, seed=seed + 2,
                                exclude_original=spec.exclude_original_label,
                                gaussian_scale=spec.gaussian_scale, saturation_rate=spec.saturation_rate)
    source = corrupt(source, corruption)
    logger.info(f"Generated domain pair: {source.n_samples} source / {target.n_samples} target samples, "
                f"{spec.corruption} corruption at {spec.noise_level}")
    return source, target
