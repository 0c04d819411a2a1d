"""
Domain datasets: features, labels, and ground-truth clean flags for corrupted sources
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np

from core.diffcore import as_matrix
from core.errors import ShapeError


class DomainTag(str, Enum):
    SOURCE = 'source'
    TARGET = 'target'


@dataclass(frozen=True)
class DomainDataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    domain_tag: DomainTag = DomainTag.SOURCE
    clean_flags: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        features = as_matrix(self.features, 'dataset features')
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if labels.shape[0] != features.shape[0]:
            raise ShapeError(f"{features.shape[0]} feature rows but {labels.shape[0]} labels")
        if self.class_count < 2:
            raise ValueError(f"class_count must be at least 2, got {self.class_count}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        flags = self.clean_flags
        if flags is not None:
            flags = np.asarray(flags, dtype=bool).ravel()
            if flags.shape[0] != labels.shape[0]:
                raise ShapeError(f"{labels.shape[0]} labels but {flags.shape[0]} clean flags")
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'clean_flags', flags)
        object.__setattr__(self, 'domain_tag', DomainTag(self.domain_tag))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def in_dim(self) -> int:
        return self.features.shape[1]

    @property
    def is_corrupted(self) -> bool:
        return self.clean_flags is not None

    def target_features(self) -> np.ndarray:
        """The only view of a target domain the trainer is handed"""
        return self.features.copy()

    def subset(self, mask: np.ndarray) -> 'DomainDataset':
        flags = None if self.clean_flags is None else self.clean_flags[mask]
        return replace(self, features=self.features[mask], labels=self.labels[mask], clean_flags=flags)

    def with_updates(self, **changes) -> 'DomainDataset':
        return replace(self, **changes)
