"""
Structured evaluation output and embedding export
"""
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config import TrainConfig
from core.errors import ShapeError
from core.model import ModelState, classify, extract
from core.noisemodel import compute_weights
from data.dataset import DomainDataset, DomainTag
from evaluation.metrics import accuracy, macro_prf, per_class_accuracy, selection_prf

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
EMBEDDINGS_SCHEMA_VERSION = 1
TIMESTAMP_FIELDS = ('generated_at',)


@dataclass
class MetricsReport:
    target_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class_accuracy: List[float]
    config_echo: Dict
    selection_precision: Optional[float] = None
    selection_recall: Optional[float] = None
    retained_fraction: Optional[float] = None
    schema_version: int = REPORT_SCHEMA_VERSION
    generated_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def to_dict(self, include_timestamps: bool = True) -> Dict:
        data = asdict(self)
        if not include_timestamps:
            for key in TIMESTAMP_FIELDS:
                data.pop(key, None)
        return data

    def to_json(self, include_timestamps: bool = True) -> str:
        return json.dumps(self.to_dict(include_timestamps), sort_keys=True, indent=2)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + '\n', encoding='utf-8')
        return path

    @classmethod
    def from_dict(cls, data: Dict) -> 'MetricsReport':
        return cls(**data)


def evaluate(model: ModelState, target: DomainDataset, config: TrainConfig,
             source: Optional[DomainDataset] = None) -> MetricsReport:
    """Target metrics; selection metrics when a corrupted source with clean flags is given.

    Selection uses the noise model refit on the supplied model, so a report
    produced right after training and one produced later from the checkpoint agree.
    """
    if target.n_samples == 0:
        raise ShapeError("cannot evaluate on an empty target set")
    pred = classify(extract(model.extractor, target.features), model.prototypes)
    m = model.prototypes.class_count
    mp, mr, f1 = macro_prf(pred, target.labels, m)
    report = MetricsReport(
        target_accuracy=accuracy(pred, target.labels),
        macro_precision=mp,
        macro_recall=mr,
        macro_f1=f1,
        per_class_accuracy=per_class_accuracy(pred, target.labels, m),
        config_echo=config.to_dict(),
    )
    if source is not None and config.noise_removal:
        weights, _ = compute_weights(model, source, config.eta, config.em_max_iter, config.em_tol)
        report.retained_fraction = float((weights > 0).mean())
        if source.clean_flags is not None:
            report.selection_precision, report.selection_recall = selection_prf(weights, source.clean_flags)
    return report


def export_embeddings(model: ModelState, datasets: Sequence[DomainDataset], path,
                      source_weights: Optional[np.ndarray] = None) -> Path:
    """CSV rows: domain, true label, predicted label, weight (source only), embedding coordinates"""
    path = Path(path)
    embedding = [f'e{j}' for j in range(model.prototypes.dim)]
    columns = ['domain_tag', 'true_label', 'predicted_label', 'weight'] + embedding
    frames = []
    for ds in datasets:
        features = extract(model.extractor, ds.features)
        weights = np.full(ds.n_samples, np.nan)
        if ds.domain_tag is DomainTag.SOURCE and source_weights is not None:
            weights = np.asarray(source_weights, dtype=np.float64)
            if weights.shape != (ds.n_samples,):
                raise ShapeError(f"{weights.size} source weights for {ds.n_samples} source rows")
        frame = pd.DataFrame(features, columns=embedding)
        frame.insert(0, 'domain_tag', ds.domain_tag.value)
        frame.insert(1, 'true_label', ds.labels)
        frame.insert(2, 'predicted_label', classify(features, model.prototypes))
        frame.insert(3, 'weight', weights)
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as fh:
            fh.write(f'# schema_version={EMBEDDINGS_SCHEMA_VERSION}\n')
            table.to_csv(fh, index=False, float_format='%.17g')
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.info(f"Exported {len(table)} embeddings to {path}")
    return path

