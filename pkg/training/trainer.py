"""
Training loop: supervised warm-up on the prototype losses, then per-epoch
noise-model refit, zero-weight removal and adversarial adaptation.

The trainer only ever receives target *features*; target labels stay with
the caller for evaluation.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import Config, TrainConfig
from core.errors import ShapeError
from core.losses import objective_terms
from core.model import ModelState, discriminate, extract, prototype_distances
from core.noisemodel import NoiseEstimate, estimate_noise
from data.dataset import DomainDataset
from training.optimizer import MomentumSGD
from utils.decorators import log_performance
from utils.monitoring import Stopwatch, TrainingMonitor

logger = logging.getLogger(__name__)

RECORD_SCHEMA_VERSION = 1


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    losses: Dict[str, float]
    retained_fraction: float
    batches: int
    distance_histogram: Dict[str, list]
    mixture: Optional[Dict[str, list]] = None
    em: Optional[dict] = None
    mean_target_discriminator: Optional[float] = None
    weights: Optional[List[float]] = None
    seconds: float = 0.0

    def to_dict(self) -> dict:
        data = asdict(self)
        data['schema_version'] = RECORD_SCHEMA_VERSION
        return data


@dataclass
class TrainResult:
    model: ModelState
    records: List[EpochRecord] = field(default_factory=list)
    final_noise: Optional[NoiseEstimate] = None


def epoch_batches(indices: np.ndarray, batch_size: int, n_batches: int,
                  rng: np.random.Generator) -> List[np.ndarray]:
    """``n_batches`` batches over ``indices``, reshuffling each time the pool is exhausted"""
    batches: List[np.ndarray] = []
    if indices.size == 0:
        return batches
    order = rng.permutation(indices)
    pos = 0
    while len(batches) < n_batches:
        if pos >= order.size:
            order = rng.permutation(indices)
            pos = 0
        batches.append(order[pos:pos + batch_size])
        pos += batch_size
    return batches


class Trainer:
    """Owns the optimizer state and the shuffling stream for one run"""

    def __init__(self, config: TrainConfig, monitor: Optional[TrainingMonitor] = None,
                 records_path: Optional[Path] = None, checkpoint_dir: Optional[Path] = None):
        self.config = config.validate()
        self.rng = np.random.default_rng([config.seed, 1])
        self.optimizer = MomentumSGD(config)
        self.monitor = monitor or TrainingMonitor()
        self.records_path = Path(records_path) if records_path else None
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.epoch = 0

    def initialize_model(self, source: DomainDataset) -> ModelState:
        cfg = self.config
        return ModelState.initialize(source.in_dim, cfg.hidden_dims, cfg.embedding_dim,
                                     source.class_count, cfg.temperature, cfg.seed)

    # -- one minibatch -------------------------------------------------

    def _extractor_grads(self, model: ModelState, caches_and_grads) -> Dict[str, np.ndarray]:
        grads: Dict[str, np.ndarray] = {}
        for cache, upstream in caches_and_grads:
            if cache is None or upstream is None:
                continue
            for i, g in enumerate(model.extractor.backward(cache, upstream)):
                for name, value in ((f'extractor.{i}.weight', g.weight), (f'extractor.{i}.bias', g.bias)):
                    grads[name] = grads[name] + value if name in grads else value
        return grads

    def _step(self, model: ModelState, xs, ys, ws, xt, lambda2: float,
              mode: str = 'simultaneous') -> Tuple[ModelState, Dict[str, float]]:
        cfg = self.config
        src_f = src_cache = tgt_f = tgt_cache = None
        if xs is not None and len(xs):
            src_f, src_cache = model.extractor.forward(xs)
        if lambda2 > 0 and xt is not None and len(xt):
            tgt_f, tgt_cache = model.extractor.forward(xt)
        if src_f is None and tgt_f is None:
            return model, {}

        terms = objective_terms(src_f, ys, tgt_f, model.prototypes, ws, cfg.lambda1, lambda2)
        proto_obj = terms.prototype_objective(model.prototypes.prototypes.shape)
        values = dict(terms.term_values(), prototype_objective=proto_obj.value)

        if mode == 'alternating':
            params = self.optimizer.step(model.parameters(), {'prototypes': proto_obj.grad_prototypes})
            model = model.with_parameters(params)
            # extractor unchanged, so the cached features are still current
            terms = objective_terms(src_f, ys, tgt_f, model.prototypes, ws, cfg.lambda1, lambda2)
            ext_obj = terms.extractor_objective()
            grads = self._extractor_grads(model, [(src_cache, ext_obj.grad_features),
                                                  (tgt_cache, ext_obj.grad_target_features)])
        else:
            ext_obj = terms.extractor_objective()
            grads = self._extractor_grads(model, [(src_cache, ext_obj.grad_features),
                                                  (tgt_cache, ext_obj.grad_target_features)])
            grads['prototypes'] = proto_obj.grad_prototypes
        values['extractor_objective'] = ext_obj.value
        params = self.optimizer.step(model.parameters(), grads)
        return model.with_parameters(params), values

    # -- bookkeeping ---------------------------------------------------

    def _histogram(self, model: ModelState, source: DomainDataset) -> Dict[str, list]:
        distances = prototype_distances(model, source.features, source.labels)
        counts, edges = np.histogram(distances, bins=self.config.histogram_bins)
        return {'edges': edges.tolist(), 'counts': counts.tolist()}

    @staticmethod
    def mean_discriminator(model: ModelState, target_features: Optional[np.ndarray]) -> Optional[float]:
        if target_features is None or len(target_features) == 0:
            return None
        return float(discriminate(extract(model.extractor, target_features), model.prototypes).mean())

    def _emit(self, model: ModelState, record: EpochRecord, elapsed_ms: float):
        record.seconds = round(elapsed_ms / 1000.0, 4)
        self.monitor.record_epoch(record.phase, elapsed_ms, record.batches)
        if self.records_path is not None:
            self.records_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.records_path, 'a', encoding='utf-8') as fh:
                fh.write(json.dumps(record.to_dict()) + '\n')
        every = self.config.checkpoint_every
        if self.checkpoint_dir is not None and every and record.epoch % every == 0:
            model.save(self.checkpoint_dir / f'checkpoint_epoch{record.epoch:04d}.json', self.config.to_dict())
        logger.info(f"Epoch {record.epoch} ({record.phase}) done in {record.seconds:.2f}s: "
                    f"losses={ {k: round(v, 4) for k, v in record.losses.items()} }, "
                    f"retained={record.retained_fraction:.3f}")

    @staticmethod
    def _mean_values(values: List[Dict[str, float]]) -> Dict[str, float]:
        if not values:
            return {}
        keys = sorted({k for v in values for k in v})
        return {k: float(np.mean([v.get(k, 0.0) for v in values])) for k in keys}

    # -- phases --------------------------------------------------------

    @log_performance(Config.SLOW_EPOCH_MS)
    def warmup_epoch(self, model: ModelState, source: DomainDataset,
                     diagnostic_features: Optional[np.ndarray] = None) -> Tuple[ModelState, EpochRecord]:
        """One epoch of L_cls + lambda1 L_reg on the full source set"""
        cfg = self.config
        with Stopwatch() as watch:
            n_batches = math.ceil(source.n_samples / cfg.batch_size)
            batches = epoch_batches(np.arange(source.n_samples), cfg.batch_size, n_batches, self.rng)
            values = []
            for idx in batches:
                model, v = self._step(model, source.features[idx], source.labels[idx], None, None, 0.0)
                values.append(v)
            self.epoch += 1
            record = EpochRecord(
                epoch=self.epoch,
                phase='warmup',
                losses=self._mean_values(values),
                retained_fraction=1.0,
                batches=len(batches),
                distance_histogram=self._histogram(model, source),
                mean_target_discriminator=self.mean_discriminator(model, diagnostic_features),
            )
        self._emit(model, record, watch.elapsed_ms)
        return model, record

    def warmup(self, model: ModelState, source: DomainDataset,
               diagnostic_features: Optional[np.ndarray] = None) -> Tuple[ModelState, List[EpochRecord]]:
        """Warm-up phase. ``diagnostic_features`` only feeds the discriminator reading of the last record"""
        _check_source(source)
        records = []
        for e in range(self.config.warmup_epochs):
            last = e == self.config.warmup_epochs - 1
            model, record = self.warmup_epoch(model, source, diagnostic_features if last else None)
            records.append(record)
        return model, records

    @log_performance(Config.SLOW_EPOCH_MS)
    def adapt_epoch(self, model: ModelState, source: DomainDataset,
                    target_features: Optional[np.ndarray]) -> Tuple[ModelState, EpochRecord, Optional[NoiseEstimate]]:
        """Refit the noise model, drop zero-weight samples, train on paired batches"""
        cfg = self.config
        _check_source(source)
        target_features = _check_target(target_features, source.in_dim)
        with Stopwatch() as watch:
            estimate = None
            if cfg.noise_removal:
                estimate = estimate_noise(model, source, cfg.eta, cfg.em_max_iter, cfg.em_tol)
                weights = estimate.weights
            else:
                weights = np.ones(source.n_samples)
            survivors = np.flatnonzero(weights > 0)

            lambda2 = cfg.lambda2 if cfg.adversarial else 0.0
            use_target = lambda2 > 0 and target_features is not None and len(target_features) > 0
            if survivors.size == 0:
                logger.warning(f"Epoch {self.epoch + 1}: every source weight is zero; "
                               f"training on adversarial target terms only")
                self.monitor.record_warning()

            n_src = math.ceil(survivors.size / cfg.batch_size)
            n_tgt = math.ceil(len(target_features) / cfg.batch_size) if use_target else 0
            n_batches = max(n_src, n_tgt)
            src_batches = epoch_batches(survivors, cfg.batch_size, n_batches, self.rng)
            tgt_batches = (epoch_batches(np.arange(len(target_features)), cfg.batch_size, n_batches, self.rng)
                           if use_target else [])

            values = []
            for b in range(n_batches):
                xs = ys = ws = xt = None
                if src_batches:
                    idx = src_batches[b]
                    xs, ys, ws = source.features[idx], source.labels[idx], weights[idx]
                if tgt_batches:
                    xt = target_features[tgt_batches[b]]
                model, v = self._step(model, xs, ys, ws, xt, lambda2, cfg.update_mode)
                values.append(v)

            self.epoch += 1
            record = EpochRecord(
                epoch=self.epoch,
                phase='adapt',
                losses=self._mean_values(values),
                retained_fraction=float(survivors.size / source.n_samples) if source.n_samples else 0.0,
                batches=n_batches,
                distance_histogram=self._histogram(model, source),
                mixture=estimate.mixture.to_dict() if estimate else None,
                em=estimate.trace.summary() if estimate else None,
                mean_target_discriminator=self.mean_discriminator(model, target_features),
                weights=weights.tolist(),
            )
        self._emit(model, record, watch.elapsed_ms)
        return model, record, estimate

    def train(self, source: DomainDataset, target_features: Optional[np.ndarray],
              model: Optional[ModelState] = None) -> TrainResult:
        """Warm-up followed by ``train_epochs`` adaptation epochs; deterministic per seed"""
        target_features = _check_target(target_features, source.in_dim)
        if model is None:
            model = self.initialize_model(source)
        logger.info(f"Training: {self.config.warmup_epochs} warm-up + {self.config.train_epochs} adaptation epochs "
                    f"on {source.n_samples} source samples")
        model, records = self.warmup(model, source, target_features)
        final_noise = None
        for _ in range(self.config.train_epochs):
            model, record, final_noise = self.adapt_epoch(model, source, target_features)
            records.append(record)
        return TrainResult(model, records, final_noise)


def _check_source(source):
    if not isinstance(source, DomainDataset):
        raise TypeError(f"source must be a DomainDataset, got {type(source).__name__}")


def _check_target(target_features, in_dim: int) -> Optional[np.ndarray]:
    if target_features is None:
        return None
    if isinstance(target_features, DomainDataset):
        raise TypeError("the trainer accepts target features only, never a labelled target dataset")
    target_features = np.asarray(target_features, dtype=np.float64)
    if target_features.ndim != 2 or target_features.shape[1] != in_dim:
        raise ShapeError(f"target features must be N x {in_dim}, got shape {target_features.shape}")
    return target_features


def warmup(model: ModelState, source: DomainDataset, config: TrainConfig) -> Tuple[ModelState, List[EpochRecord]]:
    return Trainer(config).warmup(model, source)


def adapt_epoch(model: ModelState, source: DomainDataset, target_features: Optional[np.ndarray],
                config: TrainConfig, epoch: int = 0) -> Tuple[ModelState, EpochRecord]:
    trainer = Trainer(config)
    trainer.epoch = epoch
    model, record, _ = trainer.adapt_epoch(model, source, target_features)
    return model, record


def train(config: TrainConfig, source: DomainDataset, target_features: Optional[np.ndarray],
          **kwargs) -> TrainResult:
    return Trainer(config, **kwargs).train(source, target_features)
