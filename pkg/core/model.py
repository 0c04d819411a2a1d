"""
Feature extractor, class prototypes, the distance-based classifier and the
entropy domain discriminator that shares its parameters with the classifier.
"""
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax

from core.diffcore import Matrix, as_matrix, matmul, pairwise_sqdist, relu_backward, relu_forward
from core.errors import ConfigurationError, DatasetParseError, ShapeError

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1
# prototypes must start distinct, otherwise the distance regularizer drags every
# feature onto one shared point before the classifier term can separate them
PROTOTYPE_INIT_STD = 1.0
D_FLOOR = np.finfo(np.float64).tiny


@dataclass
class DenseLayer:
    weight: Matrix  # in x out
    bias: np.ndarray  # out

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


@dataclass
class LayerGrad:
    weight: Matrix
    bias: np.ndarray


@dataclass
class ForwardCache:
    """Inputs and pre-activations of each layer, kept for the backward pass"""
    inputs: List[Matrix] = field(default_factory=list)
    pre_activations: List[Matrix] = field(default_factory=list)


@dataclass
class FeatureExtractor:
    """Fully connected network; rectifier after every layer except the last"""
    layers: List[DenseLayer]

    def __post_init__(self):
        if not self.layers:
            raise ConfigurationError("feature extractor needs at least one layer")
        for i in range(1, len(self.layers)):
            if self.layers[i - 1].out_dim != self.layers[i].in_dim:
                raise ShapeError(f"layer {i - 1} outputs {self.layers[i - 1].out_dim} "
                                 f"but layer {i} expects {self.layers[i].in_dim}")

    @classmethod
    def initialize(cls, dims: Sequence[int], rng: np.random.Generator) -> 'FeatureExtractor':
        """Uniform fan-in/fan-out scaling, zero biases"""
        if len(dims) < 2:
            raise ConfigurationError(f"need input and output dimensions, got {list(dims)}")
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weight = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            layers.append(DenseLayer(weight=weight, bias=np.zeros(fan_out)))
        return cls(layers)

    @property
    def dims(self) -> List[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x: Matrix) -> Tuple[Matrix, ForwardCache]:
        x = as_matrix(x, 'extractor input')
        if x.shape[1] != self.in_dim:
            raise ShapeError(f"extractor expects {self.in_dim} input columns, got {x.shape[1]}")
        cache = ForwardCache()
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            cache.inputs.append(h)
            z = matmul(h, layer.weight) + layer.bias
            cache.pre_activations.append(z)
            h = z if i == last else relu_forward(z)
        return h, cache

    def backward(self, cache: ForwardCache, grad_out: Matrix) -> List[LayerGrad]:
        """Parameter gradients given dL/d(output)"""
        upstream = as_matrix(grad_out, 'extractor upstream gradient')
        grads: List[Optional[LayerGrad]] = [None] * len(self.layers)
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            layer = self.layers[i]
            if i != last:
                upstream = relu_backward(cache.pre_activations[i], upstream)
            grads[i] = LayerGrad(weight=cache.inputs[i].T @ upstream, bias=upstream.sum(axis=0))
            if i > 0:
                upstream = upstream @ layer.weight.T
        return grads

    def copy(self) -> 'FeatureExtractor':
        return FeatureExtractor([DenseLayer(l.weight.copy(), l.bias.copy()) for l in self.layers])


@dataclass
class PrototypeSet:
    prototypes: Matrix  # M x d
    temperature: float

    def __post_init__(self):
        self.prototypes = as_matrix(self.prototypes, 'prototypes')
        if self.prototypes.shape[0] < 2:
            raise ConfigurationError(f"need at least 2 class prototypes, got {self.prototypes.shape[0]}")
        if not self.temperature > 0:
            raise ConfigurationError(f"temperature must be positive, got {self.temperature}")

    @classmethod
    def initialize(cls, class_count: int, dim: int, temperature: float,
                   rng: np.random.Generator, std: float = PROTOTYPE_INIT_STD) -> 'PrototypeSet':
        return cls(rng.normal(0.0, std, size=(class_count, dim)), temperature)

    @property
    def class_count(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    def copy(self) -> 'PrototypeSet':
        return PrototypeSet(self.prototypes.copy(), self.temperature)


@dataclass
class ModelState:
    extractor: FeatureExtractor
    prototypes: PrototypeSet

    def __post_init__(self):
        if self.extractor.out_dim != self.prototypes.dim:
            raise ShapeError(f"extractor outputs {self.extractor.out_dim} dims, "
                             f"prototypes have {self.prototypes.dim}")

    @classmethod
    def initialize(cls, in_dim: int, hidden_dims: Sequence[int], embedding_dim: int,
                   class_count: int, temperature: float, seed: int) -> 'ModelState':
        rng = np.random.default_rng(seed)
        extractor = FeatureExtractor.initialize([in_dim, *hidden_dims, embedding_dim], rng)
        protos = PrototypeSet.initialize(class_count, embedding_dim, temperature, rng)
        return cls(extractor, protos)

    def copy(self) -> 'ModelState':
        return ModelState(self.extractor.copy(), self.prototypes.copy())

    # Parameter dictionaries are what the optimizer sees; names encode the group.
    def parameters(self) -> Dict[str, np.ndarray]:
        params = {}
        for i, layer in enumerate(self.extractor.layers):
            params[f'extractor.{i}.weight'] = layer.weight
            params[f'extractor.{i}.bias'] = layer.bias
        params['prototypes'] = self.prototypes.prototypes
        return params

    def with_parameters(self, params: Dict[str, np.ndarray]) -> 'ModelState':
        layers = [DenseLayer(np.array(params[f'extractor.{i}.weight'], dtype=np.float64),
                             np.array(params[f'extractor.{i}.bias'], dtype=np.float64))
                  for i in range(len(self.extractor.layers))]
        return ModelState(FeatureExtractor(layers),
                          PrototypeSet(params['prototypes'], self.prototypes.temperature))

    def to_dict(self, config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        data = {
            'schema_version': CHECKPOINT_SCHEMA_VERSION,
            'layer_dims': self.extractor.dims,
            'layers': [{'weight': l.weight.tolist(), 'bias': l.bias.tolist()} for l in self.extractor.layers],
            'prototypes': self.prototypes.prototypes.tolist(),
            'temperature': self.prototypes.temperature,
            'class_count': self.prototypes.class_count,
        }
        if config is not None:
            data['config'] = config
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelState':
        version = data.get('schema_version')
        if version != CHECKPOINT_SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported checkpoint schema_version {version!r}")
        layers = [DenseLayer(as_matrix(l['weight'], 'layer weight'), np.asarray(l['bias'], dtype=np.float64))
                  for l in data['layers']]
        extractor = FeatureExtractor(layers)
        if extractor.dims != list(data['layer_dims']):
            raise ShapeError(f"layer_dims {data['layer_dims']} disagree with stored weights {extractor.dims}")
        return cls(extractor, PrototypeSet(data['prototypes'], float(data['temperature'])))

    def save(self, path, config: Optional[Dict[str, Any]] = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix='.tmp')
        with os.fdopen(fd, 'w', encoding='utf-8') as fh:
            json.dump(self.to_dict(config), fh)
        os.replace(tmp, path)
        logger.info(f"Checkpoint written to {path}")
        return path

    @classmethod
    def load(cls, path) -> Tuple['ModelState', Optional[Dict[str, Any]]]:
        """Returns the model and the training config stored with it, if any"""
        try:
            with open(path, 'r', encoding='utf-8') as fh:
                data = json.load(fh)
        except json.JSONDecodeError as e:
            raise DatasetParseError(path, f"invalid checkpoint JSON: {e.msg}", e.lineno)
        return cls.from_dict(data), data.get('config')


def extract(extractor: FeatureExtractor, x: Matrix) -> Matrix:
    features, _ = extractor.forward(x)
    return features


def distance_logits(features: Matrix, protos: PrototypeSet) -> Matrix:
    """z_ij = -d(f_i, p_j) / T"""
    return -pairwise_sqdist(features, protos.prototypes) / protos.temperature


def log_posteriors(features: Matrix, protos: PrototypeSet) -> Matrix:
    return log_softmax(distance_logits(features, protos), axis=1)


def class_posteriors(features: Matrix, protos: PrototypeSet) -> Matrix:
    """Rows sum to 1. Entries for very distant prototypes underflow to exactly 0,
    so the lower bound is closed: P in [0, 1]. Use log_posteriors when the
    magnitude of tiny probabilities matters.
    """
    z = distance_logits(features, protos)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def prototype_distances(model: ModelState, x: Matrix, labels: np.ndarray) -> np.ndarray:
    """Euclidean (not squared) distance of each sample to its labelled prototype"""
    features = extract(model.extractor, x)
    diff = features - model.prototypes.prototypes[np.asarray(labels, dtype=np.int64)]
    return np.sqrt((diff * diff).sum(axis=1))


def classify(features: Matrix, protos: PrototypeSet) -> np.ndarray:
    """Nearest prototype; ties go to the lowest class index"""
    return np.argmin(pairwise_sqdist(features, protos.prototypes), axis=1)


def entropy_from_logits(z: Matrix) -> Tuple[np.ndarray, Matrix, Matrix]:
    """Natural-log prediction entropy per row, plus the posterior and its log"""
    log_p = log_softmax(z, axis=1)
    p = np.exp(log_p)
    return -(p * log_p).sum(axis=1), p, log_p


def discriminate(features: Matrix, protos: PrototypeSet) -> np.ndarray:
    """Normalised prediction entropy D(f) in (0, 1].

    A fully confident row has entropy that underflows to 0; it is floored at the
    smallest positive float so the open lower bound holds.
    """
    if protos.class_count < 2:
        raise ConfigurationError("discriminator needs at least 2 classes")
    z = distance_logits(features, protos)
    entropy, _, _ = entropy_from_logits(z)
    d = np.clip(entropy / math.log(protos.class_count), D_FLOOR, 1.0)
    uniform = z.max(axis=1) == z.min(axis=1)
    d[uniform] = 1.0
    return d
