"""
Scalar training objectives with closed-form gradients.

Every loss maps distance logits z_ij = -|f_i - p_j|^2 / T to a scalar and is
differentiated first with respect to z, then pushed back to features and
prototypes through ``_logits_backward``. Weighted losses are normalised by the
batch size N, not by the sum of weights.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core.diffcore import Matrix, as_matrix
from core.errors import ConfigurationError, EmptyBatchError, ShapeError
from core.model import PrototypeSet, distance_logits, entropy_from_logits

DISCRIMINATOR_EPS = 1e-7


@dataclass
class LossValue:
    value: float
    grad_features: Optional[Matrix]
    grad_prototypes: Optional[Matrix]
    # composite objectives carry the target-batch feature gradient separately
    grad_target_features: Optional[Matrix] = None


def _check_batch(features: Matrix, labels: np.ndarray, protos: PrototypeSet,
                 weights: Optional[np.ndarray]) -> Tuple[Matrix, np.ndarray, np.ndarray]:
    features = as_matrix(features, 'features')
    n = features.shape[0]
    if n == 0:
        raise EmptyBatchError("loss evaluated on an empty batch")
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= protos.class_count):
        raise ValueError(f"labels must lie in [0, {protos.class_count})")
    labels = labels.astype(np.int64)
    if weights is None:
        weights = np.ones(n)
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (n,):
            raise ShapeError(f"expected {n} weights, got shape {weights.shape}")
        if np.any(weights < 0) or np.any(weights > 1) or not np.all(np.isfinite(weights)):
            raise ValueError("sample weights must lie in [0, 1]")
    return features, labels, weights


def _logits_backward(features: Matrix, protos: PrototypeSet, grad_logits: Matrix) -> Tuple[Matrix, Matrix]:
    """Chain dL/dz through z_ij = -|f_i - p_j|^2 / T"""
    p = protos.prototypes
    scale = 2.0 / protos.temperature
    row = grad_logits.sum(axis=1, keepdims=True)
    col = grad_logits.sum(axis=0)[:, None]
    grad_f = -scale * (features * row - grad_logits @ p)
    grad_p = scale * (grad_logits.T @ features - p * col)
    return grad_f, grad_p


def loss_cls(features: Matrix, labels: np.ndarray, protos: PrototypeSet,
             weights: Optional[np.ndarray] = None) -> LossValue:
    """-(1/N) sum_i w_i log P(y_i | f_i)"""
    features, labels, weights = _check_batch(features, labels, protos, weights)
    n = features.shape[0]
    z = distance_logits(features, protos)
    _, p, log_p = entropy_from_logits(z)
    rows = np.arange(n)
    value = float(-(weights * log_p[rows, labels]).sum() / n)
    grad_z = p.copy()
    grad_z[rows, labels] -= 1.0
    grad_z *= (weights / n)[:, None]
    grad_f, grad_p = _logits_backward(features, protos, grad_z)
    return LossValue(value, grad_f, grad_p)


def loss_reg(features: Matrix, labels: np.ndarray, protos: PrototypeSet,
             weights: Optional[np.ndarray] = None) -> LossValue:
    """(1/N) sum_i w_i |f_i - p_{y_i}|^2"""
    features, labels, weights = _check_batch(features, labels, protos, weights)
    n = features.shape[0]
    diff = features - protos.prototypes[labels]
    value = float((weights * (diff * diff).sum(axis=1)).sum() / n)
    grad_f = 2.0 * diff * (weights / n)[:, None]
    grad_p = np.zeros_like(protos.prototypes)
    np.add.at(grad_p, labels, -grad_f)
    return LossValue(value, grad_f, grad_p)


def neg_mean_log(values: np.ndarray, eps: float = DISCRIMINATOR_EPS) -> Tuple[float, np.ndarray]:
    """-(1/N) sum log(clamp(v)) and its derivative.

    The derivative is -1/(N clamp(v)) everywhere, clamped entries included, so it
    stays bounded by 1/(N eps) and never vanishes at the bounds.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if n == 0:
        raise EmptyBatchError("adversarial loss evaluated on an empty target batch")
    clamped = np.clip(values, eps, 1.0 - eps)
    value = float(-np.log(clamped).sum() / n)
    grad = -1.0 / (n * clamped)
    return value, grad


def _adversarial(target_features: Matrix, protos: PrototypeSet, extractor_side: bool) -> LossValue:
    target_features = as_matrix(target_features, 'target features')
    if target_features.shape[0] == 0:
        raise EmptyBatchError("adversarial loss evaluated on an empty target batch")
    m = protos.class_count
    if m < 2:
        raise ConfigurationError("discriminator needs at least 2 classes")
    log_m = math.log(m)
    z = distance_logits(target_features, protos)
    entropy, p, log_p = entropy_from_logits(z)
    d = np.minimum(entropy / log_m, 1.0)
    if extractor_side:
        value, grad_v = neg_mean_log(1.0 - d)
        grad_d = -grad_v
    else:
        value, grad_d = neg_mean_log(d)
    # dH/dz_ij = -P_ij (log P_ij + H_i)
    grad_z = (grad_d / log_m)[:, None] * (-p * (log_p + entropy[:, None]))
    grad_f, grad_p = _logits_backward(target_features, protos, grad_z)
    return LossValue(value, grad_f, grad_p)


def loss_adv_D(target_features: Matrix, protos: PrototypeSet) -> LossValue:
    """-(1/N_t) sum log D(f_t): keeps target entropy high"""
    return _adversarial(target_features, protos, extractor_side=False)


def loss_adv_F(target_features: Matrix, protos: PrototypeSet) -> LossValue:
    """-(1/N_t) sum log(1 - D(f_t)): pulls targets toward prototypes"""
    return _adversarial(target_features, protos, extractor_side=True)


@dataclass
class ObjectiveTerms:
    """Component losses evaluated once at a shared state"""
    cls: Optional[LossValue]
    reg: Optional[LossValue]
    adv_d: Optional[LossValue]
    adv_f: Optional[LossValue]
    lambda1: float
    lambda2: float

    def term_values(self) -> dict:
        return {
            'cls': self.cls.value if self.cls else 0.0,
            'reg': self.reg.value if self.reg else 0.0,
            'adv_d': self.adv_d.value if self.adv_d else 0.0,
            'adv_f': self.adv_f.value if self.adv_f else 0.0,
        }

    def _supervised(self) -> Tuple[float, Optional[Matrix], Optional[Matrix]]:
        if self.cls is None:
            return 0.0, None, None
        value = self.cls.value + self.lambda1 * self.reg.value
        grad_f = self.cls.grad_features + self.lambda1 * self.reg.grad_features
        grad_p = self.cls.grad_prototypes + self.lambda1 * self.reg.grad_prototypes
        return value, grad_f, grad_p

    def prototype_objective(self, proto_shape: Tuple[int, int]) -> LossValue:
        value, _, grad_p = self._supervised()
        if grad_p is None:
            grad_p = np.zeros(proto_shape)
        if self.adv_d is not None:
            value += self.lambda2 * self.adv_d.value
            grad_p = grad_p + self.lambda2 * self.adv_d.grad_prototypes
        return LossValue(value, None, grad_p)

    def extractor_objective(self) -> LossValue:
        value, grad_f, _ = self._supervised()
        grad_t = None
        if self.adv_f is not None:
            value += self.lambda2 * self.adv_f.value
            grad_t = self.lambda2 * self.adv_f.grad_features
        return LossValue(value, grad_f, None, grad_t)


def _check_tradeoffs(lambda1: float, lambda2: float):
    if lambda1 < 0 or lambda2 < 0:
        raise ConfigurationError(f"trade-off weights must be non-negative, got lambda1={lambda1}, lambda2={lambda2}")


def objective_terms(source_features: Optional[Matrix], source_labels: Optional[np.ndarray],
                    target_features: Optional[Matrix], protos: PrototypeSet,
                    weights: Optional[np.ndarray], lambda1: float, lambda2: float) -> ObjectiveTerms:
    """Evaluate every component once; an absent or empty batch contributes nothing"""
    _check_tradeoffs(lambda1, lambda2)
    cls = reg = adv_d = adv_f = None
    if source_features is not None and len(source_features) > 0:
        cls = loss_cls(source_features, source_labels, protos, weights)
        reg = loss_reg(source_features, source_labels, protos, weights)
    if lambda2 > 0 and target_features is not None and len(target_features) > 0:
        adv_d = loss_adv_D(target_features, protos)
        adv_f = loss_adv_F(target_features, protos)
    return ObjectiveTerms(cls, reg, adv_d, adv_f, lambda1, lambda2)


def objective_warmup(features: Matrix, labels: np.ndarray, protos: PrototypeSet, lambda1: float) -> LossValue:
    """L_cls + lambda1 L_reg with gradients for both features and prototypes"""
    terms = objective_terms(features, labels, None, protos, None, lambda1, 0.0)
    value, grad_f, grad_p = terms._supervised()
    return LossValue(value, grad_f, grad_p)


def objective_prototypes(source_features: Optional[Matrix], source_labels: Optional[np.ndarray],
                         target_features: Optional[Matrix], protos: PrototypeSet,
                         weights: Optional[np.ndarray], lambda1: float, lambda2: float) -> LossValue:
    """L_cls_w + lambda1 L_reg_w + lambda2 L_adv_D, gradient w.r.t. prototypes only"""
    terms = objective_terms(source_features, source_labels, target_features, protos, weights, lambda1, lambda2)
    return terms.prototype_objective(protos.prototypes.shape)


def objective_extractor(source_features: Optional[Matrix], source_labels: Optional[np.ndarray],
                        target_features: Optional[Matrix], protos: PrototypeSet,
                        weights: Optional[np.ndarray], lambda1: float, lambda2: float) -> LossValue:
    """L_cls_w + lambda1 L_reg_w + lambda2 L_adv_F, gradients w.r.t. source and target features"""
    terms = objective_terms(source_features, source_labels, target_features, protos, weights, lambda1, lambda2)
    return terms.extractor_objective()
