"""
Finite-difference oracle suite over every hand-derived gradient.

Each check draws random states, compares the analytic gradient of one loss
with respect to one parameter against central differences and keeps the
worst relative error across states. States near a discriminator clamp
boundary or a rectifier kink are redrawn, as are states whose analytic
gradient has a nonzero entry too small for central differences to resolve.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.diffcore import Matrix, finite_diff_check
from core.errors import ConfigurationError, GradientOracleError
from core.losses import (loss_adv_D, loss_adv_F, loss_cls, loss_reg, objective_extractor,
                         objective_prototypes, objective_warmup)
from core.model import DenseLayer, FeatureExtractor, PrototypeSet, discriminate

logger = logging.getLogger(__name__)

BOUNDARY_MARGIN = 1e-3
MAX_REDRAWS = 200

# batch size, embedding width, class count, extractor input width
STATE_SHAPE = (5, 3, 3, 4)


@dataclass
class OracleState:
    features: Matrix
    labels: np.ndarray
    weights: np.ndarray
    target: Matrix
    protos: PrototypeSet
    lambda1: float
    lambda2: float
    extractor: FeatureExtractor
    inputs: Matrix


# (parameter name, params, loss_fn, analytic gradient)
GradCase = Tuple[str, Matrix, Callable[[Matrix], float], Matrix]


def draw_state(rng: np.random.Generator) -> OracleState:
    n, d, m, k = STATE_SHAPE
    for _ in range(MAX_REDRAWS):
        protos = PrototypeSet(rng.standard_normal((m, d)), float(rng.uniform(1.0, 4.0)))
        target = rng.standard_normal((n, d))
        disc = discriminate(target, protos)
        if np.any(disc < BOUNDARY_MARGIN) or np.any(disc > 1.0 - BOUNDARY_MARGIN):
            continue
        extractor = FeatureExtractor.initialize([k, 5, d], rng)
        inputs = rng.standard_normal((n, k))
        _, cache = extractor.forward(inputs)
        if any(np.abs(z).min() < BOUNDARY_MARGIN for z in cache.pre_activations[:-1]):
            continue
        weights = rng.uniform(0.1, 1.0, size=n)
        weights[rng.random(n) < 0.2] = 0.0
        return OracleState(
            features=rng.standard_normal((n, d)),
            labels=rng.integers(0, m, size=n),
            weights=weights,
            target=target,
            protos=protos,
            lambda1=float(rng.uniform(0.1, 1.0)),
            lambda2=float(rng.uniform(0.1, 1.0)),
            extractor=extractor,
            inputs=inputs,
        )
    raise GradientOracleError(f"no state away from clamp boundaries and kinks after {MAX_REDRAWS} draws")


def _with_protos(state: OracleState, p: Matrix) -> PrototypeSet:
    return PrototypeSet(p, state.protos.temperature)


def _supervised_cases(loss, weighted: bool) -> Callable[[OracleState], List[GradCase]]:
    def build(s: OracleState) -> List[GradCase]:
        w = s.weights if weighted else None
        value = loss(s.features, s.labels, s.protos, w)
        return [
            ('features', s.features, lambda f: loss(f, s.labels, s.protos, w).value, value.grad_features),
            ('prototypes', s.protos.prototypes,
             lambda p: loss(s.features, s.labels, _with_protos(s, p), w).value, value.grad_prototypes),
        ]
    return build


def _adversarial_cases(loss) -> Callable[[OracleState], List[GradCase]]:
    def build(s: OracleState) -> List[GradCase]:
        value = loss(s.target, s.protos)
        return [
            ('features', s.target, lambda t: loss(t, s.protos).value, value.grad_features),
            ('prototypes', s.protos.prototypes,
             lambda p: loss(s.target, _with_protos(s, p)).value, value.grad_prototypes),
        ]
    return build


def _warmup_cases(s: OracleState) -> List[GradCase]:
    value = objective_warmup(s.features, s.labels, s.protos, s.lambda1)
    return [
        ('features', s.features,
         lambda f: objective_warmup(f, s.labels, s.protos, s.lambda1).value, value.grad_features),
        ('prototypes', s.protos.prototypes,
         lambda p: objective_warmup(s.features, s.labels, _with_protos(s, p), s.lambda1).value,
         value.grad_prototypes),
    ]


def _prototype_objective_cases(s: OracleState) -> List[GradCase]:
    def fn(p):
        return objective_prototypes(s.features, s.labels, s.target, _with_protos(s, p),
                                    s.weights, s.lambda1, s.lambda2).value
    value = objective_prototypes(s.features, s.labels, s.target, s.protos, s.weights, s.lambda1, s.lambda2)
    return [('prototypes', s.protos.prototypes, fn, value.grad_prototypes)]


def _extractor_objective_cases(s: OracleState) -> List[GradCase]:
    def on_source(f):
        return objective_extractor(f, s.labels, s.target, s.protos, s.weights, s.lambda1, s.lambda2).value

    def on_target(t):
        return objective_extractor(s.features, s.labels, t, s.protos, s.weights, s.lambda1, s.lambda2).value
    value = objective_extractor(s.features, s.labels, s.target, s.protos, s.weights, s.lambda1, s.lambda2)
    return [
        ('source_features', s.features, on_source, value.grad_features),
        ('target_features', s.target, on_target, value.grad_target_features),
    ]


def _replace_layer(extractor: FeatureExtractor, index: int, weight=None, bias=None) -> FeatureExtractor:
    layers = [DenseLayer(l.weight, l.bias) for l in extractor.layers]
    old = layers[index]
    layers[index] = DenseLayer(old.weight if weight is None else weight,
                               old.bias if bias is None else np.ravel(bias))
    return FeatureExtractor(layers)


def _extractor_cases(s: OracleState) -> List[GradCase]:
    """Prototype classification loss pushed back through the extractor"""
    def loss_through(extractor: FeatureExtractor) -> float:
        out, _ = extractor.forward(s.inputs)
        return loss_cls(out, s.labels, s.protos).value

    out, cache = s.extractor.forward(s.inputs)
    grads = s.extractor.backward(cache, loss_cls(out, s.labels, s.protos).grad_features)
    cases: List[GradCase] = []
    for i, (layer, grad) in enumerate(zip(s.extractor.layers, grads)):
        cases.append((f'{i}.weight', layer.weight,
                       lambda w, i=i: loss_through(_replace_layer(s.extractor, i, weight=w)), grad.weight))
        cases.append((f'{i}.bias', layer.bias.reshape(1, -1),
                       lambda b, i=i: loss_through(_replace_layer(s.extractor, i, bias=b)),
                       grad.bias.reshape(1, -1)))
    return cases


CHECKS: Dict[str, Callable[[OracleState], List[GradCase]]] = {
    'loss_cls': _supervised_cases(loss_cls, weighted=False),
    'loss_reg': _supervised_cases(loss_reg, weighted=False),
    'loss_adv_D': _adversarial_cases(loss_adv_D),
    'loss_adv_F': _adversarial_cases(loss_adv_F),
    'loss_cls_weighted': _supervised_cases(loss_cls, weighted=True),
    'loss_reg_weighted': _supervised_cases(loss_reg, weighted=True),
    'objective_warmup': _warmup_cases,
    'objective_prototypes': _prototype_objective_cases,
    'objective_extractor': _extractor_objective_cases,
    'extractor_backward': _extractor_cases,
}


@dataclass
class CheckResult:
    name: str
    states: int = 0
    max_relative_error: float = 0.0
    worst_state: int = -1
    passed: bool = True

    def update(self, state_index: int, max_err: float, passed: bool):
        self.states = max(self.states, state_index + 1)
        if max_err > self.max_relative_error or self.worst_state < 0:
            self.max_relative_error = max_err
            self.worst_state = state_index
        self.passed = self.passed and passed


@dataclass
class GradCheckSuite:
    h: float
    tol: float
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> List[str]:
        return [r.name for r in self.results if not r.passed]

    def to_dict(self) -> dict:
        return {
            'h': self.h,
            'tol': self.tol,
            'passed': self.passed,
            'checks': [r.__dict__.copy() for r in self.results],
        }


def run_gradcheck(states: int = 100, h: float = 1e-4, tol: float = 1e-4, seed: int = 0,
                  checks: Optional[Sequence[str]] = None) -> GradCheckSuite:
    """Run the selected checks (all by default) over ``states`` random states each"""
    if states < 1:
        raise ConfigurationError(f"need at least one state, got {states}")
    names = list(CHECKS) if checks is None else list(checks)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigurationError(f"unknown gradient checks: {', '.join(unknown)}")

    suite = GradCheckSuite(h=h, tol=tol)
    for c, name in enumerate(names):
        rng = np.random.default_rng([seed, c])
        results: Dict[str, CheckResult] = {}
        for k in range(states):
            for param, params, fn, grad in CHECKS[name](draw_state(rng)):
                key = f'{name}.{param}'
                report = finite_diff_check(fn, params, grad, h=h, tol=tol)
                results.setdefault(key, CheckResult(key)).update(k, report.max_relative_error, report.passed)
        for result in results.values():
            level = logging.INFO if result.passed else logging.WARNING
            logger.log(level, f"gradcheck {result.name}: max relative error {result.max_relative_error:.3e} "
                              f"over {result.states} states ({'ok' if result.passed else 'FAILED'})")
            suite.results.append(result)
    return suite
