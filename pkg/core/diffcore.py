"""
Dense matrix substrate for every differentiable computation in the toolkit.

Matrices are 2-D float64 numpy arrays in row-major (C) order. Forward and
backward operations come in pairs; ``finite_diff_check`` is the oracle the
test suite and the ``gradcheck`` command use to verify hand-derived gradients.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from core.errors import GradientOracleError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

Matrix = np.ndarray

RELATIVE_ERROR_FLOOR = 1e-8


def as_matrix(x, name: str = 'matrix', check_finite: bool = True) -> Matrix:
    """Coerce to a C-contiguous 2-D float64 array and validate it"""
    m = np.ascontiguousarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {m.ndim}-D array of shape {m.shape}")
    if check_finite and m.size and not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name} contains NaN or Inf entries")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = as_matrix(a, 'left operand')
    b = as_matrix(b, 'right operand')
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: left operand is {a.shape[0]}x{a.shape[1]}, "
                         f"right operand is {b.shape[0]}x{b.shape[1]}; inner dimensions differ")
    return a @ b


def relu_forward(x: Matrix) -> Matrix:
    x = as_matrix(x, 'relu input')
    return np.maximum(x, 0.0)


def relu_backward(x: Matrix, upstream: Matrix) -> Matrix:
    """Pass upstream where x > 0; the subgradient at x <= 0 is taken as 0"""
    x = as_matrix(x, 'relu input')
    upstream = as_matrix(upstream, 'upstream gradient')
    if x.shape != upstream.shape:
        raise ShapeError(f"relu_backward: input {x.shape} vs upstream {upstream.shape}")
    return np.where(x > 0.0, upstream, 0.0)


def pairwise_sqdist(f: Matrix, p: Matrix) -> Matrix:
    """Entry (i, j) is the squared euclidean distance between f_i and p_j.

    Uses explicit differences rather than the |f|^2 - 2fp + |p|^2 expansion,
    so entries are never negative and are exactly zero when rows coincide.
    """
    f = as_matrix(f, 'features')
    p = as_matrix(p, 'prototypes')
    if f.shape[1] != p.shape[1]:
        raise ShapeError(f"pairwise_sqdist: features have {f.shape[1]} columns, "
                         f"prototypes have {p.shape[1]}")
    diff = f[:, None, :] - p[None, :, :]
    return np.einsum('nmd,nmd->nm', diff, diff)


@dataclass(frozen=True)
class GradCheckReport:
    max_relative_error: float
    worst_index: Tuple[int, int]
    passed: bool

    def to_dict(self) -> dict:
        return {
            'max_relative_error': self.max_relative_error,
            'worst_index': list(self.worst_index),
            'passed': self.passed,
        }


def finite_diff_check(loss_fn: Callable[[Matrix], float], params: Matrix, analytic_grad: Matrix,
                      h: float = 1e-4, tol: float = 1e-4) -> GradCheckReport:
    """Compare an analytic gradient against central differences entry by entry.

    Relative error per entry is |a - n| / max(1e-8, |a| + |n|). ``loss_fn`` must
    be deterministic and must not mutate its argument.
    """
    if h <= 0:
        raise ValueError(f"finite difference step must be positive, got {h}")
    params = as_matrix(params, 'params')
    analytic_grad = as_matrix(analytic_grad, 'analytic gradient')
    if params.shape != analytic_grad.shape:
        raise ShapeError(f"finite_diff_check: params {params.shape} vs gradient {analytic_grad.shape}")

    numeric = np.zeros_like(params)
    shifted = params.copy()
    for idx in np.ndindex(*params.shape):
        original = shifted[idx]
        shifted[idx] = original + h
        plus = float(loss_fn(shifted.copy()))
        shifted[idx] = original - h
        minus = float(loss_fn(shifted.copy()))
        shifted[idx] = original
        if not (np.isfinite(plus) and np.isfinite(minus)):
            raise GradientOracleError(f"loss evaluated to a non-finite value at index {idx}")
        numeric[idx] = (plus - minus) / (2.0 * h)

    denom = np.maximum(RELATIVE_ERROR_FLOOR, np.abs(analytic_grad) + np.abs(numeric))
    rel = np.abs(analytic_grad - numeric) / denom
    if rel.size == 0:
        return GradCheckReport(0.0, (0, 0), True)
    worst = np.unravel_index(int(np.argmax(rel)), rel.shape)
    max_err = float(rel[worst])
    report = GradCheckReport(max_err, (int(worst[0]), int(worst[1])), max_err <= tol)
    if not report.passed:
        logger.debug(f"Gradient check failed: max relative error {max_err:.3e} at {report.worst_index}")
    return report
