"""Finite-sum gradient oracle, oracle-call accounting, and gradient checking.

Everything downstream (optimizers, verification, the experiment harness)
consumes objectives through :class:`FiniteSumProblem`: n component
functions, each exposing a value and a gradient at a point. Charged
oracle access goes through :func:`full_gradient` or explicit
``counter.charge`` calls; diagnostic evaluations (loss curves, true
gradient norms) use the problem's own methods and are never charged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# Dense double-precision decision vector. Parameters are always dense;
# only data features (module `data`) are sparse.
ParamVector = np.ndarray


def as_param_vector(values, d: int | None = None) -> np.ndarray:
    """Validate and return a finite float64 1-d parameter vector."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"parameter vector must be 1-d, got shape {x.shape}")
    if d is not None and x.shape[0] != d:
        raise ValueError(f"expected dimension {d}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("parameter vector contains non-finite entries")
    return x


@dataclass
class OracleCounter:
    """Counts component-gradient evaluations charged to one optimizer run.

    A full-gradient evaluation charges exactly n, a single component
    gradient charges exactly 1. Diagnostic evaluations are never routed
    through a counter.
    """

    component_calls: int = 0

    def charge(self, amount: int) -> None:
        if amount < 0:
            raise ValueError("cannot charge a negative number of oracle calls")
        self.component_calls += amount


class FiniteSumProblem:
    """Objective f(x) = (1/n) sum_i f_i(x) accessed through component oracles.

    Component indices are 1-based in the public interface. Subclasses
    implement :meth:`component_value` and :meth:`component_gradient`;
    they may override :meth:`value` and :meth:`metric_gradient` with
    vectorized versions, which are used for diagnostics only.

    Instances are immutable after construction and safe for concurrent
    read-only evaluation.
    """

    def __init__(self, n: int, d: int, known_smoothness: float | None = None):
        if n < 1:
            raise ValueError(f"component count must be positive, got {n}")
        if d < 1:
            raise ValueError(f"dimension must be positive, got {d}")
        if known_smoothness is not None and known_smoothness <= 0:
            raise ValueError("smoothness constant must be positive when given")
        self.n = int(n)
        self.d = int(d)
        self.known_smoothness = known_smoothness

    def component_value(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def component_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_index(self, i: int) -> None:
        if not 1 <= i <= self.n:
            raise IndexError(f"component index {i} out of range 1..{self.n}")

    def mean_gradient(self, x: np.ndarray) -> np.ndarray:
        """Definitional full gradient: arithmetic mean of all component gradients.

        This is the reference summation used by the charged oracle path,
        so estimator-reset exactness can be asserted bitwise against it.
        """
        grads = np.stack(
            [self.component_gradient(i, x) for i in range(1, self.n + 1)]
        )
        return grads.mean(axis=0)

    def value(self, x: np.ndarray) -> float:
        """Objective value (1/n) sum_i f_i(x). Diagnostic, uncharged."""
        vals = np.array([self.component_value(i, x) for i in range(1, self.n + 1)])
        return float(vals.mean())

    def metric_gradient(self, x: np.ndarray) -> np.ndarray:
        """Full gradient for logging and verification. Diagnostic, uncharged.

        Subclasses may override with a vectorized implementation; agreement
        with :meth:`mean_gradient` is then up to float reassociation.
        """
        return self.mean_gradient(x)


def full_gradient(
    problem: FiniteSumProblem, x: np.ndarray, counter: OracleCounter
) -> np.ndarray:
    """Exact full gradient (1/n) sum_i grad f_i(x), charging n oracle calls."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (problem.d,):
        raise ValueError(
            f"point has shape {x.shape}, expected ({problem.d},)"
        )
    counter.charge(problem.n)
    g = problem.mean_gradient(x)
    if not np.all(np.isfinite(g)):
        for i in range(1, problem.n + 1):
            gi = problem.component_gradient(i, x)
            if not np.all(np.isfinite(gi)):
                raise ValueError(f"non-finite gradient from component {i}")
        raise ValueError("non-finite full gradient")
    return g


def finite_difference_gradient(
    value_fn: Callable[[np.ndarray], float], x: np.ndarray, h: float
) -> np.ndarray:
    """Central-difference gradient of ``value_fn`` at ``x`` with step ``h``.

    Independent oracle for checking analytic gradients: component j is
    (f(x + h e_j) - f(x - h e_j)) / (2 h).
    """
    if h <= 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for j in range(x.shape[0]):
        step = np.zeros_like(x)
        step[j] = h
        grad[j] = (value_fn(x + step) - value_fn(x - step)) / (2.0 * h)
    return grad
