"""``MappingModel``: a polynomial map bundled with lazily built derivative tensors."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, OrderError
from .expr import (
    DEFAULT_MAX_ORDER,
    DerivativeTensor,
    PolySystem,
    _PartialCache,
    contract_tensor,
    differentiate,
    parse_system,
)
from .linalg import Subspace, column_space, matrix_rank, singular_values


@dataclass(frozen=True)
class SingularityInfo:
    singular: bool
    rank: int
    image: Subspace
    singular_values: np.ndarray


class MappingModel:
    """Smooth map ``F: R^n -> R^m`` with exact derivatives up to ``p_max``.

    Derivative tensors are built on first use and memoized under a lock, so
    a model can be shared between threads.
    """

    def __init__(self, system: PolySystem, p_max: int = DEFAULT_MAX_ORDER):
        if p_max < 1:
            raise OrderError("p_max must be at least 1")
        self.system = system
        self.p_max = p_max
        self._partials = _PartialCache(system)
        self._tensors: dict[int, DerivativeTensor] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_strings(cls, exprs: Sequence[str] | str, names: Sequence[str], p_max=DEFAULT_MAX_ORDER):
        return cls(parse_system(exprs, names), p_max)

    @property
    def n(self):
        return self.system.n

    @property
    def m(self):
        return self.system.m

    @property
    def names(self):
        return self.system.names

    def __repr__(self):
        return f"MappingModel({self.system.to_strings()}, names={list(self.names)})"

    def _check(self, x, what="point"):
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.n:
            raise DimensionError(f"{what} has {x.size} entries, expected {self.n}")
        return x

    def derivative(self, order: int) -> DerivativeTensor:
        if order > self.p_max:
            raise OrderError(f"derivative order {order} exceeds p_max={self.p_max}")
        with self._lock:
            t = self._tensors.get(order)
        if t is None:
            t = differentiate(self.system, order, self.p_max, _cache=self._partials)
            with self._lock:
                t = self._tensors.setdefault(order, t)
        return t

    def evaluate(self, x) -> np.ndarray:
        return self.system.evaluate(self._check(x))

    __call__ = evaluate

    def jacobian(self, x) -> np.ndarray:
        return self.derivative(1).at(self._check(x))

    def tensor(self, order: int, x) -> np.ndarray:
        if order == 0:
            return self.evaluate(x)
        return self.derivative(order).at(self._check(x))

    def contract(self, order: int, x, h, copies: int) -> np.ndarray:
        """``F^(order)(x)[h]^copies``; ``order == 0`` returns ``F(x)``."""
        x = self._check(x)
        h = self._check(h, "direction")
        if order == 0:
            return self.evaluate(x)
        return contract_tensor(self.derivative(order).at(x), h, copies)

    def is_singular_at(self, x, tol=None, rtol=None) -> SingularityInfo:
        J = self.jacobian(x)
        s = singular_values(J)
        rank = matrix_rank(J, tol=tol, rtol=rtol)
        return SingularityInfo(rank < self.m, rank, column_space(J, tol=tol, rtol=rtol), s)

    def scaled(self, factors) -> "MappingModel":
        return MappingModel(self.system.scaled(factors), self.p_max)


class ProjectedMapping:
    """View ``x -> P F(x)`` of a base model; derivatives are projected too."""

    def __init__(self, base: MappingModel, projector):
        self.base = base
        self.P = np.array(projector, dtype=float)
        self.P.setflags(write=False)

    n = property(lambda self: self.base.n)
    m = property(lambda self: self.base.m)

    def evaluate(self, x):
        return self.P @ self.base.evaluate(x)

    __call__ = evaluate

    def jacobian(self, x):
        return self.P @ self.base.jacobian(x)

    def tensor(self, order, x):
        return np.tensordot(self.P, self.base.tensor(order, x), axes=(1, 0))

    def contract(self, order, x, h, copies):
        return self.P @ self.base.contract(order, x, h, copies)


def evaluate(model: MappingModel, x):
    return model.evaluate(x)


def jacobian(model: MappingModel, x):
    return model.jacobian(x)


def is_singular_at(model: MappingModel, x, tol=None, rtol=None) -> SingularityInfo:
    return model.is_singular_at(x, tol=tol, rtol=rtol)
