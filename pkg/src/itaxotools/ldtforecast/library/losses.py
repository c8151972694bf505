#!/usr/bin/env python3

"""
Training objectives. Both accept arrays whose last axis is the
sequence; the value is the per-sequence loss summed over any leading
axes, and the gradient has the shape of the prediction.
"""

from __future__ import annotations
from typing import Callable, Dict, NamedTuple
from dataclasses import dataclass

import numpy as np

from .types import LossKind
from .errors import ConfigurationError, DataError, ShapeError


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind = LossKind.MseAbs
    epsilon: float = 1e-8
    penalty_weight: float = 100.0

    def validate(self) -> LossSpec:
        if not self.epsilon > 0:
            raise ConfigurationError(f'Loss epsilon must be positive, got {self.epsilon}')
        if self.penalty_weight < 0:
            raise ConfigurationError(
                f'Penalty weight must not be negative, got {self.penalty_weight}')
        return self

    @classmethod
    def from_name(cls, name: str, **kwargs) -> LossSpec:
        try:
            kind = LossKind.from_key(name)
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        return cls(kind, **kwargs).validate()

    @property
    def name(self) -> str:
        return self.kind.key


class LossResult(NamedTuple):
    value: float
    gradient: np.ndarray


def _prepare(pred, target):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeError(
            f'Prediction shape {pred.shape} does not match target {target.shape}')
    if pred.ndim == 0 or pred.shape[-1] == 0:
        raise ShapeError('Loss needs at least one value per sequence')
    if not (np.isfinite(pred).all() and np.isfinite(target).all()):
        raise DataError('Loss inputs contain non-finite values')
    return pred, target


def mse_abs(pred, target, spec: LossSpec = LossSpec()) -> LossResult:
    pred, target = _prepare(pred, target)
    T = pred.shape[-1]
    diff = pred - target
    value = float(np.sum(diff * diff)) / T
    return LossResult(value, 2.0 * diff / T)


def rmse_rel(pred, target, spec: LossSpec = LossSpec(LossKind.RmseRel)) -> LossResult:
    pred, target = _prepare(pred, target)
    T = pred.shape[-1]
    denominator = target + spec.epsilon
    relative = (pred - target) / denominator
    value = float(np.sum(relative * relative)) / T
    gradient = 2.0 * relative / denominator / T
    if T > 1 and spec.penalty_weight > 0:
        drops = pred[..., :-1] - pred[..., 1:]
        value += spec.penalty_weight * float(np.sum(np.maximum(drops, 0.0))) / (T - 1)
        slope = spec.penalty_weight / (T - 1) * (drops > 0)
        gradient[..., :-1] += slope
        gradient[..., 1:] -= slope
    return LossResult(value, gradient)


_losses: Dict[LossKind, Callable[..., LossResult]] = {
    LossKind.MseAbs: mse_abs,
    LossKind.RmseRel: rmse_rel,
}


def compute_loss(spec: LossSpec, pred, target) -> LossResult:
    return _losses[spec.kind](pred, target, spec)
