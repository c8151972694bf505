#!/usr/bin/env python3

"""
Windowed supervised training. A window holds `window_len` days of both
channels and is asked for both channels at every offset past its last
day; the model head emits one channel pair per offset, read at the
final timestep.
"""

from __future__ import annotations
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union
from dataclasses import dataclass, field, replace
from pathlib import Path
import logging
import math
import time

import numpy as np
import pandas as pd

from .types import Channel
from .errors import ConfigurationError, DataError, ShapeError, TrainingError
from .model import CaseSeries, EntityRecord
from .losses import LossSpec, compute_loss
from .nn_core import (
    LstmModel, LstmParams, ModelConfig, OptimizerState,
    adam_step, backward, clip_gradients, init_params,
    lstm_forward, seed_hidden, zero_state)
from .utils import hash_arrays, make_rng

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ('epoch', 'loss', 'validation_loss')


@dataclass(frozen=True)
class WindowSpec:
    window_len: int = 14
    offsets: Tuple[int, ...] = (1, 3, 5)

    def __post_init__(self):
        object.__setattr__(self, 'offsets', tuple(sorted(set(int(x) for x in self.offsets))))

    def validate(self) -> WindowSpec:
        if self.window_len < 1:
            raise ConfigurationError(f'Window length must be positive, got {self.window_len}')
        if not self.offsets:
            raise ConfigurationError('At least one target offset is needed')
        if self.offsets[0] < 1:
            raise ConfigurationError(f'Offsets must be positive, got {self.offsets}')
        return self

    @property
    def max_offset(self) -> int:
        return self.offsets[-1]

    @property
    def span(self) -> int:
        """Days covered by one sample, inputs and furthest target"""
        return self.window_len + self.max_offset


class Window(NamedTuple):
    start: int
    inputs: np.ndarray
    targets: np.ndarray
    static: Optional[np.ndarray] = None

    def target_index(self, spec: WindowSpec) -> int:
        return self.start + spec.window_len - 1 + spec.max_offset


def _values(series: Union[CaseSeries, np.ndarray]) -> np.ndarray:
    if isinstance(series, CaseSeries):
        return series.values()
    return np.asarray(series, dtype=float)


def make_windows(
    series: Union[CaseSeries, np.ndarray],
    spec: WindowSpec = WindowSpec(),
    static: Optional[np.ndarray] = None,
) -> List[Window]:
    """One sample per valid start day, in time order"""
    spec.validate()
    values = _values(series)
    count = len(values) - spec.span + 1
    if count < 1:
        raise DataError(
            f'Series of {len(values)} days is too short: '
            f'windows need at least {spec.span} days')
    offsets = np.array(spec.offsets)
    windows = list()
    for start in range(count):
        last = start + spec.window_len - 1
        windows.append(Window(
            start=start,
            inputs=values[start:last + 1],
            targets=values[last + offsets],
            static=static))
    return windows


def split_train_test(series: CaseSeries, test_days: int = 30) -> Tuple[CaseSeries, CaseSeries]:
    if len(series) <= test_days:
        raise DataError(
            f'{series.key}: {len(series)} days leave nothing to train on '
            f'with a {test_days} day test buffer')
    return series.head(len(series) - test_days), series.tail(test_days)


def assert_no_leak(windows: Iterable[Window], spec: WindowSpec, length: int, test_days: int) -> None:
    cut = length - test_days
    for window in windows:
        if window.target_index(spec) >= cut:
            raise TrainingError(
                f'Window starting at day {window.start} reaches day '
                f'{window.target_index(spec)} inside the test buffer (from {cut})')


def split_validation(windows: Sequence[Window], fraction: float) -> Tuple[List[Window], List[Window]]:
    """Hold out the latest fraction of windows"""
    windows = list(windows)
    if fraction <= 0 or len(windows) < 2:
        return windows, []
    held = min(len(windows) - 1, max(1, int(len(windows) * fraction)))
    return windows[:-held], windows[-held:]


def model_config(
    hidden_size: int,
    num_layers: int = 1,
    window: WindowSpec = WindowSpec(),
    static_dim: int = 0,
    rng_seed: int = 0,
    forget_gate: bool = True,
) -> ModelConfig:
    channels = len(Channel)
    return ModelConfig(
        hidden_size=hidden_size,
        num_layers=num_layers,
        input_dim=channels,
        output_dim=channels * len(window.offsets),
        static_dim=static_dim,
        rng_seed=rng_seed,
        forget_gate=forget_gate,
    ).validate()


class EpochRecord(NamedTuple):
    epoch: int
    loss: float
    validation_loss: float = math.nan


@dataclass
class TrainRun:
    config: ModelConfig
    loss: LossSpec = LossSpec()
    window: WindowSpec = WindowSpec()
    test_days: int = 30
    mini_batches: int = 3
    budget: int = 200
    max_seconds: Optional[float] = None
    learning_rate: float = 1e-3
    clip_norm: float = 5.0
    patience: int = 5
    min_improvement: float = 1e-6
    validation_fraction: float = 0.0
    seed: int = 0
    history: List[EpochRecord] = field(default_factory=list)

    def validate(self) -> TrainRun:
        self.config.validate()
        self.loss.validate()
        self.window.validate()
        if self.config.output_dim != len(Channel) * len(self.window.offsets):
            raise ConfigurationError(
                f'Model output dimension {self.config.output_dim} does not '
                f'match {len(self.window.offsets)} offsets')
        if self.test_days < 0:
            raise ConfigurationError(f'test_days must not be negative, got {self.test_days}')
        if self.mini_batches < 1:
            raise ConfigurationError(f'mini_batches must be positive, got {self.mini_batches}')
        if self.budget < 1:
            raise ConfigurationError(f'Epoch budget must be positive, got {self.budget}')
        if not 0 <= self.validation_fraction < 1:
            raise ConfigurationError(
                f'Validation fraction must be in [0, 1), got {self.validation_fraction}')
        return self

    def fresh(self, **kwargs) -> TrainRun:
        """Same settings with an empty history"""
        return replace(self, history=[], **kwargs)


class TrainResult(NamedTuple):
    model: LstmModel
    history: List[EpochRecord]


class TrainingAborted(TrainingError):
    def __init__(self, cause: Exception, model: LstmModel, history: List[EpochRecord]):
        self.cause = cause
        self.model = model
        self.history = history
        super().__init__(f'Training aborted after {len(history)} epochs: {cause}')


def _stack(windows: Sequence[Window]) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    inputs = np.stack([window.inputs for window in windows], axis=1)
    targets = np.stack([window.targets for window in windows], axis=0)
    statics = None
    if all(window.static is not None for window in windows):
        statics = np.stack([window.static for window in windows], axis=0)
    return inputs, targets, statics


def _start_state(params: LstmParams, statics: Optional[np.ndarray], batch: int):
    if params.config.static_dim == 0:
        return zero_state(params.config, batch)
    if statics is None:
        raise ShapeError('Model is seeded from statics but some windows have none')
    return seed_hidden(params, statics)


def window_loss(
    params: LstmParams,
    windows: Sequence[Window],
    spec: LossSpec,
    gradient: bool = True,
) -> Tuple[float, Optional[LstmParams]]:
    """Loss per sample, summed over offsets and both channels"""
    inputs, targets, statics = _stack(windows)
    batch, offsets, channels = targets.shape
    if params.config.output_dim != offsets * channels:
        raise ShapeError(
            f'Model emits {params.config.output_dim} values for '
            f'{offsets} offsets of {channels} channels')
    outputs, _, trace = lstm_forward(params, inputs, _start_state(params, statics, batch))
    pred = outputs[-1].reshape(batch, offsets, channels).transpose(0, 2, 1)
    result = compute_loss(spec, pred, targets.transpose(0, 2, 1))
    # losses average over the sequence axis; undo that to sum over offsets
    value = result.value * offsets / batch
    if not gradient:
        return value, None
    d_outputs = np.zeros_like(outputs)
    d_outputs[-1] = (result.gradient * offsets / batch).transpose(0, 2, 1).reshape(batch, -1)
    return value, backward(params, trace, d_outputs)


class Trainer:
    """Resumable training state of one model over a fixed sample set"""

    def __init__(
        self,
        run: TrainRun,
        windows: Sequence[Window],
        validation: Sequence[Window] = (),
        model: Optional[LstmModel] = None,
        label: str = '',
    ):
        run.validate()
        if not windows:
            raise DataError('No training windows')
        self.run = run
        self.windows = list(windows)
        self.validation = list(validation)
        self.label = label
        if model is None:
            model = LstmModel(run.config, init_params(run.config))
        self.model = model.copy()
        self.optimizer = OptimizerState.for_params(self.model.params, lr=run.learning_rate)
        self.rng = make_rng(run.seed, 'shuffle', label)
        self.best_score = math.inf
        self.best_params = self.model.params.copy()
        self.last_good = self.model.params.copy()
        self.reference_loss = math.inf
        self.stale = 0
        self.stopped = False

    @property
    def epochs(self) -> int:
        return len(self.run.history)

    @property
    def params(self) -> LstmParams:
        return self.model.params

    def validation_loss(self) -> float:
        if not self.validation:
            return math.nan
        value, _ = window_loss(self.params, self.validation, self.run.loss, gradient=False)
        return value

    def epoch(self) -> EpochRecord:
        order = self.rng.permutation(len(self.windows))
        batches = np.array_split(order, min(self.run.mini_batches, len(order)))
        total = 0.0
        for batch in batches:
            value, grads = window_loss(
                self.params, [self.windows[index] for index in batch], self.run.loss)
            clip_gradients(grads, self.run.clip_norm)
            adam_step(self.params, grads, self.optimizer)
            total += value * len(batch)
        loss = total / len(order)
        if not math.isfinite(loss):
            raise TrainingError(f'Epoch loss is not finite: {loss}')
        record = EpochRecord(self.epochs + 1, loss, self.validation_loss())
        self.run.history.append(record)
        return record

    def _track(self, record: EpochRecord) -> None:
        score = record.validation_loss if self.validation else record.loss
        if score < self.best_score:
            self.best_score = score
            self.best_params = self.params.copy()

        # Relative improvement of the training loss drives early stopping
        if record.loss < self.reference_loss * (1.0 - self.run.min_improvement):
            self.reference_loss = record.loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.run.patience:
                self.stopped = True
                logger.debug(f'{self.label}: converged after {record.epoch} epochs')

    def train(self, epochs: Optional[int] = None) -> List[EpochRecord]:
        """Run up to `epochs` more epochs, the whole budget if unset"""
        if epochs is None:
            epochs = self.run.budget - self.epochs
        started = time.monotonic()
        records = list()
        for _ in range(max(0, epochs)):
            if self.stopped:
                break
            if self.run.max_seconds is not None and time.monotonic() - started > self.run.max_seconds:
                logger.info(f'{self.label}: time budget spent after {self.epochs} epochs')
                break
            try:
                record = self.epoch()
            except (TrainingError, DataError) as e:
                self.model.params = self.last_good.copy()
                raise TrainingAborted(e, self.result(), list(self.run.history)) from e
            self.last_good = self.params.copy()
            self._track(record)
            records.append(record)
        return records

    def result(self) -> LstmModel:
        """Best-validation parameters when validating, latest otherwise"""
        params = self.best_params if self.validation and self.epochs else self.params
        model = LstmModel(self.model.config, params.copy(), dict(self.model.metadata))
        model.metadata.update(
            epochs=self.epochs,
            loss=self.run.loss.name,
            window_len=self.run.window.window_len,
            offsets=list(self.run.window.offsets),
            test_days=self.run.test_days,
            seed=self.run.seed)
        if self.validation and self.epochs:
            model.metadata['validation_loss'] = self.best_score
        return model


def entity_windows(entity: EntityRecord, run: TrainRun) -> List[Window]:
    """Training windows of an entity, drawn from before its test buffer"""
    series = entity.series
    needed = run.window.span + run.test_days
    if len(series) < needed:
        raise DataError(
            f'{entity.key}: {len(series)} days, training needs at least {needed}')
    train, _ = split_train_test(series, run.test_days) if run.test_days else (series, None)
    static = entity.static_vector if run.config.static_dim > 0 else None
    windows = make_windows(train, run.window, static)
    assert_no_leak(windows, run.window, len(series), run.test_days)
    return windows


def train_model(
    entity: EntityRecord,
    run: TrainRun,
    extra_windows: Iterable[Window] = (),
    model: Optional[LstmModel] = None,
) -> TrainResult:
    run.validate()
    windows = entity_windows(entity, run) + list(extra_windows)
    train, validation = split_validation(windows, run.validation_fraction)
    trainer = Trainer(run, train, validation, model=model, label=str(entity.key))
    trainer.train()
    result = trainer.result()
    result.metadata['entity'] = str(entity.key)
    result.metadata['data_hash'] = hash_arrays(
        [entity.series.head(len(entity.series) - run.test_days).values()])
    history = list(run.history)
    if history:
        logger.info(
            f'{entity.key}: {len(history)} epochs, loss '
            f'{history[0].loss:.3g} -> {history[-1].loss:.3g}')
    return TrainResult(result, history)


def history_frame(history: Iterable[EpochRecord]) -> pd.DataFrame:
    return pd.DataFrame([tuple(record) for record in history], columns=HISTORY_COLUMNS)


def write_history(path: Path, history: Iterable[EpochRecord], **extra) -> None:
    """Write epoch records, with constant extra columns such as the entity key"""
    frame = history_frame(history)
    for position, (column, value) in enumerate(extra.items()):
        frame.insert(position, column, value)
    frame.to_csv(path, index=False, float_format='%.10g')
