#!/usr/bin/env python3

"""Recursive multi-day forecasting with the one-day head of a model"""

from __future__ import annotations
from typing import Optional, Sequence
import logging

import numpy as np
import pandas as pd

from .types import Channel
from .errors import ConfigurationError, DataError
from .model import EntityRecord
from .nn_core import LstmModel, initial_state, lstm_forward

logger = logging.getLogger(__name__)

FORECAST_COLUMNS = ('date_offset', 'pred_infections', 'pred_deaths')


def _window_len(model: LstmModel) -> int:
    return int(model.metadata.get('window_len', 14))


def _offsets(model: LstmModel) -> Sequence[int]:
    channels = len(Channel)
    offsets = model.metadata.get('offsets')
    if offsets is None:
        offsets = list(range(1, model.config.output_dim // channels + 1))
    return list(offsets)


def next_day_head(model: LstmModel) -> slice:
    offsets = _offsets(model)
    if 1 not in offsets:
        raise ConfigurationError(
            f'Recursive forecasting needs a one day offset, model has {offsets}')
    position = offsets.index(1) * len(Channel)
    return slice(position, position + len(Channel))


def predict_next(
    model: LstmModel,
    history: np.ndarray,
    static: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Both channels one day past the end of history"""
    window = history[-_window_len(model):]
    start = initial_state(model.params, static)
    outputs, _, _ = lstm_forward(model.params, window, start)
    return outputs[-1, next_day_head(model)]


def rollout(
    model: LstmModel,
    history: np.ndarray,
    horizon: int,
    static: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Feed each prediction back as the newest day, `horizon` times"""
    if horizon < 1:
        raise ConfigurationError(f'Horizon must be positive, got {horizon}')
    history = np.asarray(history, dtype=float)
    if history.ndim != 2 or len(history) == 0:
        raise DataError(f'Forecast needs a non-empty (days, channels) history, got {history.shape}')
    days = list(history)
    predictions = np.empty((horizon, history.shape[1]))
    for step in range(horizon):
        predictions[step] = predict_next(model, np.array(days), static)
        days.append(predictions[step])
    return predictions


def forecast_entity(
    model: LstmModel,
    entity: EntityRecord,
    horizon: int,
    cut: Optional[int] = None,
) -> np.ndarray:
    """Roll out from the train cut, the start of the test buffer by default"""
    values = entity.series.values()
    if cut is None:
        cut = len(values) - int(model.metadata.get('test_days', 30))
    if not 0 < cut <= len(values):
        raise DataError(f'{entity.key}: forecast cut {cut} outside {len(values)} days')
    static = entity.static_vector if model.config.static_dim > 0 else None
    return rollout(model, values[:cut], horizon, static)


def forecast_frame(predictions: np.ndarray, **flags) -> pd.DataFrame:
    frame = pd.DataFrame({
        FORECAST_COLUMNS[0]: np.arange(1, len(predictions) + 1),
        FORECAST_COLUMNS[1]: predictions[:, Channel.Infections.index],
        FORECAST_COLUMNS[2]: predictions[:, Channel.Deaths.index],
    })
    for column, value in flags.items():
        frame[column] = value
    return frame
