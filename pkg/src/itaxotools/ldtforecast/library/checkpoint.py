#!/usr/bin/env python3

"""Versioned JSON checkpoints for trained models"""

from typing import Any, Dict
from pathlib import Path
import json

import numpy as np

from .errors import DataError
from .nn_core import LstmModel, LstmParams, ModelConfig, parameter_shapes

FORMAT = 'ldtforecast-checkpoint'
VERSION = 1


class BadCheckpoint(DataError):
    def __init__(self, path: Path, error: str):
        self.path = path
        super().__init__(f'{str(path)}: {error}')


def _encode(value: float) -> float:
    # 17 significant digits reproduce every double exactly
    return float(f'{value:.17g}')


def model_to_dict(model: LstmModel) -> Dict[str, Any]:
    params = {
        name: dict(
            shape=list(array.shape),
            data=[_encode(x) for x in array.ravel()])
        for name, array in model.params.items()}
    return dict(
        format=FORMAT,
        version=VERSION,
        config=model.config.to_dict(),
        rng_seed=model.config.rng_seed,
        params=params,
        metadata=model.metadata)


def model_from_dict(data: Dict[str, Any]) -> LstmModel:
    if data.get('format') != FORMAT:
        raise ValueError(f'Not a checkpoint: format {repr(data.get("format"))}')
    if data.get('version') != VERSION:
        raise ValueError(f'Unsupported checkpoint version {data.get("version")}')
    config = ModelConfig.from_dict(data['config'])
    arrays = dict()
    for name, shape in parameter_shapes(config).items():
        entry = data['params'][name]
        if tuple(entry['shape']) != shape:
            raise ValueError(f'{name}: stored shape {entry["shape"]} != {shape}')
        arrays[name] = np.array(entry['data'], dtype=float).reshape(shape)
    return LstmModel(config, LstmParams(config, arrays), dict(data.get('metadata', {})))


def save_model(model: LstmModel, path: Path) -> None:
    path = Path(path)
    with path.open('w', encoding='utf-8') as file:
        json.dump(model_to_dict(model), file, indent=1, sort_keys=True)


def load_model(path: Path) -> LstmModel:
    path = Path(path)
    try:
        with path.open(encoding='utf-8') as file:
            data = json.load(file)
        return model_from_dict(data)
    except (OSError, KeyError, ValueError) as e:
        raise BadCheckpoint(path, str(e)) from e
