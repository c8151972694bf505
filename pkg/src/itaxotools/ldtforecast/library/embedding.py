#!/usr/bin/env python3

"""Hidden-state and observed-prefix embeddings of entities"""

from __future__ import annotations
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple
from dataclasses import dataclass
from pathlib import Path
import json
import logging

import numpy as np

from .types import EmbedMode, EmbedSource
from .errors import DataError, UsageError
from .model import EntityKey, EntityRecord
from .nn_core import LstmModel, LstmState, initial_state, lstm_forward

logger = logging.getLogger(__name__)


@dataclass
class Embedding:
    key: EntityKey
    pit_days: int
    mode: EmbedMode
    hidden_part: np.ndarray
    static_part: Optional[np.ndarray] = None
    # None marks an embedding of observed values rather than of a model
    source: Optional[EmbedSource] = EmbedSource.Hidden
    w_static: float = 1.0

    @property
    def combined(self) -> np.ndarray:
        return combine_embedding(self.hidden_part, self.static_part, self.w_static)

    @property
    def with_static(self) -> bool:
        return self.static_part is not None

    def to_dict(self) -> Dict[str, Any]:
        return dict(
            fips=str(self.key),
            pit_days=self.pit_days,
            mode=self.mode.key,
            source=self.source.key if self.source else 'actuals',
            w_static=self.w_static,
            hidden_part=[float(x) for x in self.hidden_part],
            static_part=None if self.static_part is None else [float(x) for x in self.static_part])

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Embedding:
        source = data.get('source', EmbedSource.Hidden.key)
        static = data.get('static_part')
        return cls(
            key=EntityKey(data['fips']),
            pit_days=int(data['pit_days']),
            mode=EmbedMode.from_key(data['mode']),
            hidden_part=np.array(data['hidden_part'], dtype=float),
            static_part=None if static is None else np.array(static, dtype=float),
            source=None if source == 'actuals' else EmbedSource.from_key(source),
            w_static=float(data.get('w_static', 1.0)))


def combine_embedding(
    hidden_part: np.ndarray,
    static_part: Optional[np.ndarray] = None,
    w_static: float = 1.0,
) -> np.ndarray:
    hidden_part = np.asarray(hidden_part, dtype=float)
    if static_part is None:
        return hidden_part.copy()
    return np.concatenate([hidden_part, w_static * np.asarray(static_part, dtype=float)])


def _check_pit(entity: EntityRecord, pit_days: int) -> None:
    if pit_days < 1 or pit_days > len(entity.series):
        raise DataError(
            f'{entity.key}: point in time {pit_days} outside its {len(entity.series)} days')


def _read_state(state: LstmState, mode: EmbedMode, source: EmbedSource) -> np.ndarray:
    layers = range(len(state.h)) if mode is EmbedMode.All else [len(state.h) - 1]
    parts = list()
    if source in (EmbedSource.Hidden, EmbedSource.Both):
        parts.extend(state.h[layer][0] for layer in layers)
    if source in (EmbedSource.Cell, EmbedSource.Both):
        parts.extend(state.c[layer][0] for layer in layers)
    return np.concatenate(parts)


def extract_embedding(
    model: LstmModel,
    entity: EntityRecord,
    pit_days: int,
    mode: EmbedMode = EmbedMode.Last,
    source: EmbedSource = EmbedSource.Hidden,
    with_static: bool = False,
    w_static: float = 1.0,
) -> Embedding:
    """State of the model after reading the first pit_days days"""
    _check_pit(entity, pit_days)
    static = entity.static_vector if model.config.static_dim > 0 else None
    start = initial_state(model.params, static)
    _, final, _ = lstm_forward(model.params, entity.series.values()[:pit_days], start)
    static_part = None
    if with_static:
        if entity.statics is None:
            raise DataError(f'{entity.key}: no static features to combine')
        static_part = entity.static_vector.copy()
    return Embedding(
        key=entity.key,
        pit_days=pit_days,
        mode=mode,
        hidden_part=_read_state(final, mode, source),
        static_part=static_part,
        source=source,
        w_static=w_static)


def actuals_embedding(
    entity: EntityRecord,
    pit_days: int,
    with_static: bool = False,
    w_static: float = 1.0,
) -> Embedding:
    """Observed infections then deaths of the first pit_days days"""
    _check_pit(entity, pit_days)
    values = entity.series.values()[:pit_days]
    static_part = None
    if with_static and entity.statics is not None:
        static_part = entity.static_vector.copy()
    return Embedding(
        key=entity.key,
        pit_days=pit_days,
        mode=EmbedMode.Last,
        hidden_part=values.T.ravel(),
        static_part=static_part,
        source=None,
        w_static=w_static)


def embedding_matrix(embeddings: Sequence[Embedding]) -> Tuple[List[EntityKey], np.ndarray]:
    if not embeddings:
        raise UsageError('No embeddings given')
    sizes = {len(embedding.combined) for embedding in embeddings}
    if len(sizes) > 1:
        raise UsageError(f'Embeddings differ in dimension: {sorted(sizes)}')
    modes = {(embedding.mode, embedding.pit_days, embedding.with_static) for embedding in embeddings}
    if len(modes) > 1:
        raise UsageError('Embeddings mix modes, points in time or static parts')
    keys = [embedding.key for embedding in embeddings]
    return keys, np.stack([embedding.combined for embedding in embeddings])


def write_embeddings(path: Path, embeddings: Iterable[Embedding]) -> None:
    with Path(path).open('w', encoding='utf-8') as file:
        json.dump([embedding.to_dict() for embedding in embeddings], file, indent=1)


def read_embeddings(path: Path) -> List[Embedding]:
    path = Path(path)
    if not path.exists():
        raise DataError(f'Embedding file not found: {str(path)}')
    with path.open(encoding='utf-8') as file:
        return [Embedding.from_dict(item) for item in json.load(file)]
