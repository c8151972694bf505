#!/usr/bin/env python3

"""Successive halving over model sizes for a single entity"""

from __future__ import annotations
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple
from concurrent.futures import ThreadPoolExecutor
import logging

from .errors import ConfigurationError
from .model import EntityRecord
from .nn_core import LstmModel
from .training import (
    EpochRecord, TrainRun, Trainer, entity_windows, model_config,
    split_validation, train_model)
from .utils import derive_seed

logger = logging.getLogger(__name__)

HIDDEN_SIZES = (64, 128, 256, 512)
LAYER_COUNTS = (1, 2, 3)
VALIDATION_FRACTION = 0.2


def grid_space(
    hidden_sizes: Iterable[int] = HIDDEN_SIZES,
    layer_counts: Iterable[int] = LAYER_COUNTS,
) -> List[Tuple[int, int]]:
    return [(int(h), int(l)) for h in hidden_sizes for l in layer_counts]


class RankedModel(NamedTuple):
    hidden_size: int
    num_layers: int
    validation_loss: float
    parameters: int
    # Rung after which the arm stopped, None for the winner
    eliminated: Optional[int]
    model: LstmModel
    history: List[EpochRecord]

    def order(self) -> Tuple:
        return (self.validation_loss, self.parameters, self.hidden_size, self.num_layers)


class _Arm:
    def __init__(self, hidden_size: int, num_layers: int, trainer: Trainer):
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.trainer = trainer
        self.eliminated: Optional[int] = None

    @property
    def score(self) -> float:
        return self.trainer.best_score

    def order(self) -> Tuple:
        return (self.score, self.trainer.params.count(), self.hidden_size, self.num_layers)

    def ranked(self) -> RankedModel:
        return RankedModel(
            hidden_size=self.hidden_size,
            num_layers=self.num_layers,
            validation_loss=self.score,
            parameters=self.trainer.params.count(),
            eliminated=self.eliminated,
            model=self.trainer.result(),
            history=list(self.trainer.run.history))


def rung_sizes(arms: int) -> List[int]:
    """Arm counts per rung: 12 gives 12, 6, 3, 1"""
    sizes = [arms]
    while sizes[-1] > 1:
        # floor halving: 3 arms leave 1
        sizes.append(max(1, sizes[-1] // 2))
    return sizes


def _train_all(arms: Sequence[_Arm], epochs: int, workers: int) -> None:
    if workers > 1 and len(arms) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            list(executor.map(lambda arm: arm.trainer.train(epochs), arms))
    else:
        for arm in arms:
            arm.trainer.train(epochs)


def grid_search(
    entity: EntityRecord,
    run: TrainRun,
    space: Optional[Sequence[Tuple[int, int]]] = None,
    budget: Optional[int] = None,
    workers: int = 1,
) -> List[RankedModel]:
    """
    Train every (hidden_size, num_layers) arm for a quarter of the epoch
    budget, keep the better half by validation loss and double their
    epochs, until a single arm is left. Returns all arms, best first.
    """
    space = grid_space() if space is None else list(space)
    if not space:
        raise ConfigurationError('Empty hyperparameter space')
    budget = run.budget if budget is None else budget
    if budget < 1:
        raise ConfigurationError(f'Budget must be positive, got {budget}')
    static_dim = run.config.static_dim

    if len(space) == 1:
        hidden_size, num_layers = space[0]
        config = model_config(
            hidden_size, num_layers, run.window, static_dim,
            run.config.rng_seed, run.config.forget_gate)
        arm_run = run.fresh(config=config, budget=budget)
        result = train_model(entity, arm_run)
        loss = result.model.metadata.get('validation_loss', result.history[-1].loss)
        return [RankedModel(
            hidden_size, num_layers, loss, result.model.params.count(),
            None, result.model, result.history)]

    fraction = run.validation_fraction or VALIDATION_FRACTION
    arm_run = run.fresh(validation_fraction=fraction)
    train, validation = split_validation(entity_windows(entity, arm_run), fraction)

    arms = list()
    for hidden_size, num_layers in space:
        config = model_config(
            hidden_size, num_layers, run.window, static_dim,
            derive_seed(run.config.rng_seed, 'grid', hidden_size, num_layers),
            run.config.forget_gate)
        label = f'{entity.key}/h{hidden_size}l{num_layers}'
        trainer = Trainer(
            arm_run.fresh(config=config, budget=budget), train, validation, label=label)
        arms.append(_Arm(hidden_size, num_layers, trainer))

    epochs = max(1, budget // 4)
    alive = list(arms)
    for rung, survivors in enumerate(rung_sizes(len(arms))[1:]):
        _train_all(alive, epochs, workers)
        alive.sort(key=_Arm.order)
        for arm in alive[survivors:]:
            arm.eliminated = rung
        logger.info(
            f'{entity.key}: rung {rung} trained {len(alive)} arms for {epochs} epochs, '
            f'{survivors} continue')
        alive = alive[:survivors]
        epochs *= 2

    ranked = sorted((arm.ranked() for arm in arms), key=RankedModel.order)
    best = ranked[0]
    logger.info(
        f'{entity.key}: best arm hidden {best.hidden_size}, layers {best.num_layers}, '
        f'validation loss {best.validation_loss:.4g}')
    return ranked


def ranking_rows(ranked: Iterable[RankedModel]) -> List[Dict]:
    return [dict(
        hidden_size=item.hidden_size,
        num_layers=item.num_layers,
        validation_loss=item.validation_loss,
        parameters=item.parameters,
        eliminated='' if item.eliminated is None else item.eliminated,
    ) for item in ranked]
