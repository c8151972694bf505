#!/usr/bin/env python3

"""
Loosely decoupled timeseries: entities whose curves share a shape up to
a time scale `a` and a lag `b`, so that target(t) ~ donor(a * t + b).
Synthetic scenarios, alignment of a donor onto a target, donor matching
within clusters and donor-augmented forecasting live here.
"""

from __future__ import annotations
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple
from dataclasses import dataclass, field
import logging
import math

import numpy as np
import pandas as pd
from scipy.special import expit

from .errors import ConfigurationError, DataError, UsageError
from .model import CaseSeries, EntityKey, EntityRecord
from .entities import build_static_matrix, normalize_series, repair_series
from .clustering import ClusterModel
from .nn_core import LstmModel
from .training import TrainRun, Trainer, Window, entity_windows, make_windows
from .forecast import forecast_entity
from .utils import make_rng

logger = logging.getLogger(__name__)

LAG_GRID = tuple(range(-30, 31))
SCALE_GRID = (0.75, 1.0, 1.25, 1.5)
STATIC_NAMES = ('growth_rate', 'capacity')


class AlignmentError(DataError):
    def __init__(self, donor: str, target: str):
        self.donor = donor
        self.target = target
        super().__init__(f'Donor {donor} is too short to align onto {target}')


@dataclass
class SyntheticScenario:
    num_groups: int = 3
    per_group: int = 8
    growth_rates: Optional[Tuple[float, ...]] = None
    capacities: Optional[Tuple[float, ...]] = None
    lag_range: Tuple[int, int] = (0, 20)
    static_noise: float = 0.05
    curve_noise: float = 0.01
    days: int = 120
    onset: int = 30
    population: int = 100000
    fatality: float = 0.02
    death_delay: int = 7
    rng_seed: int = 7

    @property
    def num_entities(self) -> int:
        return self.num_groups * self.per_group

    def group_params(self) -> List[Tuple[float, float]]:
        rates = self.growth_rates
        if rates is None:
            rates = tuple(0.08 + 0.06 * group for group in range(self.num_groups))
        capacities = self.capacities
        if capacities is None:
            capacities = tuple(0.05 * (group + 1) for group in range(self.num_groups))
        return list(zip(rates, capacities))

    def lags(self) -> List[int]:
        low, high = self.lag_range
        if self.per_group == 1:
            return [int(low)]
        return [int(round(x)) for x in np.linspace(low, high, self.per_group)]

    def validate(self) -> SyntheticScenario:
        if not 1 <= self.num_groups <= 9:
            raise ConfigurationError(f'Between 1 and 9 groups supported, got {self.num_groups}')
        if self.per_group < 1:
            raise ConfigurationError(f'Groups must not be empty, got {self.per_group} per group')
        params = self.group_params()
        if len(params) != self.num_groups:
            raise ConfigurationError('One growth rate and capacity needed per group')
        for rate, capacity in params:
            if not 0 < capacity <= 1:
                raise ConfigurationError(f'Capacity must lie in (0, 1], got {capacity}')
            if rate <= 0:
                raise ConfigurationError(f'Growth rate must be positive, got {rate}')
        if self.lag_range[0] > self.lag_range[1]:
            raise ConfigurationError(f'Empty lag range {self.lag_range}')
        if self.days < self.lag_range[1] + 30:
            raise ConfigurationError(
                f'{self.days} days do not cover lag {self.lag_range[1]} plus 30 days')
        if self.population < 1:
            raise ConfigurationError(f'Population must be positive, got {self.population}')
        return self


class SyntheticSet(NamedTuple):
    entities: List[EntityRecord]
    labels: Dict[EntityKey, int]
    lags: Dict[EntityKey, int]


def synthetic_key(group: int, member: int) -> EntityKey:
    return EntityKey(f'{90 + group:02d}{member + 1:03d}')


def logistic_curve(days: int, rate: float, capacity: float, onset: float) -> np.ndarray:
    """Cumulative fraction of the population, one value per day"""
    return capacity * expit(rate * (np.arange(days, dtype=float) - onset))


def generate_synthetic(scenario: SyntheticScenario = SyntheticScenario()) -> SyntheticSet:
    scenario.validate()
    rng = make_rng(scenario.rng_seed, 'synthetic')
    lags = scenario.lags()
    raw_statics = dict()
    series = dict()
    labels = dict()
    lag_map = dict()
    for group, (rate, capacity) in enumerate(scenario.group_params()):
        for member, lag in enumerate(lags):
            key = synthetic_key(group, member)
            infections = logistic_curve(scenario.days, rate, capacity, scenario.onset + lag)
            deaths = np.zeros_like(infections)
            deaths[scenario.death_delay:] = scenario.fatality * infections[:scenario.days - scenario.death_delay]
            counts = np.stack([infections, deaths], axis=1) * scenario.population
            if scenario.curve_noise > 0:
                counts *= np.maximum(0.0, 1.0 + scenario.curve_noise * rng.standard_normal(counts.shape))
            case = CaseSeries(
                key=key,
                start_date=pd.Timestamp('2020-01-22').date(),
                cumulative_infections=counts[:, 0],
                cumulative_deaths=counts[:, 1])
            series[key] = normalize_series(repair_series(case), scenario.population)
            raw_statics[key] = [rate, capacity] + scenario.static_noise * rng.standard_normal(2)
            labels[key] = group
            lag_map[key] = lag

    keys = list(series)
    frame = pd.DataFrame(
        [raw_statics[key] for key in keys],
        index=pd.Index(keys, name='fips'),
        columns=STATIC_NAMES)
    statics = build_static_matrix(frame, None, keys)
    entities = [
        EntityRecord(key, series[key], statics.for_key(key), dict(group=labels[key], lag=lag_map[key]))
        for key in keys]
    logger.info(
        f'Synthetic scenario: {scenario.num_groups} groups of {scenario.per_group}, '
        f'{scenario.days} days, seed {scenario.rng_seed}')
    return SyntheticSet(entities, labels, lag_map)


@dataclass(frozen=True)
class TrajectoryAlignment:
    donor: EntityKey
    target: EntityKey
    lag_b: int
    scale_a: float
    fit_error: float
    overlap: int = 0
    # Donor day matching the target's last day
    frontier: float = 0.0

    def positions(self, days: Iterable[int]) -> np.ndarray:
        return self.scale_a * np.asarray(days, dtype=float) + self.lag_b

    def target_days(self, donor_length: int) -> Tuple[int, int]:
        """Target days whose donor position lies inside the donor series"""
        first = math.ceil(-self.lag_b / self.scale_a - 1e-9)
        last = math.floor((donor_length - 1 - self.lag_b) / self.scale_a + 1e-9)
        return first, last

    def extra_days(self, donor_length: int) -> int:
        """Target days the donor reaches past the target's own end"""
        return max(0, math.floor((donor_length - 1 - self.frontier) / self.scale_a + 1e-9))

    def to_dict(self) -> Dict:
        return dict(
            donor=str(self.donor),
            target=str(self.target),
            lag_b=self.lag_b,
            scale_a=self.scale_a,
            fit_error=self.fit_error,
            overlap=self.overlap)


def _resample(values: np.ndarray, positions: np.ndarray) -> np.ndarray:
    grid = np.arange(len(values), dtype=float)
    return np.stack([
        np.interp(positions, grid, values[:, channel])
        for channel in range(values.shape[1])], axis=1)


def trajectory_align(
    target_prefix: CaseSeries,
    donor: CaseSeries,
    lag_grid: Sequence[int] = LAG_GRID,
    scale_grid: Sequence[float] = SCALE_GRID,
) -> TrajectoryAlignment:
    """
    Grid search of (a, b) minimizing the mean squared difference between
    the target and the donor read at a * t + b. The target's last day must
    map inside the donor; earlier days that map before the donor's first
    day are left out, as long as half of the target still overlaps.
    """
    if not len(lag_grid) or not len(scale_grid):
        raise ConfigurationError('Alignment grids must not be empty')
    target = target_prefix.values()
    source = donor.values()
    days = len(target)
    steps = np.arange(days, dtype=float)
    min_overlap = max(2, math.ceil(days / 2))

    best = None
    for scale in scale_grid:
        if scale <= 0:
            raise ConfigurationError(f'Time scales must be positive, got {scale}')
        for lag in lag_grid:
            positions = scale * steps + lag
            if positions[-1] > len(source) - 1 + 1e-9:
                continue
            valid = positions >= -1e-9
            overlap = int(valid.sum())
            if overlap < min_overlap:
                continue
            resampled = _resample(source, np.clip(positions[valid], 0, None))
            diff = target[valid] - resampled
            error = float(np.mean(diff * diff))
            rank = (error, abs(lag), abs(scale - 1.0))
            if best is None or rank < best[0]:
                best = (rank, TrajectoryAlignment(
                    donor=donor.key,
                    target=target_prefix.key,
                    lag_b=int(lag),
                    scale_a=float(scale),
                    fit_error=error,
                    overlap=overlap,
                    frontier=float(positions[-1])))
    if best is None:
        raise AlignmentError(donor.key, target_prefix.key)
    return best[1]


class DonorMatch(NamedTuple):
    key: EntityKey
    alignment: TrajectoryAlignment
    extra_days: int

    def to_dict(self) -> Dict:
        return dict(fips=str(self.key), extra_days=self.extra_days, **self.alignment.to_dict())


def _train_part(entity: EntityRecord, test_days: int) -> CaseSeries:
    series = entity.series
    if test_days and len(series) > test_days:
        return series.head(len(series) - test_days)
    return series


def match_donors(
    target: str,
    clusters: ClusterModel,
    entities: Mapping[str, EntityRecord],
    min_extra_days: int = 14,
    test_days: int = 30,
    lag_grid: Sequence[int] = LAG_GRID,
    scale_grid: Sequence[float] = SCALE_GRID,
) -> List[DonorMatch]:
    """Cluster-mates that run ahead of the target, best fit first"""
    target = EntityKey(target)
    label = clusters.label_for(target)
    prefix = _train_part(entities[target], test_days)
    matches = list()
    for key in clusters.members(label):
        if key == target:
            continue
        # Donors stop at their own train cut
        donor = _train_part(entities[key], test_days)
        try:
            alignment = trajectory_align(prefix, donor, lag_grid, scale_grid)
        except AlignmentError as e:
            logger.debug(str(e))
            continue
        extra = alignment.extra_days(len(donor))
        if extra < min_extra_days:
            logger.debug(f'{target}: donor {key} reaches only {extra} days ahead')
            continue
        matches.append(DonorMatch(key, alignment, extra))
    matches.sort(key=lambda match: (match.alignment.fit_error, str(match.key)))
    logger.info(f'{target}: {len(matches)} donors in cluster {label}')
    return matches


def donor_windows(
    match: DonorMatch,
    donor: EntityRecord,
    run: TrainRun,
) -> List[Window]:
    """Windows of the donor series re-read on the target's timeline"""
    series = _train_part(donor, run.test_days)
    first, last = match.alignment.target_days(len(series))
    first = max(0, first)
    if last - first + 1 < run.window.span:
        return []
    aligned = _resample(series.values(), match.alignment.positions(range(first, last + 1)))
    static = donor.static_vector if run.config.static_dim > 0 else None
    return make_windows(aligned, run.window, static)


class AugmentedForecast(NamedTuple):
    predictions: np.ndarray
    provenance: Dict


def forecast_augmented(
    target: EntityRecord,
    donors: Sequence[DonorMatch],
    entities: Mapping[str, EntityRecord],
    model: LstmModel,
    horizon: int,
    run: TrainRun,
    epochs: int = 20,
) -> AugmentedForecast:
    """Fine-tune a copy of the target model on target and donor windows, then roll out"""
    if horizon < 1:
        raise ConfigurationError(f'Horizon must be positive, got {horizon}')
    if any(match.key == target.key for match in donors):
        raise UsageError(f'{target.key} cannot be its own donor')
    provenance = dict(
        target=str(target.key),
        horizon=horizon,
        donors=[match.to_dict() for match in donors],
        epochs=0,
        augmented=False,
        donor_windows=0)

    windows = list()
    for match in donors:
        windows.extend(donor_windows(match, entities[match.key], run))
    if not windows:
        if donors:
            logger.warning(f'{target.key}: donors yield no complete windows')
        provenance['fallback'] = 'no donors'
        return AugmentedForecast(forecast_entity(model, target, horizon), provenance)

    tune = run.fresh(config=model.config, budget=epochs)
    trainer = Trainer(
        tune, entity_windows(target, tune) + windows,
        model=model, label=f'{target.key}+donors')
    trainer.train()
    tuned = trainer.result()
    provenance.update(augmented=True, epochs=trainer.epochs, donor_windows=len(windows))
    logger.info(
        f'{target.key}: fine-tuned on {len(windows)} donor windows '
        f'from {len(donors)} donors for {trainer.epochs} epochs')
    return AugmentedForecast(forecast_entity(tuned, target, horizon), provenance)
