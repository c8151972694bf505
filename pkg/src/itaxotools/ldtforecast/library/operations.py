#!/usr/bin/env python3

"""Pipeline stages and the run that chains them"""

from __future__ import annotations
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
import json
import logging
import platform
import time

import numpy as np
import pandas as pd
import scipy

from .types import ClusterMethod, DataSource, EmbedMode, EmbedSource
from .errors import LdtError, UsageError
from .model import EntityKey, EntityRecord
from .sources import case_files, get_reader, parse_census, parse_usda
from .entities import assemble_entities, read_store, write_store
from .losses import LossSpec
from .nn_core import LstmModel
from .checkpoint import load_model, save_model
from .training import TrainRun, WindowSpec, history_frame, model_config, train_model
from .tuning import grid_search, grid_space, ranking_rows
from .embedding import Embedding, actuals_embedding, extract_embedding, write_embeddings
from .clustering import ClusterModel, cluster_entities, write_clusters
from .metrics import (
    adjusted_rand_index, concordance, horizon_errors, moving_average,
    relative_error, stable_entities, stability_over_time)
from .forecast import forecast_entity, forecast_frame
from .ldt import STATIC_NAMES, SyntheticScenario, forecast_augmented, generate_synthetic, match_donors
from .report import concordance_table, emit_report, stability_error_table
from .config import RunConfig, select_keys
from .utils import derive_seed, hash_file

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.10g'


class Stage(Enum):
    """Pipeline stages, in execution order"""

    Ingest = ('ingest', 'Parse source tables into the entity store')
    Synth = ('synth', 'Generate a synthetic entity store')
    Train = ('train', 'Train one model per entity')
    Embed = ('embed', 'Extract embeddings at each point in time')
    Cluster = ('cluster', 'Cluster embeddings and compare to observed values')
    Stability = ('stability', 'Cluster stability across points in time')
    Evaluate = ('evaluate', 'Forecast error per horizon')
    Forecast = ('forecast', 'Forecast targets, with donors if enabled')
    Report = ('report', 'Gather tables and charts')

    def __init__(self, key: str, description: str):
        self.key = key
        self.description = description

    def __str__(self):
        return self.key

    @classmethod
    def from_key(cls, key: str) -> Stage:
        for stage in cls:
            if stage.key == key:
                return stage
        raise ValueError(f'Unknown stage: {repr(key)}')


class StageError(LdtError):
    def __init__(self, stage: Stage, cause: Exception):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, 'exit_code', 1)
        super().__init__(f'Stage {str(stage)} failed: {type(cause).__name__}: {cause}')


@dataclass
class RunContext:
    config: RunConfig
    out_dir: Path
    entities: List[EntityRecord] = field(default_factory=list)
    models: Dict[EntityKey, LstmModel] = field(default_factory=dict)
    train_run: Optional[TrainRun] = None
    # (pit, mode) -> model embeddings carrying their static parts
    embeddings: Dict[Tuple[int, str], List[Embedding]] = field(default_factory=dict)
    actuals: Dict[int, List[Embedding]] = field(default_factory=dict)
    # (method, pit, mode or 'actuals', with_static) -> clustering
    clusters: Dict[Tuple[str, int, str, bool], ClusterModel] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    seeds: Dict[str, int] = field(default_factory=dict)

    def seed_for(self, stage: Stage) -> int:
        seed = self.config.stage_seed(stage.key)
        self.seeds[stage.key] = seed
        return seed

    def hash_input(self, path: Path) -> None:
        self.inputs[str(path)] = hash_file(path)

    def require_entities(self) -> List[EntityRecord]:
        if not self.entities:
            directory = self.config.path('entities_dir')
            if directory is None:
                directory = self.out_dir / 'entities'
            self.entities = read_store(directory)
            for path in sorted(Path(directory).glob('*.json')):
                self.hash_input(path)
        if not self.entities:
            raise UsageError('No entities to work on')
        return self.entities

    def entity_map(self) -> Dict[EntityKey, EntityRecord]:
        return {entity.key: entity for entity in self.require_entities()}

    def truth(self) -> Dict[str, int]:
        return {
            str(entity.key): int(entity.tags['group'])
            for entity in self.require_entities() if 'group' in entity.tags}

    def require_models(self) -> Dict[EntityKey, LstmModel]:
        if not self.models:
            directory = self.config.path('models_dir') or self.out_dir / 'models'
            for path in sorted(Path(directory).glob('*.json')):
                self.models[EntityKey(path.stem)] = load_model(path)
                self.hash_input(path)
        if not self.models:
            raise UsageError('No trained models; enable the train stage or set paths.models_dir')
        return self.models

    def require_train_run(self) -> TrainRun:
        if self.train_run is None:
            model = next(iter(self.require_models().values()))
            self.train_run = build_train_run(self.config, model.config.static_dim, self.seed_for(Stage.Train))
            self.train_run = self.train_run.fresh(config=model.config)
        return self.train_run


class RunReport(NamedTuple):
    manifest: Dict[str, Any]
    context: RunContext


stages: Dict[Stage, Callable[[RunContext], None]] = dict()


def stage(key: Stage) -> Callable:
    def decorator(func: Callable[[RunContext], None]) -> Callable[[RunContext], None]:
        stages[key] = func
        return func
    return decorator


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def _write_json(data: Any, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8') as file:
        json.dump(data, file, indent=1)
    return path


def build_train_run(config: RunConfig, static_dim: int, seed: int) -> TrainRun:
    section = config['train']
    window = WindowSpec(int(section['window']), tuple(section['offsets']))
    loss = LossSpec.from_name(section['loss'], penalty_weight=float(section['penalty_weight']))
    model = model_config(
        int(section['hidden_size']), int(section['num_layers']), window,
        static_dim if section['seed_statics'] else 0,
        derive_seed(seed, 'init'), bool(section['forget_gate']))
    return TrainRun(
        config=model,
        loss=loss,
        window=window,
        test_days=int(section['test_days']),
        mini_batches=int(section['mini_batches']),
        budget=int(section['budget_epochs']),
        learning_rate=float(section['learning_rate']),
        clip_norm=float(section['clip_norm']),
        patience=int(section['patience']),
        seed=seed,
    ).validate()


@stage(Stage.Ingest)
def ingest_stage(context: RunContext) -> None:
    config = context.config
    section = config['ingest']
    states = list(section['states'])
    census_path = config.path('census')
    census = parse_census(
        census_path, states=states,
        reference_year=section['year'], summary_level=int(section['summary_level']))
    context.hash_input(census_path)
    reports = [census.report.summary()]

    usda = None
    usda_path = config.path('usda')
    if usda_path is not None:
        usda = parse_usda(usda_path, states=states)
        context.hash_input(usda_path)
        reports.append(usda.report.summary())

    files = case_files(config.path('cases_dir'))
    for _, path in files:
        context.hash_input(path)
    reader = get_reader(DataSource.DailyCases, states=states)
    cases = reader(files)
    reports.append(reader.report.summary())

    records, statics = assemble_entities(
        census.features, usda.features if usda is not None else None, cases)
    manifest = statics.manifest()
    manifest['reports'] = reports
    write_store(context.out_dir / 'entities', records, manifest)
    context.entities = records
    logger.info(f'Ingested {len(records)} entities with {len(statics.names)} static features')


@stage(Stage.Synth)
def synth_stage(context: RunContext) -> None:
    section = context.config['synth']
    scenario = SyntheticScenario(
        num_groups=int(section['groups']),
        per_group=int(section['per_group']),
        lag_range=(int(section['lag_min']), int(section['lag_max'])),
        static_noise=float(section['static_noise']),
        curve_noise=float(section['curve_noise']),
        days=int(section['days']),
        rng_seed=context.seed_for(Stage.Synth))
    synthetic = generate_synthetic(scenario)
    write_store(
        context.out_dir / 'entities', synthetic.entities,
        dict(names=list(STATIC_NAMES), synthetic=True, rng_seed=scenario.rng_seed))
    _write_json(
        {str(key): label for key, label in synthetic.labels.items()},
        context.out_dir / 'truth.json')
    context.entities = synthetic.entities


def _train_grid(context: RunContext, run: TrainRun, keys: List[EntityKey]) -> List[pd.DataFrame]:
    section = context.config['train']
    space = grid_space(section['grid_hidden'], section['grid_layers'])
    entities = context.entity_map()
    rankings = dict()
    frames = list()
    for key in keys:
        ranked = grid_search(entities[key], run.fresh(), space, workers=int(section['workers']))
        rankings[key] = {(item.hidden_size, item.num_layers): item for item in ranked}
        frame = pd.DataFrame(ranking_rows(ranked))
        frame.insert(0, 'fips', str(key))
        frames.append(frame)
    _write_csv(pd.concat(frames, ignore_index=True), context.out_dir / 'grid.csv')

    # One shared size for the whole study: the lowest median validation loss
    def score(arm):
        losses = [rankings[key][arm].validation_loss for key in keys]
        return (float(np.median(losses)), rankings[keys[0]][arm].parameters, arm)
    chosen = min(space, key=score)
    logger.info(f'Study size: hidden {chosen[0]}, layers {chosen[1]}')
    histories = list()
    for key in keys:
        item = rankings[key][chosen]
        context.models[key] = item.model
        frame = history_frame(item.history)
        frame.insert(0, 'fips', str(key))
        histories.append(frame)
    return histories


@stage(Stage.Train)
def train_stage(context: RunContext) -> None:
    section = context.config['train']
    entities = context.entity_map()
    keys = [EntityKey(key) for key in select_keys(entities.keys(), section['fips'])]
    static_dim = entities[keys[0]].static_dim
    run = build_train_run(context.config, static_dim, context.seed_for(Stage.Train))
    context.train_run = run

    if section['grid']:
        histories = _train_grid(context, run, keys)
    else:
        histories = list()
        for key in keys:
            result = train_model(entities[key], run.fresh())
            context.models[key] = result.model
            frame = history_frame(result.history)
            frame.insert(0, 'fips', str(key))
            histories.append(frame)

    models_dir = context.out_dir / 'models'
    models_dir.mkdir(parents=True, exist_ok=True)
    for key, model in context.models.items():
        save_model(model, models_dir / f'{key}.json')
    _write_csv(pd.concat(histories, ignore_index=True), context.out_dir / 'history.csv')


@stage(Stage.Embed)
def embed_stage(context: RunContext) -> None:
    section = context.config['embed']
    models = context.require_models()
    entities = context.entity_map()
    source = EmbedSource.from_key(section['source'])
    w_static = float(section['w_static'])
    directory = context.out_dir / 'embeddings'
    directory.mkdir(parents=True, exist_ok=True)
    for pit in sorted(int(pit) for pit in section['pits']):
        eligible = [key for key in models if len(entities[key].series) >= pit]
        skipped = len(models) - len(eligible)
        if skipped:
            logger.warning(f'PIT {pit}: {skipped} entities have fewer days, skipped')
        for mode in section['modes']:
            mode = EmbedMode.from_key(mode)
            embeddings = [
                extract_embedding(
                    models[key], entities[key], pit, mode, source,
                    with_static=entities[key].statics is not None, w_static=w_static)
                for key in eligible]
            context.embeddings[(pit, mode.key)] = embeddings
            write_embeddings(directory / f'pit{pit}_{mode.key}.json', embeddings)
        actuals = [
            actuals_embedding(entities[key], pit, with_static=True, w_static=w_static)
            for key in eligible]
        context.actuals[pit] = actuals
        write_embeddings(directory / f'pit{pit}_actuals.json', actuals)


def _hidden_only(embeddings: List[Embedding]) -> List[Embedding]:
    return [replace(embedding, static_part=None) for embedding in embeddings]


def _static_tag(with_static: bool) -> str:
    return 'static' if with_static else 'hidden'


@stage(Stage.Cluster)
def cluster_stage(context: RunContext) -> None:
    section = context.config['cluster']
    if not context.embeddings:
        raise UsageError('Clustering needs the embed stage in the same run')
    k = int(section['k'])
    seed = context.seed_for(Stage.Cluster)
    directory = context.out_dir / 'clusters'
    directory.mkdir(parents=True, exist_ok=True)
    truth = context.truth()
    rows, truth_rows = list(), list()

    def clustered(method, pit, mode, with_static, embeddings):
        if with_static and any(embedding.static_part is None for embedding in embeddings):
            return None
        use = embeddings if with_static else _hidden_only(embeddings)
        model = cluster_entities(
            use, method, k, restarts=int(section['restarts']), seed=seed)
        context.clusters[(method.key, pit, mode, with_static)] = model
        name = f'{method.key}_pit{pit}_{mode}_{_static_tag(with_static)}.json'
        write_clusters(directory / name, model)
        return model

    for method in (ClusterMethod.from_key(key) for key in section['methods']):
        for with_static in (bool(flag) for flag in section['with_static']):
            for pit in sorted(context.actuals):
                actual = clustered(method, pit, 'actuals', with_static, context.actuals[pit])
                for (embed_pit, mode), embeddings in sorted(context.embeddings.items()):
                    if embed_pit != pit:
                        continue
                    model = clustered(method, pit, mode, with_static, embeddings)
                    if model is None:
                        continue
                    labels = model.labels_by_key()
                    if actual is not None:
                        acc, ari = concordance(labels, actual.labels_by_key(), k)
                        rows.append(dict(
                            method=method.key, pit=pit, k=k, with_static=with_static,
                            mode=mode, acc=acc, ari=ari))
                    if truth:
                        keys = sorted(labels)
                        truth_rows.append(dict(
                            method=method.key, pit=pit, mode=mode, with_static=with_static,
                            ari_truth=adjusted_rand_index(
                                [labels[key] for key in keys], [truth[key] for key in keys])))
    _write_csv(concordance_table(rows), directory / 'concordance.csv')
    if truth_rows:
        _write_csv(pd.DataFrame(truth_rows), directory / 'truth.csv')


def _common(labels_by_pit: Dict[int, Dict[str, int]]) -> Dict[int, Dict[str, int]]:
    keys = set.intersection(*(set(labels) for labels in labels_by_pit.values()))
    return {
        pit: {key: label for key, label in labels.items() if key in keys}
        for pit, labels in labels_by_pit.items()}


@stage(Stage.Stability)
def stability_stage(context: RunContext) -> None:
    if not context.clusters:
        raise UsageError('Stability needs the cluster stage in the same run')
    reference = int(context.config['stability']['reference_pit'])
    k = int(context.config['cluster']['k'])
    series = dict()
    for (method, pit, mode, with_static), model in context.clusters.items():
        series.setdefault((method, mode, with_static), dict())[pit] = model.labels_by_key()

    frames, error_rows = list(), list()
    for (method, mode, with_static), labels_by_pit in sorted(series.items()):
        if reference not in labels_by_pit:
            continue
        labels_by_pit = _common(labels_by_pit)
        frame = stability_over_time(labels_by_pit, k, reference)
        frame.insert(0, 'with_static', with_static)
        frame.insert(0, 'mode', mode)
        frame.insert(0, 'method', method)
        frames.append(frame)
        if mode == 'actuals':
            continue
        observed = series.get((method, 'actuals', with_static))
        if observed is None or reference not in observed:
            continue
        for pit in sorted(labels_by_pit):
            if pit == reference or pit not in observed:
                continue
            both = _common({
                0: observed[reference], 1: observed[pit],
                2: labels_by_pit[reference], 3: labels_by_pit[pit]})
            stable_actual = set(stable_entities(both[0], both[1], k))
            stable_embedding = set(stable_entities(both[2], both[3], k))
            if not stable_actual:
                continue
            error_rows.append(dict(
                method=method, mode=mode, with_static=with_static, pit=pit,
                n_actual=len(stable_actual),
                n_embedding=len(stable_actual & stable_embedding)))
    directory = context.out_dir / 'clusters'
    if frames:
        _write_csv(pd.concat(frames, ignore_index=True), directory / 'stability_over_time.csv')
    _write_csv(stability_error_table(error_rows), directory / 'stability_error.csv')


@stage(Stage.Evaluate)
def evaluate_stage(context: RunContext) -> None:
    horizons = int(context.config['evaluate']['horizons'])
    entities = context.entity_map()
    directory = context.out_dir / 'curves'
    for key, model in sorted(context.require_models().items()):
        _write_csv(horizon_errors(model, entities[key], horizons), directory / f'{key}.csv')


def _actual_columns(entity: EntityRecord, cut: int, horizon: int) -> Dict[str, np.ndarray]:
    values = entity.series.values()[cut:cut + horizon]
    padded = np.full((horizon, 2), np.nan)
    padded[:len(values)] = values
    return dict(actual_infections=padded[:, 0], actual_deaths=padded[:, 1])


def moving_average_error(predictions: np.ndarray, actual: np.ndarray, window: int) -> float:
    """Mean absolute relative error of the smoothed infection forecast"""
    known = ~np.isnan(actual)
    if not known.any():
        return float('nan')
    smoothed = moving_average(predictions, window)
    return float(np.mean(np.abs(relative_error(smoothed[known], actual[known]))))


@stage(Stage.Forecast)
def forecast_stage(context: RunContext) -> None:
    section = context.config['forecast']
    models = context.require_models()
    entities = context.entity_map()
    run = context.require_train_run()
    horizon = int(section['horizon'])
    window = int(section['moving_average'])
    keys = [EntityKey(key) for key in select_keys(models.keys(), section['targets'])]

    clusters = None
    if section['augment']:
        pit, mode = int(section['pit']), section['mode']
        with_static = bool(section['with_static'])
        clusters = context.clusters.get((section['method'], pit, mode, with_static))
        if clusters is None:
            clusters = context.clusters.get((section['method'], pit, mode, False))
        if clusters is None:
            raise UsageError(
                f'No {section["method"]} clustering at PIT {pit} for donor matching')

    directory = context.out_dir / 'forecasts'
    provenance, summary = list(), list()
    for key in keys:
        entity = entities[key]
        model = models[key]
        cut = len(entity.series) - run.test_days
        plain = forecast_entity(model, entity, horizon, cut=cut)
        predictions, donors, record = plain, [], dict(target=str(key), augmented=False)
        if clusters is not None and key in clusters.keys:
            donors = match_donors(
                key, clusters, entities, int(section['min_extra_days']), run.test_days)
            augmented = forecast_augmented(
                entity, donors, entities, model, horizon, run, int(section['finetune_epochs']))
            predictions, record = augmented.predictions, augmented.provenance
        actual = _actual_columns(entity, cut, horizon)
        frame = forecast_frame(
            predictions, donor_count=len(donors), augmented=int(bool(record['augmented'])))
        for column, values in actual.items():
            frame[column] = values
        _write_csv(frame, directory / f'{key}.csv')
        provenance.append(record)
        summary.append(dict(
            fips=str(key),
            lag=entity.tags.get('lag', ''),
            donors=len(donors),
            err_plain=moving_average_error(plain[:, 0], actual['actual_infections'], window),
            err_augmented=moving_average_error(predictions[:, 0], actual['actual_infections'], window)))
    _write_csv(pd.DataFrame(summary), context.out_dir / 'forecast_summary.csv')
    _write_json(provenance, context.out_dir / 'forecast_provenance.json')


@stage(Stage.Report)
def report_stage(context: RunContext) -> None:
    emit_report(context.out_dir, svg=bool(context.config['report']['svg']))


def _versions() -> Dict[str, str]:
    try:
        from importlib.metadata import version, PackageNotFoundError
        try:
            package = version('ldtforecast')
        except PackageNotFoundError:
            package = 'unknown'
    except ImportError:
        package = 'unknown'
    return dict(
        ldtforecast=package,
        python=platform.python_version(),
        numpy=np.__version__,
        pandas=pd.__version__,
        scipy=scipy.__version__)


def run_pipeline(config: RunConfig) -> RunReport:
    """Run the enabled stages in order, writing a manifest of what was done"""
    config.validate()
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    context = RunContext(config, out_dir)
    manifest = dict(
        seed=config.seed,
        stages=config.enabled_stages(),
        versions=_versions(),
        config=config.to_dict(),
        timings=dict())

    for key in config.enabled_stages():
        current = Stage.from_key(key)
        logger.info(f'Stage {key}: {current.description}')
        started = time.perf_counter()
        try:
            stages[current](context)
        except Exception as e:
            error = StageError(current, e)
            _write_json(dict(
                stage=key,
                error=type(e).__name__,
                message=str(e),
                exit_code=error.exit_code), out_dir / 'error.json')
            manifest.update(inputs=context.inputs, stage_seeds=context.seeds, failed=key)
            _write_json(manifest, out_dir / 'manifest.json')
            logger.error(str(error))
            raise error from e
        manifest['timings'][key] = round(time.perf_counter() - started, 3)

    manifest.update(
        inputs=context.inputs,
        stage_seeds=context.seeds,
        models=sorted(str(key) for key in context.models))
    _write_json(manifest, out_dir / 'manifest.json')
    return RunReport(manifest, context)
