#!/usr/bin/env python

"""Command line entry point: one subcommand per stage, plus full runs"""

from typing import List, Optional
from dataclasses import replace
from pathlib import Path
import argparse
import json
import logging
import sys

import colorlog

from .library.types import ClusterMethod, EmbedMode
from .library.errors import LdtError, UsageError
from .library.config import RunConfig, parse_override
from .library.operations import build_train_run, run_pipeline
from .library.entities import read_store
from .library.checkpoint import load_model
from .library.embedding import read_embeddings
from .library.clustering import cluster_entities, read_clusters, write_clusters
from .library.metrics import cluster_stability, horizon_errors
from .library.forecast import forecast_entity, forecast_frame
from .library.ldt import forecast_augmented, match_donors
from .library.report import emit_report

logger = logging.getLogger('itaxotools.ldtforecast')


def setup_logging(verbosity: int) -> None:
    handler = colorlog.StreamHandler()
    handler.setFormatter(colorlog.ColoredFormatter(
        '%(log_color)s%(levelname)-8s%(reset)s %(message)s',
        log_colors={
            'DEBUG': 'cyan',
            'INFO': 'green',
            'WARNING': 'yellow',
            'ERROR': 'red',
            'CRITICAL': 'red,bg_white',
        }))
    root = logging.getLogger('itaxotools.ldtforecast')
    root.handlers[:] = [handler]
    root.setLevel({-1: logging.WARNING, 0: logging.INFO}.get(verbosity, logging.DEBUG))
    root.propagate = False


def _flag(text: str) -> bool:
    value = text.strip().lower()
    if value in ('true', 'yes', '1'):
        return True
    if value in ('false', 'no', '0'):
        return False
    raise argparse.ArgumentTypeError(f'Expected true or false, got {repr(text)}')


def _ints(text: str) -> List[int]:
    return [int(part) for part in text.split(',') if part.strip()]


def _stage_config(args, stage: str, **updates) -> RunConfig:
    overrides = [parse_override(item) for item in getattr(args, 'set', None) or []]
    config = RunConfig.load(getattr(args, 'config', None), overrides)
    for section, values in updates.items():
        for key, value in values.items():
            if value is not None:
                config.data[section][key] = value
    return config.only(stage)


def cmd_ingest(args) -> None:
    config = _stage_config(
        args, 'ingest',
        paths=dict(census=args.census, usda=args.usda, cases_dir=args.cases_dir, out_dir=args.out),
        ingest=dict(states=args.state_filter, year=args.year))
    run_pipeline(config)


def cmd_synth(args) -> None:
    config = _stage_config(
        args, 'synth',
        paths=dict(out_dir=args.out),
        synth=dict(groups=args.groups, per_group=args.per_group, days=args.days))
    if args.seed is not None:
        config.data['seed'] = args.seed
    run_pipeline(config)


def cmd_train(args) -> None:
    config = _stage_config(
        args, 'train',
        paths=dict(entities_dir=args.entities, out_dir=args.out),
        train=dict(
            fips=args.fips, loss=args.loss, window=args.window,
            budget_epochs=args.budget_epochs, hidden_size=args.hidden,
            num_layers=args.layers, grid=args.grid or None))
    run_pipeline(config)


def cmd_embed(args) -> None:
    config = _stage_config(
        args, 'embed',
        paths=dict(entities_dir=args.entities, models_dir=args.models, out_dir=args.out),
        embed=dict(pits=args.pits, modes=[args.mode] if args.mode else None))
    run_pipeline(config)


def cmd_cluster(args) -> None:
    source = Path(args.embeddings)
    if source.is_dir():
        source = source / f'pit{args.pit}_{args.mode}.json'
    embeddings = [
        embedding for embedding in read_embeddings(source)
        if embedding.pit_days == args.pit]
    if not embeddings:
        raise UsageError(f'No embeddings at PIT {args.pit} in {str(source)}')
    if not args.with_static:
        embeddings = [
            replace(embedding, static_part=None)
            for embedding in embeddings]
    model = cluster_entities(
        embeddings, ClusterMethod.from_key(args.method), args.k,
        restarts=args.restarts, seed=args.seed)
    write_clusters(args.out, model)


def cmd_stability(args) -> None:
    first = read_clusters(args.clusters_a)
    second = read_clusters(args.clusters_b)
    report = cluster_stability(first.labels_by_key(), second.labels_by_key(), max(first.k, second.k))
    with Path(args.out).open('w', encoding='utf-8') as file:
        json.dump(report.to_dict(), file, indent=1)
    logger.info(f'Stability {report.accuracy:.3f}, ARI {report.ari:.3f}')


def _entity(directory: str, fips: str):
    records = read_store(Path(directory), [fips])
    return records[0]


def cmd_evaluate(args) -> None:
    model = load_model(args.model)
    entity = _entity(args.entities, args.entity)
    curve = horizon_errors(model, entity, args.horizons)
    curve.to_csv(args.out, index=False, float_format='%.10g')


def cmd_forecast(args) -> None:
    entities = {entity.key: entity for entity in read_store(Path(args.entities))}
    target = _entity(args.entities, args.target)
    model = load_model(Path(args.models) / f'{target.key}.json')
    donors = list()
    provenance = dict(target=str(target.key), augmented=False)
    if args.augment:
        if not args.clusters:
            raise UsageError('--augment needs --clusters')
        clusters = read_clusters(args.clusters)
        config = _stage_config(args, 'forecast')
        run = build_train_run(config, model.config.static_dim, config.stage_seed('train'))
        run = run.fresh(config=model.config, test_days=int(model.metadata.get('test_days', run.test_days)))
        donors = match_donors(
            target.key, clusters, entities, args.min_extra_days, run.test_days)
        result = forecast_augmented(
            target, donors, entities, model, args.horizon, run,
            epochs=int(config['forecast']['finetune_epochs']))
        predictions, provenance = result.predictions, result.provenance
    else:
        predictions = forecast_entity(model, target, args.horizon)
    frame = forecast_frame(
        predictions, donor_count=len(donors), augmented=int(bool(provenance['augmented'])))
    frame.to_csv(args.out, index=False, float_format='%.10g')


def cmd_run(args) -> None:
    overrides = [parse_override(item) for item in args.set or []]
    config = RunConfig.load(args.config, overrides)
    if args.out:
        config.data['paths']['out_dir'] = args.out
    report = run_pipeline(config)
    logger.info(f'Run complete: {", ".join(report.manifest["stages"])}')


def cmd_report(args) -> None:
    emit_report(Path(args.run), Path(args.out) if args.out else None, svg=not args.no_svg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='ldtforecast',
        description='Seeded LSTM forecasting, hidden-state clustering and donor-augmented forecasts')
    parser.add_argument('-v', '--verbose', action='store_const', const=1, default=0, dest='verbosity')
    parser.add_argument('-q', '--quiet', action='store_const', const=-1, dest='verbosity')
    commands = parser.add_subparsers(dest='command', required=True)

    def command(name, func, help, config=True):
        sub = commands.add_parser(name, help=help)
        sub.set_defaults(func=func)
        if config:
            sub.add_argument('--config', type=Path, help='Run configuration JSON')
            sub.add_argument('--set', action='append', metavar='SECTION.KEY=VALUE')
        return sub

    sub = command('ingest', cmd_ingest, 'Build the entity store from CSV sources')
    sub.add_argument('--census', required=True)
    sub.add_argument('--usda')
    sub.add_argument('--cases-dir', required=True)
    sub.add_argument('--out', required=True)
    sub.add_argument('--state-filter', action='append', metavar='XX')
    sub.add_argument('--year', type=int)

    sub = command('synth', cmd_synth, 'Generate a synthetic entity store')
    sub.add_argument('--groups', type=int)
    sub.add_argument('--per-group', type=int)
    sub.add_argument('--days', type=int)
    sub.add_argument('--seed', type=int)
    sub.add_argument('--out', required=True)

    sub = command('train', cmd_train, 'Train per-entity models')
    sub.add_argument('--entities', required=True)
    sub.add_argument('--fips', default=None, help='Comma separated FIPS codes or ALL')
    sub.add_argument('--loss', choices=['mse_abs', 'rmse_rel'])
    sub.add_argument('--window', type=int)
    sub.add_argument('--budget-epochs', type=int)
    sub.add_argument('--hidden', type=int)
    sub.add_argument('--layers', type=int)
    sub.add_argument('--grid', action='store_true')
    sub.add_argument('--out', required=True)

    sub = command('embed', cmd_embed, 'Extract embeddings from trained models')
    sub.add_argument('--entities', required=True)
    sub.add_argument('--models', required=True)
    sub.add_argument('--pits', type=_ints)
    sub.add_argument('--mode', choices=[mode.key for mode in EmbedMode])
    sub.add_argument('--out', required=True)

    sub = command('cluster', cmd_cluster, 'Cluster embeddings', config=False)
    sub.add_argument('--embeddings', required=True)
    sub.add_argument('--method', choices=[method.key for method in ClusterMethod], default='kmeans')
    sub.add_argument('--k', type=int, default=3)
    sub.add_argument('--pit', type=int, default=60)
    sub.add_argument('--mode', default='last')
    sub.add_argument('--with-static', type=_flag, default=True)
    sub.add_argument('--restarts', type=int, default=10)
    sub.add_argument('--seed', type=int, default=0)
    sub.add_argument('--out', required=True)

    sub = command('stability', cmd_stability, 'Compare two clusterings', config=False)
    sub.add_argument('--clusters-a', required=True)
    sub.add_argument('--clusters-b', required=True)
    sub.add_argument('--out', required=True)

    sub = command('evaluate', cmd_evaluate, 'Horizon error curve of one model', config=False)
    sub.add_argument('--model', required=True)
    sub.add_argument('--entities', required=True)
    sub.add_argument('--entity', required=True)
    sub.add_argument('--horizons', type=int, default=30)
    sub.add_argument('--out', required=True)

    sub = command('forecast', cmd_forecast, 'Forecast one target')
    sub.add_argument('--target', required=True)
    sub.add_argument('--entities', required=True)
    sub.add_argument('--models', required=True)
    sub.add_argument('--clusters')
    sub.add_argument('--horizon', type=int, default=30)
    sub.add_argument('--augment', action='store_true')
    sub.add_argument('--min-extra-days', type=int, default=14)
    sub.add_argument('--out', required=True)

    sub = command('run', cmd_run, 'Run the configured pipeline')
    sub.add_argument('--out')

    sub = command('report', cmd_report, 'Gather report tables and charts', config=False)
    sub.add_argument('--run', required=True)
    sub.add_argument('--out')
    sub.add_argument('--no-svg', action='store_true')

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbosity)
    try:
        args.func(args)
    except LdtError as e:
        logger.error(str(e))
        return e.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
