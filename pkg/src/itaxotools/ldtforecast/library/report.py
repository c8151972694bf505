#!/usr/bin/env python3

"""
Report tables gathered from a run directory, each chart with the CSV
it was drawn from. SVG output is kept free of dates and random ids so
reruns produce the same files.
"""

from __future__ import annotations
from typing import Dict, Iterable, List, Optional
from pathlib import Path
import json
import logging

import matplotlib
matplotlib.use('agg')
import matplotlib.pyplot as plt
import pandas as pd

from .errors import UsageError
from .metrics import moving_average, stability_error

logger = logging.getLogger(__name__)

CONCORDANCE_COLUMNS = ('method', 'pit', 'k', 'with_static', 'mode', 'acc', 'ari')
STABILITY_ERROR_COLUMNS = ('method', 'mode', 'with_static', 'pit', 'n_actual', 'n_embedding', 'error')

plt.rcParams['svg.hashsalt'] = 'ldtforecast'
plt.rcParams['svg.fonttype'] = 'none'
plt.rcParams['figure.figsize'] = (6.0, 3.5)


def concordance_table(rows: Iterable[Dict]) -> pd.DataFrame:
    """Template rows: method, point in time, k, statics, mode, Acc, ARI"""
    frame = pd.DataFrame(list(rows), columns=CONCORDANCE_COLUMNS)
    return frame.sort_values(['method', 'with_static', 'mode', 'pit'], kind='stable')


def stability_error_table(rows: Iterable[Dict]) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows), columns=STABILITY_ERROR_COLUMNS[:-1])
    frame['error'] = [
        stability_error(actual, embedding)
        for actual, embedding in zip(frame['n_actual'], frame['n_embedding'])]
    return frame


def percent(value: float) -> int:
    return int(round(100 * value))


def _save(figure, path: Path) -> Path:
    figure.tight_layout()
    figure.savefig(path, format='svg', metadata={'Date': None})
    plt.close(figure)
    return path


def plot_stability(frame: pd.DataFrame, path: Path) -> Path:
    figure, axes = plt.subplots()
    columns = [column for column in ('method', 'mode', 'with_static') if column in frame.columns]
    groups = frame.groupby(columns, sort=True) if columns else [(('stability',), frame)]
    for name, group in groups:
        name = name if isinstance(name, tuple) else (name,)
        label = ' '.join(str(part) for part in name)
        axes.plot(group['pit'], group['stability'], marker='o', label=label)
    axes.set_xlabel('Point in time (days)')
    axes.set_ylabel('Cluster stability')
    axes.set_ylim(0, 1.05)
    axes.legend()
    return _save(figure, path)


def plot_curves(frame: pd.DataFrame, path: Path) -> Path:
    figure, axes = plt.subplots()
    median = frame.groupby('horizon', as_index=False).median(numeric_only=True)
    axes.plot(median['horizon'], median['rel_err_infections'], label='infections')
    axes.plot(median['horizon'], median['rel_err_deaths'], label='deaths')
    axes.axhline(0.0, color='grey', linewidth=0.5)
    axes.set_xlabel('Days ahead')
    axes.set_ylabel('Median relative error')
    axes.legend()
    return _save(figure, path)


def plot_forecast(frame: pd.DataFrame, path: Path, window: int = 10) -> Path:
    figure, axes = plt.subplots()
    axes.plot(frame['date_offset'], frame['pred_infections'], label='forecast')
    axes.plot(
        frame['date_offset'], moving_average(frame['pred_infections'], window),
        linestyle='--', label=f'{window}-day moving average')
    if 'actual_infections' in frame.columns:
        axes.plot(frame['date_offset'], frame['actual_infections'], color='black', label='actual')
    axes.set_xlabel('Days past the train cut')
    axes.set_ylabel('Cumulative infections (fraction)')
    axes.legend()
    return _save(figure, path)


def _gather(directory: Path, pattern: str, column: str) -> Optional[pd.DataFrame]:
    frames = list()
    for path in sorted(directory.glob(pattern)):
        frame = pd.read_csv(path, dtype={'fips': str})
        if column not in frame.columns:
            frame.insert(0, column, path.stem)
        frames.append(frame)
    if not frames:
        return None
    return pd.concat(frames, ignore_index=True)


def emit_report(run_dir: Path, out_dir: Optional[Path] = None, svg: bool = True) -> List[Path]:
    """Collect stage outputs of a run into report tables and charts"""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir / 'report'
    sections = dict(
        concordance=run_dir / 'clusters' / 'concordance.csv',
        stability_over_time=run_dir / 'clusters' / 'stability_over_time.csv',
        stability_error=run_dir / 'clusters' / 'stability_error.csv',
    )
    found = {name: path for name, path in sections.items() if path.exists()}
    curves = _gather(run_dir / 'curves', '*.csv', 'fips')
    forecasts = _gather(run_dir / 'forecasts', '*.csv', 'fips')
    if not found and curves is None and forecasts is None:
        raise UsageError(f'No stage outputs to report in {str(run_dir)}')

    out_dir.mkdir(parents=True, exist_ok=True)
    written = list()
    for name, path in found.items():
        frame = pd.read_csv(path)
        target = out_dir / f'{name}.csv'
        frame.to_csv(target, index=False, float_format='%.10g')
        written.append(target)
        if svg and name == 'stability_over_time' and len(frame):
            written.append(plot_stability(frame, out_dir / f'{name}.svg'))

    if curves is not None:
        target = out_dir / 'curves.csv'
        curves.to_csv(target, index=False, float_format='%.10g')
        written.append(target)
        if svg:
            written.append(plot_curves(curves, out_dir / 'curves.svg'))

    if forecasts is not None:
        target = out_dir / 'forecasts.csv'
        forecasts.to_csv(target, index=False, float_format='%.10g')
        written.append(target)
        if svg:
            for fips, frame in forecasts.groupby('fips', sort=True):
                written.append(plot_forecast(frame, out_dir / f'forecast_{fips}.svg'))

    index = dict(
        sections=sorted(found) + (['curves'] if curves is not None else [])
        + (['forecasts'] if forecasts is not None else []),
        files=[path.name for path in written],
        svg=svg)
    with (out_dir / 'index.json').open('w', encoding='utf-8') as file:
        json.dump(index, file, indent=1)
    logger.info(f'Report: {len(written)} files in {str(out_dir)}')
    return written
