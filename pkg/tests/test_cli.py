#!/usr/bin/env python3

from pathlib import Path
import json

import pytest
import pandas as pd

from itaxotools.ldtforecast import main
from itaxotools.ldtforecast.ldtforecast import build_parser

TEST_DATA_DIR = Path(__file__).parent / 'test_sources'

SMALL = {
    'synth': {'groups': 2, 'per_group': 3, 'days': 80},
    'train': {
        'window': 7, 'offsets': [1, 3], 'test_days': 20,
        'budget_epochs': 2, 'hidden_size': 4},
    'embed': {'pits': [20, 40]},
    'cluster': {'k': 2, 'restarts': 2},
    'stability': {'reference_pit': 40},
    'evaluate': {'horizons': 10},
    'forecast': {'pit': 40, 'horizon': 10, 'finetune_epochs': 1, 'min_extra_days': 5},
}


@pytest.fixture
def config_file(tmp_path) -> Path:
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(SMALL))
    return path


@pytest.fixture
def trained(tmp_path, config_file) -> Path:
    out = tmp_path / 'trained'
    assert main(['-q', 'synth', '--groups', '2', '--per-group', '3', '--days', '80', '--out', str(out)]) == 0
    assert main([
        '-q', 'train', '--config', str(config_file),
        '--entities', str(out / 'entities'), '--out', str(out)]) == 0
    return out


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_synth(tmp_path):
    out = tmp_path / 'synth'
    assert main(['synth', '--groups', '2', '--per-group', '2', '--seed', '3', '--out', str(out)]) == 0
    assert len(list((out / 'entities').glob('9*.json'))) == 4
    assert json.loads((out / 'manifest.json').read_text())['seed'] == 3


def test_ingest(tmp_path):
    out = tmp_path / 'ingest'
    code = main([
        'ingest', '--census', str(TEST_DATA_DIR / 'census.csv'),
        '--usda', str(TEST_DATA_DIR / 'usda.csv'),
        '--cases-dir', str(TEST_DATA_DIR / 'cases'),
        '--state-filter', '01', '--out', str(out)])
    assert code == 0
    assert sorted(path.stem for path in (out / 'entities').glob('0*.json')) == ['01001', '01003', '01005']


def test_stage_commands(tmp_path, config_file, trained):
    assert len(list((trained / 'models').glob('*.json'))) == 6

    embed_out = tmp_path / 'embedded'
    assert main([
        'embed', '--config', str(config_file), '--entities', str(trained / 'entities'),
        '--models', str(trained / 'models'), '--pits', '20,40', '--out', str(embed_out)]) == 0
    embeddings = embed_out / 'embeddings'
    assert (embeddings / 'pit40_last.json').exists()

    clusters_a = tmp_path / 'a.json'
    clusters_b = tmp_path / 'b.json'
    assert main([
        'cluster', '--embeddings', str(embeddings), '--method', 'kmedoids', '--k', '2',
        '--pit', '20', '--with-static', 'false', '--out', str(clusters_a)]) == 0
    assert main([
        'cluster', '--embeddings', str(embeddings), '--k', '2',
        '--pit', '40', '--out', str(clusters_b)]) == 0
    assert json.loads(clusters_a.read_text())['with_static'] is False

    stability = tmp_path / 'stability.json'
    assert main([
        'stability', '--clusters-a', str(clusters_a),
        '--clusters-b', str(clusters_b), '--out', str(stability)]) == 0
    assert 0 <= json.loads(stability.read_text())['accuracy'] <= 1

    curve = tmp_path / 'curve.csv'
    assert main([
        'evaluate', '--model', str(trained / 'models' / '90001.json'),
        '--entities', str(trained / 'entities'), '--entity', '90001',
        '--horizons', '10', '--out', str(curve)]) == 0
    assert len(pd.read_csv(curve)) == 10

    forecast = tmp_path / 'forecast.csv'
    assert main([
        'forecast', '--config', str(config_file), '--target', '90003',
        '--entities', str(trained / 'entities'), '--models', str(trained / 'models'),
        '--clusters', str(clusters_b), '--augment', '--horizon', '10',
        '--min-extra-days', '5', '--out', str(forecast)]) == 0
    frame = pd.read_csv(forecast)
    assert len(frame) == 10
    assert {'donor_count', 'augmented'} <= set(frame.columns)


def test_forecast_augment_needs_clusters(tmp_path, trained):
    code = main([
        'forecast', '--target', '90003', '--entities', str(trained / 'entities'),
        '--models', str(trained / 'models'), '--augment', '--out', str(tmp_path / 'f.csv')])
    assert code == 1


def test_run_and_report(tmp_path, config_file):
    out = tmp_path / 'run'
    assert main(['-q', 'run', '--config', str(config_file), '--out', str(out)]) == 0
    assert (out / 'report' / 'index.json').exists()
    again = tmp_path / 'again'
    assert main(['report', '--run', str(out), '--out', str(again), '--no-svg']) == 0
    assert not list(again.glob('*.svg'))


@pytest.mark.parametrize("argv, code", [
    (['run', '--set', 'train.bogus=1'], 1),
    (['run', '--set', 'stages.ingest=true'], 1),
    (['train', '--entities', 'no/such/dir', '--out', 'unused'], 1),
    (['stability', '--clusters-a', 'no/a.json', '--clusters-b', 'no/b.json', '--out', 'unused'], 2),
    (['evaluate', '--model', 'no/model.json', '--entities', '.', '--entity', '01001', '--out', 'x'], 2),
])
def test_exit_codes(argv, code):
    assert main(['-q'] + argv) == code


def test_training_failure_exit_code(tmp_path, config_file):
    code = main([
        '-q', 'run', '--config', str(config_file), '--out', str(tmp_path / 'nan'),
        '--set', 'stages.embed=false', '--set', 'train.learning_rate=NaN'])
    assert code == 3
    error = json.loads((tmp_path / 'nan' / 'error.json').read_text())
    assert error['stage'] == 'train'
