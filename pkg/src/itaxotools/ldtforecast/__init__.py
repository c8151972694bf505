#!/usr/bin/env python3

# flake8: noqa: F401

from pathlib import Path
from typing import Optional

from .ldtforecast import main  # noqa

from .library.types import ClusterMethod, EmbedMode, EmbedSource, LossKind
from .library.errors import LdtError, ConfigurationError, DataError, TrainingError, UsageError
from .library.model import EntityKey, EntityRecord, CaseSeries, StaticFeatures
from .library.entities import read_store, write_store
from .library.nn_core import LstmModel, ModelConfig
from .library.checkpoint import load_model, save_model
from .library.losses import LossSpec
from .library.training import TrainRun, WindowSpec, train_model
from .library.tuning import grid_search
from .library.forecast import forecast_entity
from .library.embedding import Embedding, extract_embedding, actuals_embedding
from .library.clustering import ClusterModel, cluster_entities, get_clusterer
from .library.metrics import cluster_stability, adjusted_rand_index, horizon_errors
from .library.ldt import SyntheticScenario, generate_synthetic, trajectory_align, match_donors, forecast_augmented
from .library.config import RunConfig
from .library.operations import run_pipeline


def run(config: Optional[Path] = None, out_dir: Optional[Path] = None, **sections):
    """Run the enabled stages of a configuration, updating whole sections by keyword"""
    config = RunConfig.load(config, [sections] if sections else [])
    if out_dir is not None:
        config.data['paths']['out_dir'] = str(out_dir)
    report = run_pipeline(config)
    print(f'Output: {str(config.out_dir)}: {", ".join(report.manifest["stages"])}')
    return report
