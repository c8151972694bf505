#!/usr/bin/env python3

"""Locate files shipped inside the package, also from a frozen bundle"""

from pathlib import Path
import json
import sys

_PACKAGE = 'itaxotools.ldtforecast'


def _resource_root() -> Path:
    if hasattr(sys, '_MEIPASS'):
        return Path(sys._MEIPASS).joinpath(*_PACKAGE.split('.')) / 'resources'
    try:
        from importlib.resources import files
        return Path(str(files(_PACKAGE))) / 'resources'
    except (ModuleNotFoundError, ImportError):
        return Path(__file__).resolve().parent.parent / 'resources'


def get_resource(name: str) -> Path:
    return _resource_root() / name


def load_json_resource(name: str) -> dict:
    with get_resource(name).open(encoding='utf-8') as file:
        return json.load(file)
