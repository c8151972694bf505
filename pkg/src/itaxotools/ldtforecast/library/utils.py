#!/usr/bin/env python

from typing import Any, BinaryIO, Iterable, Union
from pathlib import Path
import hashlib

import numpy as np

from itaxotools.common.param.core import Field, Group

from .errors import ConfigurationError


class _ConfigurableCallable_meta(type):
    def __new__(cls, name, bases, classdict):
        new_params = {
            param: classdict[param] for param in classdict
            if isinstance(classdict[param], Field)}
        for param in new_params:
            classdict.pop(param)
        obj = super().__new__(cls, name, bases, classdict)
        inherited_params = dict()
        if hasattr(obj, '_class_params_'):
            inherited_params = obj._class_params_.copy()
        obj._class_params_ = dict(**inherited_params, **new_params)
        return obj


class ConfigurableCallable(metaclass=_ConfigurableCallable_meta):
    def __init__(self, *args, **kwargs):
        self.update(*args, **kwargs)

    def update(self, *args, **kwargs):
        self._params_ = {
            param: self._class_params_[param].copy()
            for param in self._class_params_}
        keys = list(self._params_.keys())
        for arg in args:
            if not keys:
                raise ConfigurationError(f'{type(self).__name__}: too many arguments')
            self._params_[keys.pop(0)].value = arg
        for kwarg in kwargs:
            if kwarg not in keys:
                raise ConfigurationError(f'{type(self).__name__}: unknown parameter {repr(kwarg)}')
            self._params_[kwarg].value = kwargs[kwarg]
        return self

    @property
    def params(self) -> Group:
        return Group(key='root', children=[
            param for param in self._params_.values()])

    def settings(self) -> dict:
        """Current parameter values, keyed by field key"""
        return {key: param.value for key, param in self._params_.items()}

    def __getattr__(self, attr):
        params = self.__dict__.get('_params_', {})
        if attr in params:
            return params[attr].value
        raise AttributeError(f'{type(self).__name__} has no parameter {repr(attr)}')

    def __call__(self, *args, **kwargs) -> Any:
        return self.call(*args, **kwargs)

    def call(self, *args, **kwargs) -> Any:
        raise NotImplementedError()


def derive_seed(master: int, *labels: Any) -> int:
    """Split a master seed into an independent, reproducible sub-seed"""
    digest = hashlib.sha256(str(int(master)).encode('utf-8'))
    for label in labels:
        digest.update(b'\x00')
        digest.update(str(label).encode('utf-8'))
    return int.from_bytes(digest.digest()[:8], 'big') >> 1


def make_rng(master: int, *labels: Any) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *labels))


def hash_file(path: Union[Path, str], chunk: int = 1 << 16) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as file:
        _hash_stream(file, digest, chunk)
    return digest.hexdigest()


def _hash_stream(file: BinaryIO, digest, chunk: int) -> None:
    while True:
        block = file.read(chunk)
        if not block:
            break
        digest.update(block)


def hash_arrays(arrays: Iterable[np.ndarray]) -> str:
    digest = hashlib.sha256()
    for array in arrays:
        array = np.ascontiguousarray(array, dtype=np.float64)
        digest.update(str(array.shape).encode('utf-8'))
        digest.update(array.tobytes())
    return digest.hexdigest()
