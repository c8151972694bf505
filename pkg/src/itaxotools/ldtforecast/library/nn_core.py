#!/usr/bin/env python3

"""
Dense LSTM stack with a static seed projection, written directly
against numpy so that every gradient is explicit.

Gate rows of each layer weight are ordered input, forget, output,
candidate. A layer weight multiplies the concatenation [x_t, h_{t-1}].
Sequences are time-major: (T, D) for one sequence or (T, B, D) for a
batch; outputs keep the rank of the inputs.
"""

from __future__ import annotations
from typing import Callable, Dict, Iterator, List, NamedTuple, Optional, Tuple
from dataclasses import dataclass, field, replace
import logging

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, DataError, ShapeError, TrainingError, UsageError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    hidden_size: int
    num_layers: int = 1
    input_dim: int = 2
    output_dim: int = 2
    static_dim: int = 0
    rng_seed: int = 0
    forget_gate: bool = True

    def validate(self) -> ModelConfig:
        if int(self.hidden_size) < 1:
            raise ConfigurationError(
                f'hidden_size must be positive, got {self.hidden_size}')
        if self.num_layers not in (1, 2, 3):
            raise ConfigurationError(
                f'num_layers must be 1, 2 or 3, got {self.num_layers}')
        if int(self.input_dim) < 1:
            raise ConfigurationError(
                f'input_dim must be positive, got {self.input_dim}')
        if int(self.output_dim) < 1:
            raise ConfigurationError(
                f'output_dim must be positive, got {self.output_dim}')
        if int(self.static_dim) < 0:
            raise ConfigurationError(
                f'static_dim must not be negative, got {self.static_dim}')
        return self

    def layer_input_dim(self, layer: int) -> int:
        return self.input_dim if layer == 0 else self.hidden_size

    def to_dict(self) -> Dict:
        return dict(
            hidden_size=self.hidden_size,
            num_layers=self.num_layers,
            input_dim=self.input_dim,
            output_dim=self.output_dim,
            static_dim=self.static_dim,
            rng_seed=self.rng_seed,
            forget_gate=self.forget_gate)

    @classmethod
    def from_dict(cls, data: Dict) -> ModelConfig:
        return cls(**data).validate()


def parameter_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Names and shapes of all parameters, in canonical order"""
    H = config.hidden_size
    shapes = dict()
    for layer in range(config.num_layers):
        shapes[f'layer{layer}.weight'] = (4 * H, config.layer_input_dim(layer) + H)
        shapes[f'layer{layer}.bias'] = (4 * H,)
        if config.static_dim > 0:
            shapes[f'layer{layer}.seed_weight'] = (config.static_dim, H)
            shapes[f'layer{layer}.seed_bias'] = (H,)
    shapes['head.weight'] = (config.output_dim, H)
    shapes['head.bias'] = (config.output_dim,)
    return shapes


class LstmParams:
    """Named parameter arrays. Gradients use the same container."""

    def __init__(self, config: ModelConfig, arrays: Dict[str, np.ndarray]):
        expected = parameter_shapes(config)
        if list(arrays.keys()) != list(expected.keys()):
            raise ShapeError(
                f'Parameter names {list(arrays.keys())} do not match config')
        for name, shape in expected.items():
            if arrays[name].shape != shape:
                raise ShapeError(
                    f'{name}: expected shape {shape}, got {arrays[name].shape}')
        self.config = config
        self.arrays = arrays
        # Bumped by every in-place update, checked by backward()
        self.version = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if self.arrays[name].shape != np.shape(value):
            raise ShapeError(f'{name}: shape mismatch on assignment')
        self.arrays[name] = np.asarray(value, dtype=float)

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.arrays.items())

    def copy(self) -> LstmParams:
        return LstmParams(
            self.config, {name: array.copy() for name, array in self.items()})

    def zeros_like(self) -> LstmParams:
        return LstmParams(
            self.config, {name: np.zeros_like(array) for name, array in self.items()})

    def count(self) -> int:
        return sum(array.size for array in self.arrays.values())

    def is_finite(self) -> bool:
        return all(np.isfinite(array).all() for array in self.arrays.values())

    def global_norm(self) -> float:
        return float(np.sqrt(sum(
            float(np.sum(array * array)) for array in self.arrays.values())))

    def touch(self) -> None:
        self.version += 1


@dataclass
class LstmState:
    """Per-layer hidden outputs h and cell states s_c, each (B, H)"""

    h: List[np.ndarray]
    c: List[np.ndarray]
    # Static vectors the state was seeded from, (B, S), if any
    static: Optional[np.ndarray] = None

    @property
    def batch_size(self) -> int:
        return self.h[0].shape[0]

    def broadcast(self, batch: int) -> LstmState:
        if self.batch_size == batch:
            return self
        if self.batch_size != 1:
            raise ShapeError(
                f'Initial state batch {self.batch_size} does not match {batch}')
        static = None
        if self.static is not None:
            static = np.repeat(self.static, batch, axis=0)
        return LstmState(
            h=[np.repeat(h, batch, axis=0) for h in self.h],
            c=[np.repeat(c, batch, axis=0) for c in self.c],
            static=static)


@dataclass
class OptimizerState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: LstmParams, **kwargs) -> OptimizerState:
        return cls(
            m={name: np.zeros_like(array) for name, array in params.items()},
            v={name: np.zeros_like(array) for name, array in params.items()},
            **kwargs)

    def copy(self) -> OptimizerState:
        return replace(
            self,
            m={name: array.copy() for name, array in self.m.items()},
            v={name: array.copy() for name, array in self.v.items()})


@dataclass
class LayerCache:
    z: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tc: np.ndarray
    h: np.ndarray
    h0: np.ndarray
    c0: np.ndarray


@dataclass
class Trace:
    params_id: int
    params_version: int
    batched: bool
    inputs: np.ndarray
    layers: List[LayerCache]
    initial: LstmState


@dataclass
class LstmModel:
    """A parameterised network plus whatever was recorded while training it"""

    config: ModelConfig
    params: LstmParams
    metadata: Dict = field(default_factory=dict)

    def copy(self) -> LstmModel:
        return LstmModel(self.config, self.params.copy(), dict(self.metadata))


class NonFiniteGradient(TrainingError):
    def __init__(self, names: List[str]):
        self.names = names
        super().__init__(f'Non-finite gradient for: {", ".join(names)}')


def init_params(config: ModelConfig) -> LstmParams:
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    bound = 1.0 / np.sqrt(config.hidden_size)
    H = config.hidden_size
    arrays = dict()
    for name, shape in parameter_shapes(config).items():
        if name.endswith('weight'):
            arrays[name] = rng.uniform(-bound, bound, size=shape)
        else:
            arrays[name] = np.zeros(shape)
        if name.endswith('.bias') and name.startswith('layer'):
            arrays[name][H:2 * H] = 1.0
    return LstmParams(config, arrays)


def zero_state(config: ModelConfig, batch: int = 1) -> LstmState:
    H = config.hidden_size
    return LstmState(
        h=[np.zeros((batch, H)) for _ in range(config.num_layers)],
        c=[np.zeros((batch, H)) for _ in range(config.num_layers)])


def seed_hidden(params: LstmParams, static_vec: np.ndarray) -> LstmState:
    """Initial hidden outputs from the static features, cell state zero"""
    config = params.config
    if config.static_dim == 0:
        raise ShapeError('Model was built without a static seed projection')
    static = np.atleast_2d(np.asarray(static_vec, dtype=float))
    if static.ndim != 2 or static.shape[1] != config.static_dim:
        raise ShapeError(
            f'Static vector of dimension {static.shape[-1]} '
            f'for static_dim {config.static_dim}')
    if not np.isfinite(static).all():
        raise DataError('Static vector contains non-finite values')
    h = list()
    for layer in range(config.num_layers):
        weight = params[f'layer{layer}.seed_weight']
        bias = params[f'layer{layer}.seed_bias']
        h.append(np.tanh(static @ weight + bias))
    c = [np.zeros_like(x) for x in h]
    return LstmState(h=h, c=c, static=static)


def initial_state(params: LstmParams, static_vec: Optional[np.ndarray], batch: int = 1) -> LstmState:
    """Seeded when the model has a seed projection, zero otherwise"""
    if params.config.static_dim > 0:
        if static_vec is None:
            raise ShapeError(
                f'Model is seeded from {params.config.static_dim} static features, none given')
        return seed_hidden(params, static_vec).broadcast(batch)
    return zero_state(params.config, batch)


def lstm_forward(
    params: LstmParams,
    inputs: np.ndarray,
    initial: Optional[LstmState] = None,
) -> Tuple[np.ndarray, LstmState, Trace]:
    config = params.config
    inputs = np.asarray(inputs, dtype=float)
    batched = inputs.ndim == 3
    if inputs.ndim == 2:
        inputs = inputs[:, None, :]
    if inputs.ndim != 3 or inputs.shape[0] < 1:
        raise ShapeError(f'Expected a non-empty sequence, got shape {inputs.shape}')
    if inputs.shape[2] != config.input_dim:
        raise ShapeError(
            f'Input dimension {inputs.shape[2]} does not match {config.input_dim}')
    if not np.isfinite(inputs).all():
        raise DataError('Input sequence contains non-finite values')
    T, B, _ = inputs.shape
    if initial is None:
        initial = zero_state(config, B)
    initial = initial.broadcast(B)
    H = config.hidden_size

    layers = list()
    below = inputs
    final_h, final_c = list(), list()
    for layer in range(config.num_layers):
        weight = params[f'layer{layer}.weight']
        bias = params[f'layer{layer}.bias']
        n_in = below.shape[2]
        cache = LayerCache(
            z=np.empty((T, B, n_in + H)),
            i=np.empty((T, B, H)), f=np.empty((T, B, H)),
            o=np.empty((T, B, H)), g=np.empty((T, B, H)),
            c=np.empty((T, B, H)), tc=np.empty((T, B, H)),
            h=np.empty((T, B, H)),
            h0=initial.h[layer], c0=initial.c[layer])
        h_prev, c_prev = initial.h[layer], initial.c[layer]
        for t in range(T):
            z = np.concatenate([below[t], h_prev], axis=1)
            a = z @ weight.T + bias
            i = expit(a[:, :H])
            f = expit(a[:, H:2 * H]) if config.forget_gate else np.ones((B, H))
            o = expit(a[:, 2 * H:3 * H])
            g = np.tanh(a[:, 3 * H:])
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            cache.z[t], cache.i[t], cache.f[t], cache.o[t] = z, i, f, o
            cache.g[t], cache.c[t], cache.tc[t], cache.h[t] = g, c, tc, h
            h_prev, c_prev = h, c
        layers.append(cache)
        final_h.append(h_prev)
        final_c.append(c_prev)
        below = cache.h

    outputs = below @ params['head.weight'].T + params['head.bias']
    final = LstmState(h=final_h, c=final_c, static=initial.static)
    trace = Trace(
        params_id=id(params),
        params_version=params.version,
        batched=batched,
        inputs=inputs,
        layers=layers,
        initial=initial)
    if not batched:
        outputs = outputs[:, 0, :]
    return outputs, final, trace


def backward(params: LstmParams, trace: Trace, loss_gradient: np.ndarray) -> LstmParams:
    """Exact gradients of a scalar loss, given its gradient at the outputs"""
    if trace.params_id != id(params) or trace.params_version != params.version:
        raise UsageError('Trace was produced by different or since updated parameters')
    config = params.config
    dY = np.asarray(loss_gradient, dtype=float)
    if not trace.batched:
        dY = dY[:, None, :] if dY.ndim == 2 else dY
    T, B, _ = trace.inputs.shape
    if dY.shape != (T, B, config.output_dim):
        raise ShapeError(
            f'Loss gradient shape {dY.shape} does not match outputs '
            f'{(T, B, config.output_dim)}')
    H = config.hidden_size
    grads = params.zeros_like()

    top = trace.layers[-1].h
    grads['head.weight'] = np.einsum('tbo,tbh->oh', dY, top)
    grads['head.bias'] = dY.sum(axis=(0, 1))
    d_below = dY @ params['head.weight']

    for layer in reversed(range(config.num_layers)):
        cache = trace.layers[layer]
        weight = params[f'layer{layer}.weight']
        n_in = weight.shape[1] - H
        dW = np.zeros_like(weight)
        db = np.zeros(4 * H)
        dx = np.zeros((T, B, n_in))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            i, f, o, g = cache.i[t], cache.f[t], cache.o[t], cache.g[t]
            tc = cache.tc[t]
            c_prev = cache.c[t - 1] if t > 0 else cache.c0
            dh = d_below[t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            da = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                do * o * (1.0 - o),
                dg * (1.0 - g * g)], axis=1)
            dW += da.T @ cache.z[t]
            db += da.sum(axis=0)
            dz = da @ weight
            dx[t] = dz[:, :n_in]
            dh_next = dz[:, n_in:]
            dc_next = dc * f
        grads[f'layer{layer}.weight'] = dW
        grads[f'layer{layer}.bias'] = db
        if config.static_dim > 0 and trace.initial.static is not None:
            h0 = cache.h0
            d_pre = dh_next * (1.0 - h0 * h0)
            grads[f'layer{layer}.seed_weight'] = trace.initial.static.T @ d_pre
            grads[f'layer{layer}.seed_bias'] = d_pre.sum(axis=0)
        d_below = dx
    return grads


def clip_gradients(grads: LstmParams, max_norm: float = 5.0) -> float:
    """Scale gradients in place to a global norm of at most max_norm"""
    norm = grads.global_norm()
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for name, array in grads.items():
            grads[name] = array * scale
    return norm


def adam_step(
    params: LstmParams,
    grads: LstmParams,
    state: OptimizerState,
) -> Tuple[LstmParams, OptimizerState]:
    """Bias-corrected Adam update, applied in place"""
    bad = [name for name, array in grads.items() if not np.isfinite(array).all()]
    if bad:
        raise NonFiniteGradient(bad)
    for name, array in grads.items():
        if state.m[name].shape != array.shape:
            raise ShapeError(f'{name}: optimizer moments do not match gradient')
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        params.arrays[name] = params[name] - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    params.touch()
    if not params.is_finite():
        raise TrainingError('Parameters became non-finite after optimizer step')
    return params, state


def central_difference(
    objective: Callable[[LstmParams], float],
    params: LstmParams,
    name: str,
    index: Tuple[int, ...],
    step: float = 1e-5,
) -> float:
    """Numerical derivative of objective along one parameter coordinate"""
    array = params[name]
    original = array[index]
    array[index] = original + step
    plus = objective(params)
    array[index] = original - step
    minus = objective(params)
    array[index] = original
    return (plus - minus) / (2.0 * step)


def sample_coordinates(
    params: LstmParams,
    count: int,
    rng: np.random.Generator,
) -> List[Tuple[str, Tuple[int, ...]]]:
    """Random parameter coordinates, spread over all arrays by size"""
    names = list(params)
    sizes = np.array([params[name].size for name in names], dtype=float)
    picks = rng.choice(len(names), size=count, p=sizes / sizes.sum())
    coordinates = list()
    for pick in picks:
        name = names[pick]
        flat = int(rng.integers(params[name].size))
        coordinates.append((name, np.unravel_index(flat, params[name].shape)))
    return coordinates


class GradientMismatch(NamedTuple):
    name: str
    index: Tuple[int, ...]
    analytic: float
    numeric: float


def gradient_check(
    objective: Callable[[LstmParams], float],
    params: LstmParams,
    grads: LstmParams,
    count: int = 100,
    rng: Optional[np.random.Generator] = None,
    rtol: float = 1e-4,
    atol: float = 1e-7,
    step: float = 1e-5,
) -> List[GradientMismatch]:
    """Sampled coordinates where analytic and central difference gradients disagree"""
    rng = np.random.default_rng(0) if rng is None else rng
    mismatches = list()
    for name, index in sample_coordinates(params, count, rng):
        analytic = float(grads[name][index])
        numeric = central_difference(objective, params, name, index, step)
        if abs(analytic - numeric) > atol + rtol * max(abs(analytic), abs(numeric)):
            mismatches.append(GradientMismatch(name, index, analytic, numeric))
    return mismatches
