#!/usr/bin/env python3

import pytest
import numpy as np

from itaxotools.ldtforecast.library.types import LossKind
from itaxotools.ldtforecast.library.errors import ConfigurationError, DataError, ShapeError
from itaxotools.ldtforecast.library.losses import LossSpec, compute_loss, mse_abs, rmse_rel


def test_mse_abs_value():
    result = mse_abs([1.0, 2.0, 4.0], [1.0, 1.0, 1.0])
    assert result.value == pytest.approx((0 + 1 + 9) / 3)
    assert np.allclose(result.gradient, [0, 2 / 3, 6 / 3])


def test_mse_abs_sums_leading_axes():
    pred = np.array([[1.0, 2.0], [0.0, 0.0]])
    target = np.zeros((2, 2))
    assert mse_abs(pred, target).value == pytest.approx((1 + 4) / 2)


def test_rmse_rel_zero_target_is_finite():
    spec = LossSpec(LossKind.RmseRel)
    result = rmse_rel([1e-3, 2e-3], [0.0, 0.0], spec)
    assert np.isfinite(result.value)
    assert np.all(np.isfinite(result.gradient))


def test_rmse_rel_epsilon():
    spec = LossSpec(LossKind.RmseRel, penalty_weight=0.0)
    result = rmse_rel([1e-8], [0.0], spec)
    # Denominator is target + 1e-8
    assert result.value == pytest.approx(1.0)


def test_rmse_rel_relative():
    spec = LossSpec(LossKind.RmseRel, penalty_weight=0.0)
    small = rmse_rel([1.1], [1.0], spec).value
    large = rmse_rel([110.0], [100.0], spec).value
    assert small == pytest.approx(large)
    assert small == pytest.approx(0.01)


def test_rmse_rel_monotone_penalty():
    spec = LossSpec(LossKind.RmseRel, penalty_weight=100.0)
    target = np.array([1.0, 1.0, 1.0])
    rising = rmse_rel([1.0, 1.0, 1.0], target, spec)
    falling = rmse_rel([1.0, 0.9, 1.0], target, spec)
    assert rising.value == pytest.approx(0.0)
    relative = 0.01 / 3
    penalty = 100.0 * 0.1 / 2
    assert falling.value == pytest.approx(relative + penalty)
    assert falling.gradient[0] > 0
    assert falling.gradient[1] < 0


def test_compute_loss_dispatch():
    pred, target = [2.0, 2.0], [1.0, 1.0]
    assert compute_loss(LossSpec(), pred, target).value == mse_abs(pred, target).value
    spec = LossSpec(LossKind.RmseRel)
    assert compute_loss(spec, pred, target).value == rmse_rel(pred, target, spec).value


def test_loss_errors():
    with pytest.raises(ShapeError):
        mse_abs([1.0, 2.0], [1.0])
    with pytest.raises(ShapeError):
        mse_abs(np.zeros((2, 0)), np.zeros((2, 0)))
    with pytest.raises(DataError):
        mse_abs([np.nan], [1.0])


@pytest.mark.parametrize("name, kind", [('mse_abs', LossKind.MseAbs), ('rmse_rel', LossKind.RmseRel)])
def test_spec_from_name(name, kind):
    spec = LossSpec.from_name(name)
    assert spec.kind is kind
    assert spec.name == name


def test_spec_invalid():
    with pytest.raises(ConfigurationError):
        LossSpec.from_name('mae')
    with pytest.raises(ConfigurationError):
        LossSpec.from_name('rmse_rel', penalty_weight=-1.0)
    with pytest.raises(ConfigurationError):
        LossSpec(epsilon=0.0).validate()
