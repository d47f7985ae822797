from __future__ import annotations

import numpy as np
import pytest

from cgzsl import nn
from cgzsl.data import synth_dataset


def numeric_grad(f, param: nn.Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f()`` with respect to ``param``."""
    grad = np.zeros_like(param.value)
    flat = param.value.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = float(f().value)
        flat[i] = old - h
        down = float(f().value)
        flat[i] = old
        out[i] = (up - down) / (2 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> float:
    """Elementwise relative error; components below ``floor`` are compared on an absolute scale.

    Central differences at step 1e-5 carry roughly 1e-11 of rounding noise, so
    the relative error of a near-zero component is meaningless without a floor.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def gradient_error(f, params) -> float:
    """Worst relative error of backward() against central differences over ``params``."""
    nn.zero_grad(params)
    analytic = [g.copy() for g in nn.backward(f(), params)]
    nn.zero_grad(params)
    return max(max_rel_error(a, numeric_grad(f, p)) for a, p in zip(analytic, params))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    return synth_dataset(12, 16, 8, 24, 0.1, 3)
