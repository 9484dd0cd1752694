"""Shared fixtures and independent oracle helpers."""

import numpy as np
import pytest

from fedunlearn import (Dataset, ModelSpec, generate_synthetic, init_params,
                        loss_and_gradient)


def finite_difference_gradient(model, data, h=1e-5):
    """Central-difference gradient of the batch loss, the reference the
    analytic backprop is checked against."""
    base = model.params.copy()
    grad = np.empty_like(base)
    for i in range(base.size):
        probe = base.copy()
        probe[i] = base[i] + h
        up, _ = loss_and_gradient(model.with_params(probe), data)
        probe[i] = base[i] - h
        down, _ = loss_and_gradient(model.with_params(probe), data)
        grad[i] = (up - down) / (2.0 * h)
    return grad


def random_dataset(rng, n, dim, num_classes):
    return Dataset(
        features=rng.uniform(0.0, 1.0, size=(n, dim)),
        labels=rng.integers(0, num_classes, size=n),
        num_classes=num_classes,
    )


@pytest.fixture(scope="session")
def small_synthetic():
    return generate_synthetic(3, 10, 200, seed=42)


@pytest.fixture()
def logistic_spec():
    return ModelSpec("logistic", input_dim=10, num_classes=3)


@pytest.fixture()
def mlp_spec():
    return ModelSpec("mlp", input_dim=10, num_classes=3, hidden_dims=(8,))


@pytest.fixture()
def logistic_model(logistic_spec):
    return init_params(logistic_spec, seed=7)
