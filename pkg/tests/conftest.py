from pathlib import Path

import numpy as np
import pytest

from risklq import SystemModel, validate
from risklq.cli import example_model


@pytest.fixture(scope="session")
def repo_root():
    return Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def example1():
    return example_model("example1")[0]


@pytest.fixture(scope="session")
def example2():
    return example_model("example2")[0]


def random_model(rng, n_max=3, p=None, zero_obs_noise=False):
    """A random validated instance with PD input weights and PSD covariances."""
    n = int(rng.integers(1, n_max + 1))
    m1 = int(rng.integers(1, 3))
    m2 = int(rng.integers(1, 3))
    q = int(rng.integers(1, 4))

    def psd(d, scale=1.0):
        L = rng.normal(size=(d, d))
        return scale * (L @ L.T) / d

    def pd(d, scale=1.0):
        return psd(d, scale) + 0.1 * np.eye(d)

    model = SystemModel(
        A=rng.normal(size=(n, n)) * rng.uniform(0.3, 1.2) / np.sqrt(n),
        B_local=rng.normal(size=(n, m1)),
        B_remote=rng.normal(size=(n, m2)),
        C=rng.normal(size=(q, n)),
        Q_w=psd(n, 0.5),
        Q_v=np.zeros((q, q)) if zero_obs_noise else pd(q, 0.5),
        Q=psd(n),
        Q_risk=psd(n) if rng.random() < 0.7 else None,
        R_local=pd(m1),
        R_remote=pd(m2),
        G=psd(n),
        p=float(rng.uniform()) if p is None else float(p),
        x0_mean=rng.normal(size=n),
        Sigma_init=psd(n, 0.8),
    )
    return validate(model)


@pytest.fixture
def make_random_model():
    return random_model
