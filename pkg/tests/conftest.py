import numpy as np
import pytest

from metakg import meta
from metakg.episodes import DistributionConfig, RngStream, make_task_distribution


@pytest.fixture(scope="session")
def small_dist():
    cfg = DistributionConfig(
        setting="adaptation",
        n_datasets=2,
        n_domains=1,
        n_modes=2,
        classes_per_dataset=20,
        input_dim=8,
    )
    return make_task_distribution(cfg, RngStream(123, 0))


@pytest.fixture
def tiny_cfg():
    """Small-but-complete training config used across module tests."""
    return meta.TrainConfig(
        n_way=3,
        k_shot=2,
        q_per_class=4,
        kg_dim=8,
        kg_nodes=2,
        embed_hidden=(10,),
        task_hidden=(10,),
        inner_steps=1,
        meta_batch=2,
        iterations=3,
        seed=7,
        use_jit=False,
    )


def rel_err(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / denom


def finite_difference_grad(f, x, h=1e-5):
    """Central finite differences of scalar f over flat vector x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g
