"""Differentiable building blocks: embedding net, task network, losses.

Parameters are plain pytrees (lists of {"W", "b"} dicts), so jax can
differentiate through them to arbitrary order.  Weight layout is (out, in):
row i holds the incoming weights of output unit i, which is what the
per-unit modulation gates index into.
"""

from __future__ import annotations

import jax
import jax.numpy as jnp
from jax.flatten_util import ravel_pytree
import numpy as np

from .episodes import RngStream


def init_mlp(sizes, rng: RngStream) -> list[dict]:
    """Scaled uniform fan-in init, one {"W","b"} dict per layer."""
    g = rng.generator()
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        layers.append(
            {
                "W": jnp.asarray(g.uniform(-bound, bound, (fan_out, fan_in))),
                "b": jnp.asarray(g.uniform(-bound, bound, fan_out)),
            }
        )
    return layers


def mlp_forward(layers, x, activation=jnp.tanh):
    """Forward pass; activation between layers, linear output."""
    h = x
    for i, layer in enumerate(layers):
        h = h @ layer["W"].T + layer["b"]
        if i < len(layers) - 1:
            h = activation(h)
    return h


def embed(embed_layers, x):
    """Feature extractor: maps (..., p) inputs to (..., d) features."""
    return mlp_forward(embed_layers, x)


def forward_task(task_layers, x):
    """Task network: maps (..., p) inputs to (..., N) logits."""
    return mlp_forward(task_layers, x)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood with fused max-subtracted log-softmax."""
    shifted = logits - jax.lax.stop_gradient(logits.max(axis=-1, keepdims=True))
    log_probs = shifted - jnp.log(jnp.exp(shifted).sum(axis=-1, keepdims=True))
    picked = jnp.take_along_axis(log_probs, labels[..., None], axis=-1)[..., 0]
    return -picked.mean()


def accuracy(logits, labels):
    return (logits.argmax(axis=-1) == labels).mean()


def validate_labels(labels, n_way: int) -> None:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_way):
        raise ValueError(f"labels must lie in [0, {n_way}), got range "
                         f"[{labels.min()}, {labels.max()}]")


def flatten_params(params):
    """Round-trip-exact flatten; returns (vector, unflatten)."""
    flat, unravel = ravel_pytree(params)
    return flat, unravel


def n_params(params) -> int:
    return sum(int(np.prod(leaf.shape)) for leaf in jax.tree_util.tree_leaves(params))
