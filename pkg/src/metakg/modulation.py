"""Task-specific modulation of the shared initialization and inner-loop adaptation."""

from __future__ import annotations

import jax
import jax.numpy as jnp

from . import nets


def init_modulation(task_sizes, d: int, rng) -> list[dict]:
    """One gate head per task-network layer; W: (d, width), b: (width,)."""
    import numpy as np

    g = rng.generator()
    params = []
    for width in task_sizes[1:]:
        bound = 1.0 / np.sqrt(d)
        params.append(
            {
                "W": jnp.asarray(g.uniform(-bound, bound, (d, width))),
                "b": jnp.zeros(width),
            }
        )
    return params


def modulation_gates(z, mod_params):
    """Per-layer sigmoid gates in (0, 1), one entry per output unit."""
    gates = []
    for layer in mod_params:
        if z.shape[-1] != layer["W"].shape[0]:
            raise ValueError(
                f"task encoding dim {z.shape[-1]} does not match gate head "
                f"input dim {layer['W'].shape[0]}"
            )
        gates.append(jax.nn.sigmoid(z @ layer["W"] + layer["b"]))
    return gates


def modulate(task_layers, gates):
    """Scale each output unit's incoming weights and bias by its gate."""
    if len(gates) != len(task_layers):
        raise ValueError(f"{len(gates)} gate vectors for {len(task_layers)} layers")
    out = []
    for layer, gate in zip(task_layers, gates):
        if gate.shape[-1] != layer["W"].shape[0]:
            raise ValueError(
                f"gate length {gate.shape[-1]} does not match layer width {layer['W'].shape[0]}"
            )
        out.append({"W": layer["W"] * gate[:, None], "b": layer["b"] * gate})
    return out


def sgd_adapt(loss_fn, theta, lr: float, steps: int, first_order: bool = False):
    """`steps` plain gradient-descent updates, differentiable through every step.

    With first_order=True the per-step gradients are treated as constants,
    which leaves the adapted values unchanged but drops the second-order
    terms from any outer gradient.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    for _ in range(steps):
        grads = jax.grad(loss_fn)(theta)
        if first_order:
            grads = jax.lax.stop_gradient(grads)
        theta = jax.tree_util.tree_map(lambda p, g: p - lr * g, theta, grads)
    return theta


def inner_adapt(task_layers, support_x, support_y, inner_lr: float, steps: int,
                first_order: bool = False):
    """SGD on the support cross-entropy starting from the (modulated) init."""

    def loss_fn(layers):
        return nets.cross_entropy(nets.forward_task(layers, support_x), support_y)

    return sgd_adapt(loss_fn, task_layers, inner_lr, steps, first_order=first_order)
