"""Prototype graph, persistent knowledge graph, super-graph, message passing.

Edge weights within a graph are sigmoid(U . |a - b|) with one shared U per
graph.  Cross edges between the two graphs are a single global softmax over
all prototype/knowledge pairs of -||v - h||^2 / gamma, with no learnable
parameters.  Message passing is one graph-convolution layer with tanh over
the symmetrically normalized adjacency (self-loops added); a freeze mask
selects which side of the super-graph is allowed to change.
"""

from __future__ import annotations

from typing import NamedTuple

import jax
import jax.numpy as jnp


class PrototypeGraph(NamedTuple):
    nodes: jnp.ndarray  # (N, d)
    edge_param: jnp.ndarray  # (d,)
    adjacency: jnp.ndarray  # (N, N), zero diagonal


class MetaKnowledgeGraph(NamedTuple):
    node_features: jnp.ndarray  # (M, d); EMA-updated, never meta-gradient-updated
    edge_param: jnp.ndarray  # (d,)


class SuperGraph(NamedTuple):
    features: jnp.ndarray  # (N+M, d)
    adjacency: jnp.ndarray  # (N+M, N+M), zero diagonal
    n_proto: int
    cross: jnp.ndarray  # (N, M), sums to 1 over all entries


def edge_weight(a, b, u):
    """sigmoid(u . |a - b|); symmetric in (a, b), 0.5 when a == b."""
    a = jnp.asarray(a)
    b = jnp.asarray(b)
    u = jnp.asarray(u)
    if a.shape != b.shape or a.shape[-1] != u.shape[-1]:
        raise ValueError(f"dimension mismatch: a {a.shape}, b {b.shape}, u {u.shape}")
    return jax.nn.sigmoid(jnp.abs(a - b) @ u)


def _pairwise_adjacency(nodes, u):
    diff = jnp.abs(nodes[:, None, :] - nodes[None, :, :])
    adj = jax.nn.sigmoid(diff @ u)
    return adj * (1.0 - jnp.eye(nodes.shape[0]))


def build_prototype_graph(protos, u_task) -> PrototypeGraph:
    protos = jnp.asarray(protos)
    if protos.ndim != 2 or protos.shape[0] < 2:
        raise ValueError(f"need at least 2 prototypes of shape (N, d), got {protos.shape}")
    return PrototypeGraph(protos, u_task, _pairwise_adjacency(protos, u_task))


def cross_edges(protos, kg_nodes, gamma: float, stop_kg_grad: bool = True):
    """Global softmax of -squared-distance/gamma over all (proto, kg) pairs."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    protos = jnp.asarray(protos)
    kg_nodes = jnp.asarray(kg_nodes)
    if stop_kg_grad:
        kg_nodes = jax.lax.stop_gradient(kg_nodes)
    d2 = ((protos[:, None, :] - kg_nodes[None, :, :]) ** 2).sum(-1)
    logits = -d2 / gamma
    logits = logits - jax.lax.stop_gradient(logits.max())
    e = jnp.exp(logits)
    return e / e.sum()


def assemble_super_graph(
    pg: PrototypeGraph,
    kg: MetaKnowledgeGraph,
    gamma: float,
    stop_kg_grad: bool = True,
) -> SuperGraph:
    if pg.nodes.shape[1] != kg.node_features.shape[1]:
        raise ValueError(
            f"feature dims differ: prototypes d={pg.nodes.shape[1]}, "
            f"knowledge graph d={kg.node_features.shape[1]}"
        )
    kg_nodes = kg.node_features
    if stop_kg_grad:
        kg_nodes = jax.lax.stop_gradient(kg_nodes)
    n = pg.nodes.shape[0]
    cross = cross_edges(pg.nodes, kg_nodes, gamma, stop_kg_grad=False)
    kg_adj = _pairwise_adjacency(kg_nodes, kg.edge_param)
    adjacency = jnp.block([[pg.adjacency, cross], [cross.T, kg_adj]])
    features = jnp.concatenate([pg.nodes, kg_nodes], axis=0)
    return SuperGraph(features, adjacency, n, cross)


def nmp(sg: SuperGraph, w: jnp.ndarray, freeze_mask) -> jnp.ndarray:
    """One tanh graph-convolution step over the super-graph.

    freeze_mask: boolean (N+M,), True = node keeps its input features exactly
    (it still acts as a message source for free nodes).
    """
    freeze_mask = jnp.asarray(freeze_mask, dtype=bool)
    h = sg.features
    a = sg.adjacency + jnp.eye(h.shape[0])
    deg = a.sum(axis=1)
    inv_sqrt = 1.0 / jnp.sqrt(deg)
    a_hat = a * inv_sqrt[:, None] * inv_sqrt[None, :]
    updated = jnp.tanh(a_hat @ h @ w)
    return jnp.where(freeze_mask[:, None], h, updated)
