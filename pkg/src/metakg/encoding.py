"""Task encodings: prototypes, mean pooling, knowledge infusion, distillation loss."""

from __future__ import annotations

from typing import NamedTuple

import jax.numpy as jnp
from jax.scipy.special import logsumexp

from . import graphs, nets


class TaskEncoding(NamedTuple):
    z: jnp.ndarray  # (d,) mean of prototypes
    z_hat: jnp.ndarray | None  # (d,) mean of knowledge-infused prototypes
    protos: jnp.ndarray  # (N, d)
    protos_hat: jnp.ndarray | None  # (N, d)


def compute_prototypes(embed_layers, support_x, support_y, n_way: int):
    """Per-class mean of support embeddings; row n = prototype of class n.

    Relies on the episode invariant of exactly k support samples per class.
    """
    emb = nets.embed(embed_layers, support_x)  # (kN, d)
    onehot = jnp.asarray(support_y[:, None] == jnp.arange(n_way)[None, :], dtype=emb.dtype)
    counts = onehot.sum(axis=0)
    return (onehot.T @ emb) / counts[:, None]


def task_encoding(protos):
    return protos.mean(axis=0)


def knowledge_enhanced_encoding(
    pg: graphs.PrototypeGraph,
    kg: graphs.MetaKnowledgeGraph,
    nmp_w,
    gamma: float,
    stop_kg_grad: bool = True,
):
    """Run message passing with knowledge nodes frozen; return (z_hat, protos_hat)."""
    sg = graphs.assemble_super_graph(pg, kg, gamma, stop_kg_grad=stop_kg_grad)
    n = sg.n_proto
    freeze = jnp.arange(sg.features.shape[0]) >= n  # knowledge side frozen
    updated = graphs.nmp(sg, nmp_w, freeze)
    protos_hat = updated[:n]
    return protos_hat.mean(axis=0), protos_hat


def cosine(a, b, eps: float = 1e-12):
    return (a * b).sum(-1) / (
        jnp.maximum(jnp.linalg.norm(a, axis=-1), eps)
        * jnp.maximum(jnp.linalg.norm(b, axis=-1), eps)
    )


def contrastive_loss(z, z_hat, protos):
    """InfoNCE-style distillation: positive pair (z, z_hat), negatives are the
    cosine similarities of distinct prototype pairs within the episode."""
    n = protos.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs at least 2 prototypes for negatives")
    pos = cosine(z, z_hat)
    sims = cosine(protos[:, None, :], protos[None, :, :])
    iu, ju = jnp.triu_indices(n, k=1)
    negs = sims[iu, ju]
    return -(pos - logsumexp(jnp.concatenate([pos[None], negs])))
