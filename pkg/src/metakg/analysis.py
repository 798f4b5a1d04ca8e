"""Graph-signal diagnostics of task encodings.

Builds a k-nearest-neighbor graph over task encodings, projects the
per-episode accuracy signal onto the Laplacian eigenbasis, and measures how
much of the signal energy lives at low graph frequencies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import evaluation, meta
from .episodes import RngStream, TaskDistribution, sample_episode
from .meta import ANALYSIS_STREAM, LearnerState, TrainConfig


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray  # ascending
    coefficients: np.ndarray  # GFT of the signal
    cumulative_energy: np.ndarray  # normalized cumsum of squared coefficients

    def concentration(self, q: float) -> float:
        """Energy fraction in the lowest ceil(q*n) frequencies; c(1) == 1."""
        if not 0.0 < q <= 1.0:
            raise ValueError("q must lie in (0, 1]")
        n = self.eigenvalues.size
        idx = int(np.ceil(q * n)) - 1
        return float(self.cumulative_energy[idx])

    def to_csv(self) -> str:
        lines = ["frequency,energy"]
        for lam, c in zip(self.eigenvalues, self.coefficients):
            lines.append(f"{lam},{c * c}")
        return "\n".join(lines) + "\n"


def knn_graph(points: np.ndarray, k: int) -> np.ndarray:
    """Symmetric 0/1 adjacency: edge iff either endpoint is among the other's
    k Euclidean nearest neighbors.  Ties break toward the lower index."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"need n > k >= 1, got n={n}, k={k}")
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    adj = np.zeros((n, n), dtype=int)
    for i in range(n):
        nearest = np.argsort(d2[i], kind="stable")[:k]
        adj[i, nearest] = 1
    adj = np.maximum(adj, adj.T)
    np.fill_diagonal(adj, 0)
    return adj


def graph_fourier_basis(adjacency: np.ndarray, normalized: bool = False):
    """Eigendecomposition of the graph Laplacian; eigenvalues ascending,
    eigenvectors orthonormal columns."""
    a = np.asarray(adjacency, dtype=float)
    deg = a.sum(axis=1)
    if normalized:
        inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
        lap = np.eye(a.shape[0]) - a * inv_sqrt[:, None] * inv_sqrt[None, :]
        lap[deg == 0, :] = 0.0
        lap[:, deg == 0] = 0.0
    else:
        lap = np.diag(deg) - a
    eigenvalues, eigenvectors = np.linalg.eigh(lap)
    return eigenvalues, eigenvectors


def gft_and_concentration(signal: np.ndarray, basis) -> SpectralReport:
    eigenvalues, eigenvectors = basis
    signal = np.asarray(signal, dtype=float)
    if signal.shape[0] != eigenvectors.shape[0]:
        raise ValueError("signal length does not match basis size")
    coeff = eigenvectors.T @ signal
    energy = coeff**2
    total = energy.sum()
    cum = np.cumsum(energy) / (total if total > 0 else 1.0)
    return SpectralReport(eigenvalues, coeff, cum)


def encoding_quality_study(
    state: LearnerState,
    dist: TaskDistribution,
    n_tasks: int,
    cfg: TrainConfig,
    k: int = 5,
    out_path=None,
    seed: int | None = None,
    normalized_laplacian: bool = False,
):
    """Collect (z, accuracy) over test episodes and spectrally analyze the
    accuracy signal on the k-NN graph of the encodings."""
    if n_tasks <= k:
        raise ValueError(f"n_tasks must exceed k (got n_tasks={n_tasks}, k={k})")
    if seed is None:
        seed = cfg.seed
    import jax.numpy as jnp

    eval_fn = evaluation.make_eval_fn(cfg)
    zs, accs = [], []
    for i in range(n_tasks):
        ep = sample_episode(
            dist, "test", cfg.n_way, cfg.k_shot, cfg.q_per_class,
            RngStream(seed, ANALYSIS_STREAM + i),
        )
        z, _ = meta.episode_task_encoding(
            state.params, jnp.asarray(ep.support_x), jnp.asarray(ep.support_y), cfg.n_way
        )
        acc = eval_fn(
            state.params, state.kg_h,
            jnp.asarray(ep.support_x), jnp.asarray(ep.support_y),
            jnp.asarray(ep.query_x), jnp.asarray(ep.query_y),
        )
        zs.append(np.asarray(z))
        accs.append(float(acc))
    zs = np.stack(zs)
    accs = np.asarray(accs)

    if out_path is not None:
        with open(out_path, "w") as fh:
            for i, (z, acc) in enumerate(zip(zs, accs)):
                fh.write(json.dumps({"episode_id": i, "z": z.tolist(), "accuracy": acc}) + "\n")

    adj = knn_graph(zs, k)
    basis = graph_fourier_basis(adj, normalized=normalized_laplacian)
    report = gft_and_concentration(accs, basis)
    return report, zs, accs
