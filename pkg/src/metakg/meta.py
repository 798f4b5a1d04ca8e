"""Full training loop: batched meta-objective, outer Adam step, EMA update of
the knowledge graph, metrics logging and checkpointing.

Phase order within one iteration is fixed: sample batch -> meta-objective and
Adam update of all meta-learned blocks -> EMA refresh of the knowledge-graph
node features using the just-updated parameters.  The node features H never
receive gradients; they enter the objective behind a stop-gradient and the
optimizer state has no slot for them.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np

from . import encoding, graphs, modulation, nets
from .episodes import Episode, RngStream, TaskDistribution, sample_episode

# Disjoint stream_id namespaces so training, evaluation and analysis never
# consume each other's random streams.
TRAIN_STREAM = 1 << 40
EVAL_STREAM = 2 << 40
ANALYSIS_STREAM = 3 << 40
EDGE_RESAMPLE_STREAM = 4 << 40


class TrainingDiverged(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    n_way: int = 5
    k_shot: int = 1
    q_per_class: int = 15
    inner_lr: float = 0.05
    inner_steps: int = 5
    meta_batch: int = 4
    outer_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 1e4
    ckd_lambda: float = 0.05
    ema_alpha: float = 0.2
    gamma: float = 8.0
    kg_nodes: int = 4
    kg_dim: int = 32
    embed_hidden: tuple = (64, 64)
    task_hidden: tuple = (64, 64)
    iterations: int = 1000
    seed: int = 0
    use_kg: bool = True
    use_modulation: bool = True
    use_ckd: bool = True
    first_order: bool = False
    kg_at_test: bool = False
    rerandomize_kg_edges: bool = False
    use_jit: bool = True
    checkpoint_interval: int = 500
    workers: int = 1  # >1 currently runs sequentially; kept for config stability

    def validate(self) -> None:
        if self.ckd_lambda < 0:
            raise ConfigError("ckd_lambda must be >= 0")
        if not 0.0 <= self.ema_alpha <= 1.0:
            raise ConfigError("ema_alpha must lie in [0, 1]")
        if self.meta_batch < 1:
            raise ConfigError("meta_batch must be >= 1")
        if self.use_ckd and not self.use_kg:
            raise ConfigError("use_ckd requires use_kg (the positive pair needs z_hat)")
        if self.inner_steps < 0 or self.inner_lr <= 0:
            raise ConfigError("inner_steps must be >= 0 and inner_lr positive")


@dataclass
class LearnerState:
    params: dict  # meta-learned blocks: task, embed, mod, nmp_w, u_task, u_kg
    kg_h: jnp.ndarray  # (M, d); EMA-only, no optimizer slot
    opt_m: dict
    opt_v: dict
    opt_t: int
    iteration: int
    seed: int
    input_dim: int
    n_way: int


def init_learner(cfg: TrainConfig, input_dim: int) -> LearnerState:
    cfg.validate()
    d = cfg.kg_dim
    embed_sizes = [input_dim, *cfg.embed_hidden, d]
    task_sizes = [input_dim, *cfg.task_hidden, cfg.n_way]
    params = {
        "task": nets.init_mlp(task_sizes, RngStream(cfg.seed, 1)),
        "embed": nets.init_mlp(embed_sizes, RngStream(cfg.seed, 2)),
        "mod": modulation.init_modulation(task_sizes, d, RngStream(cfg.seed, 3)),
        "nmp_w": jnp.asarray(
            RngStream(cfg.seed, 4).generator().uniform(-1, 1, (d, d)) / np.sqrt(d)
        ),
        "u_task": jnp.asarray(0.01 * RngStream(cfg.seed, 5).generator().standard_normal(d)),
        "u_kg": jnp.asarray(0.01 * RngStream(cfg.seed, 6).generator().standard_normal(d)),
    }
    kg_h = jnp.asarray(
        RngStream(cfg.seed, 7).generator().standard_normal((cfg.kg_nodes, d)) / np.sqrt(d)
    )
    zeros = jax.tree_util.tree_map(jnp.zeros_like, params)
    return LearnerState(
        params=params,
        kg_h=kg_h,
        opt_m=zeros,
        opt_v=jax.tree_util.tree_map(jnp.zeros_like, params),
        opt_t=0,
        iteration=0,
        seed=cfg.seed,
        input_dim=input_dim,
        n_way=cfg.n_way,
    )


def stack_episodes(batch: list[Episode]) -> dict:
    return {
        "sx": jnp.asarray(np.stack([ep.support_x for ep in batch])),
        "sy": jnp.asarray(np.stack([ep.support_y for ep in batch])),
        "qx": jnp.asarray(np.stack([ep.query_x for ep in batch])),
        "qy": jnp.asarray(np.stack([ep.query_y for ep in batch])),
    }


def episode_task_encoding(params, sx, sy, n_way: int):
    protos = encoding.compute_prototypes(params["embed"], sx, sy, n_way)
    return encoding.task_encoding(protos), protos


def _episode_terms(params, kg_h, sx, sy, qx, qy, cfg: TrainConfig, stop_kg: bool):
    need_encoding = cfg.use_modulation or (cfg.use_kg and cfg.use_ckd and cfg.ckd_lambda > 0)
    z = protos = None
    if need_encoding:
        z, protos = episode_task_encoding(params, sx, sy, cfg.n_way)

    theta0 = params["task"]
    if cfg.use_modulation:
        gates = modulation.modulation_gates(z, params["mod"])
        theta0 = modulation.modulate(theta0, gates)
    theta_i = modulation.inner_adapt(
        theta0, sx, sy, cfg.inner_lr, cfg.inner_steps, first_order=cfg.first_order
    )
    qlogits = nets.forward_task(theta_i, qx)
    qloss = nets.cross_entropy(qlogits, qy)
    qacc = nets.accuracy(qlogits, qy)

    loss = qloss
    ckd = jnp.asarray(0.0)
    if cfg.use_kg and cfg.use_ckd and cfg.ckd_lambda > 0:
        pg = graphs.build_prototype_graph(protos, params["u_task"])
        kg = graphs.MetaKnowledgeGraph(kg_h, params["u_kg"])
        z_hat, _ = encoding.knowledge_enhanced_encoding(
            pg, kg, params["nmp_w"], cfg.gamma, stop_kg_grad=stop_kg
        )
        ckd = encoding.contrastive_loss(z, z_hat, protos)
        loss = loss + cfg.ckd_lambda * ckd
    return loss, qloss, qacc, ckd


def meta_objective(params, kg_h, batch: dict, cfg: TrainConfig, stop_kg: bool = True):
    """Batch-mean of per-episode query loss + lambda * distillation loss.

    Returns (scalar, diagnostics); diagnostics carry per-episode query
    loss/accuracy and distillation values.
    """
    n = batch["sx"].shape[0]
    losses, qlosses, qaccs, ckds = [], [], [], []
    for i in range(n):
        loss, qloss, qacc, ckd = _episode_terms(
            params, kg_h, batch["sx"][i], batch["sy"][i], batch["qx"][i], batch["qy"][i],
            cfg, stop_kg,
        )
        losses.append(loss)
        qlosses.append(qloss)
        qaccs.append(qacc)
        ckds.append(ckd)
    total = sum(losses) / n
    diag = {
        "query_loss": jnp.stack(qlosses),
        "query_acc": jnp.stack(qaccs),
        "ckd": jnp.stack(ckds),
    }
    return total, diag


def adam_update(params, grads, m, v, t, cfg: TrainConfig):
    """Textbook bias-corrected adaptive-moment step; returns (params', m', v', t')."""
    t = t + 1
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.outer_lr
    m = jax.tree_util.tree_map(lambda m_, g: b1 * m_ + (1 - b1) * g, m, grads)
    v = jax.tree_util.tree_map(lambda v_, g: b2 * v_ + (1 - b2) * g * g, v, grads)
    c1 = 1 - b1**t
    c2 = 1 - b2**t
    params = jax.tree_util.tree_map(
        lambda p, m_, v_: p - lr * (m_ / c1) / (jnp.sqrt(v_ / c2) + eps), params, m, v
    )
    return params, m, v, t


def clip_gradients(grads, max_norm: float):
    norm = jnp.sqrt(
        sum(jnp.sum(g * g) for g in jax.tree_util.tree_leaves(grads))
    )
    scale = jnp.where(norm > max_norm, max_norm / norm, 1.0)
    return jax.tree_util.tree_map(lambda g: g * scale, grads), norm


def meta_step(params, kg_h, opt_m, opt_v, opt_t, batch, cfg: TrainConfig):
    """One outer update of every meta-learned block; kg_h is read-only here."""
    (loss, diag), grads = jax.value_and_grad(meta_objective, has_aux=True)(
        params, kg_h, batch, cfg
    )
    grads, gnorm = clip_gradients(grads, cfg.grad_clip)
    params, opt_m, opt_v, opt_t = adam_update(params, grads, opt_m, opt_v, opt_t, cfg)
    diag = dict(diag)
    diag["loss"] = loss
    diag["grad_norm"] = gnorm
    return params, opt_m, opt_v, opt_t, diag


def kg_update(params, kg_h, batch: dict, cfg: TrainConfig):
    """EMA refresh of knowledge-node features from the batch's prototype graphs.

    Message passing runs with the prototype rows frozen (the opposite mask to
    the encoding pass); the per-episode knowledge rows are batch-averaged and
    blended in with coefficient ema_alpha.  Pure value computation; no
    gradients are recorded in this phase.
    """
    if batch["sx"].shape[0] == 0:
        return kg_h
    if cfg.ema_alpha == 0.0:
        return kg_h
    n_eps = batch["sx"].shape[0]
    m = kg_h.shape[0]
    acc = jnp.zeros_like(kg_h)
    for i in range(n_eps):
        protos = encoding.compute_prototypes(
            params["embed"], batch["sx"][i], batch["sy"][i], cfg.n_way
        )
        pg = graphs.build_prototype_graph(protos, params["u_task"])
        kg = graphs.MetaKnowledgeGraph(kg_h, params["u_kg"])
        sg = graphs.assemble_super_graph(pg, kg, cfg.gamma, stop_kg_grad=False)
        freeze = jnp.arange(sg.features.shape[0]) < sg.n_proto  # prototypes frozen
        updated = graphs.nmp(sg, params["nmp_w"], freeze)
        acc = acc + updated[sg.n_proto :]
    h_hat = acc / n_eps
    if cfg.ema_alpha == 1.0:
        return h_hat
    return cfg.ema_alpha * h_hat + (1.0 - cfg.ema_alpha) * kg_h


def make_train_step(cfg: TrainConfig):
    def step(params, kg_h, opt_m, opt_v, opt_t, batch):
        params, opt_m, opt_v, opt_t, diag = meta_step(
            params, kg_h, opt_m, opt_v, opt_t, batch, cfg
        )
        if cfg.use_kg:
            kg_h = kg_update(params, kg_h, batch, cfg)
        return params, kg_h, opt_m, opt_v, opt_t, diag

    if cfg.use_jit:
        return jax.jit(step, static_argnames=())
    return step


def sample_train_batch(dist: TaskDistribution, cfg: TrainConfig, iteration: int):
    eps = [
        sample_episode(
            dist,
            "train",
            cfg.n_way,
            cfg.k_shot,
            cfg.q_per_class,
            RngStream(cfg.seed, TRAIN_STREAM + iteration * cfg.meta_batch + b),
        )
        for b in range(cfg.meta_batch)
    ]
    return stack_episodes(eps)


def metrics_record(iteration: int, diag) -> dict:
    return {
        "iteration": iteration,
        "mean_query_acc": float(np.mean(np.asarray(diag["query_acc"]))),
        "mean_query_loss": float(np.mean(np.asarray(diag["query_loss"]))),
        "mean_ckd": float(np.mean(np.asarray(diag["ckd"]))),
    }


def train(
    cfg: TrainConfig,
    dist: TaskDistribution,
    state: LearnerState | None = None,
    out_dir=None,
    metrics_sink=None,
):
    """Run the training loop for cfg.iterations total iterations.

    Resumable: pass a checkpointed state and the loop continues from
    state.iteration with the identical episode stream.  Returns
    (final_state, metrics) where metrics is a list of per-iteration records.
    """
    cfg.validate()
    if state is None:
        state = init_learner(cfg, dist.config.input_dim)
    step = make_train_step(cfg)
    metrics: list[dict] = []

    metrics_fh = timing_fh = None
    if out_dir is not None:
        from pathlib import Path

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        mode = "a" if state.iteration > 0 else "w"
        metrics_fh = open(out_dir / "metrics.jsonl", mode)
        timing_fh = open(out_dir / "timing.jsonl", mode)

    params, kg_h = state.params, state.kg_h
    opt_m, opt_v, opt_t = state.opt_m, state.opt_v, state.opt_t
    try:
        for it in range(state.iteration, cfg.iterations):
            t0 = time.perf_counter()
            if cfg.rerandomize_kg_edges:
                g = RngStream(cfg.seed, EDGE_RESAMPLE_STREAM + it).generator()
                params = dict(params)
                params["u_kg"] = jnp.asarray(0.01 * g.standard_normal(cfg.kg_dim))
            batch = sample_train_batch(dist, cfg, it)
            params, kg_h, opt_m, opt_v, opt_t, diag = step(
                params, kg_h, opt_m, opt_v, opt_t, batch
            )
            rec = metrics_record(it, diag)
            if not np.isfinite(rec["mean_query_loss"]):
                raise TrainingDiverged(
                    f"non-finite objective at iteration {it}: {rec}"
                )
            metrics.append(rec)
            if metrics_sink is not None:
                metrics_sink(rec)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(rec, sort_keys=True) + "\n")
                timing_fh.write(
                    json.dumps({"iteration": it, "wallclock": time.perf_counter() - t0})
                    + "\n"
                )
            state = LearnerState(
                params, kg_h, opt_m, opt_v, opt_t, it + 1, cfg.seed,
                dist.config.input_dim, cfg.n_way,
            )
            if (
                out_dir is not None
                and cfg.checkpoint_interval > 0
                and (it + 1) % cfg.checkpoint_interval == 0
            ):
                from .checkpoint import save_state

                save_state(out_dir / f"ckpt_{it + 1:07d}.npz", state)
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
            timing_fh.close()

    state = LearnerState(
        params, kg_h, opt_m, opt_v, opt_t, max(state.iteration, cfg.iterations),
        cfg.seed, dist.config.input_dim, cfg.n_way,
    )
    if out_dir is not None:
        from .checkpoint import save_state

        save_state(out_dir / "ckpt_final.npz", state)
    return state, metrics
