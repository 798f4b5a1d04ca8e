"""Synthetic heterogeneous few-shot episode generation.

A task distribution is a bank of class-conditional Gaussian generators laid
out per (dataset, domain), warped per mode.  Every class lives in exactly one
dataset and exactly one split (train or test), so episodes sampled from
different splits can never share class generators.  Modes are drawn per
episode and apply a fixed orthogonal rotation plus a mode-specific pointwise
nonlinearity to every sample; domains control the additive noise style.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

SETTINGS = ("adaptation", "multi_domain", "dataset_generalization")


class EpisodeError(ValueError):
    """Raised for invalid distribution configs or unsatisfiable episode requests."""


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    Same (seed, stream_id) gives the same Philox counter stream on every
    platform, independent of how many other streams were consumed.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed % (1 << 64), self.stream_id % (1 << 64)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, offset: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + offset)


@dataclass
class DistributionConfig:
    setting: str = "adaptation"
    n_datasets: int = 2
    n_domains: int = 1
    n_modes: int = 2
    classes_per_dataset: int = 20
    train_frac: float = 0.7
    input_dim: int = 16
    cluster_spread: float = 0.35
    mean_scale: float = 2.0
    noise_scale: float = 0.1
    use_mode_warps: bool = True  # per-mode pointwise nonlinearity on top of the rotation
    informative_frac: float = 0.5  # fraction of coordinates carrying class signal per mode
    holdout_dataset: int | None = None  # dataset_generalization only

    def validate(self) -> None:
        if self.setting not in SETTINGS:
            raise EpisodeError(f"unknown setting {self.setting!r}, expected one of {SETTINGS}")
        if self.n_datasets < 1 or self.n_domains < 1 or self.n_modes < 1:
            raise EpisodeError("n_datasets, n_domains and n_modes must be >= 1")
        if not 0.0 < self.train_frac < 1.0:
            raise EpisodeError("train_frac must lie in (0, 1)")
        if not 0.0 < self.informative_frac <= 1.0:
            raise EpisodeError("informative_frac must lie in (0, 1]")
        if self.setting == "dataset_generalization":
            if self.holdout_dataset is None:
                raise EpisodeError("dataset_generalization requires holdout_dataset")
            if not 0 <= self.holdout_dataset < self.n_datasets:
                raise EpisodeError("holdout_dataset out of range")


@dataclass(frozen=True)
class ClassGenerator:
    """One class: a Gaussian blob around a fixed mean."""

    dataset_id: int
    class_id: int
    mean: np.ndarray
    spread: float

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.spread * rng.standard_normal((n, self.mean.shape[0]))


# Pointwise nonlinearities cycled over modes; each keeps class structure
# recoverable but shifts where in input space the boundaries live.
def _warp_identity(x):
    return x


def _warp_tanh(x):
    return np.tanh(1.5 * x)


def _warp_sine(x):
    return x + 0.8 * np.sin(2.0 * x)


def _warp_sqrt(x):
    return np.sign(x) * np.sqrt(np.abs(x))

def _warp_cube(x):
    return 0.35 * x ** 3

_MODE_WARPS = (_warp_identity, _warp_tanh, _warp_sine, _warp_sqrt, _warp_cube)


@dataclass
class TaskDistribution:
    config: DistributionConfig
    class_banks: dict  # dataset_id -> {class_id: ClassGenerator}
    train_classes: dict  # dataset_id -> list of class ids
    test_classes: dict
    mode_rotations: np.ndarray  # (n_modes, p, p) orthogonal
    mode_masks: np.ndarray  # (n_modes, p) bool; True = informative coordinate
    domain_noise: list  # per-domain (kind, scale)

    @property
    def setting(self) -> str:
        return self.config.setting


@dataclass
class Episode:
    support_x: np.ndarray  # (k*N, p)
    support_y: np.ndarray  # (k*N,)
    query_x: np.ndarray  # (q*N, p)
    query_y: np.ndarray
    n_way: int
    k_shot: int
    mode_id: int = 0
    domain_id: int = 0
    dataset_id: int = 0

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        np.savez(
            buf,
            support_x=self.support_x,
            support_y=self.support_y,
            query_x=self.query_x,
            query_y=self.query_y,
            meta=np.array([self.n_way, self.k_shot, self.mode_id, self.domain_id, self.dataset_id]),
        )
        return buf.getvalue()

    def to_record(self, episode_id: int | None = None) -> str:
        """One-line JSON record for debug dumps."""
        rec = {
            "episode_id": episode_id,
            "n_way": self.n_way,
            "k_shot": self.k_shot,
            "mode_id": self.mode_id,
            "domain_id": self.domain_id,
            "dataset_id": self.dataset_id,
            "support_x": self.support_x.tolist(),
            "support_y": self.support_y.tolist(),
            "query_x": self.query_x.tolist(),
            "query_y": self.query_y.tolist(),
        }
        return json.dumps(rec)


def make_task_distribution(config: DistributionConfig, rng: RngStream) -> TaskDistribution:
    config.validate()
    g = rng.generator()
    p = config.input_dim

    n_train = int(round(config.train_frac * config.classes_per_dataset))
    n_test = config.classes_per_dataset - n_train
    if n_train < 1 or n_test < 1:
        raise EpisodeError(
            f"train_frac {config.train_frac} leaves an empty split for "
            f"{config.classes_per_dataset} classes per dataset"
        )

    class_banks: dict = {}
    train_classes: dict = {}
    test_classes: dict = {}
    next_class_id = 0
    for ds in range(config.n_datasets):
        bank = {}
        ids = []
        for _ in range(config.classes_per_dataset):
            mean = config.mean_scale * g.standard_normal(p)
            bank[next_class_id] = ClassGenerator(ds, next_class_id, mean, config.cluster_spread)
            ids.append(next_class_id)
            next_class_id += 1
        perm = g.permutation(len(ids))
        ids = [ids[i] for i in perm]
        class_banks[ds] = bank
        train_classes[ds] = sorted(ids[:n_train])
        test_classes[ds] = sorted(ids[n_train:])

    rotations = np.empty((config.n_modes, p, p))
    masks = np.zeros((config.n_modes, p), dtype=bool)
    n_active = max(2, int(round(config.informative_frac * p)))
    for m in range(config.n_modes):
        q, r = np.linalg.qr(g.standard_normal((p, p)))
        rotations[m] = q * np.sign(np.diag(r))
        if n_active >= p:
            masks[m] = True
        else:
            masks[m, g.choice(p, size=n_active, replace=False)] = True

    noise_kinds = ("gaussian", "uniform", "laplace")
    domain_noise = [
        (noise_kinds[dom % len(noise_kinds)], config.noise_scale * (1.0 + 0.5 * (dom % 2)))
        for dom in range(config.n_domains)
    ]

    return TaskDistribution(
        config, class_banks, train_classes, test_classes, rotations, masks, domain_noise
    )


def _episode_classes(dist: TaskDistribution, split: str, g: np.random.Generator) -> tuple[int, list]:
    cfg = dist.config
    table = dist.train_classes if split == "train" else dist.test_classes
    if cfg.setting == "dataset_generalization":
        if split == "train":
            candidates = [d for d in range(cfg.n_datasets) if d != cfg.holdout_dataset]
        else:
            candidates = [cfg.holdout_dataset]
    else:
        candidates = list(range(cfg.n_datasets))
    ds = int(g.choice(np.array(candidates)))
    return ds, table[ds]


def _domain_noise(kind: str, scale: float, shape, g: np.random.Generator) -> np.ndarray:
    if kind == "gaussian":
        return scale * g.standard_normal(shape)
    if kind == "uniform":
        return scale * g.uniform(-np.sqrt(3.0), np.sqrt(3.0), shape)
    return scale * g.laplace(0.0, 1.0 / np.sqrt(2.0), shape)


def sample_episode(
    dist: TaskDistribution,
    split: str,
    n_way: int,
    k_shot: int,
    q_per_class: int,
    rng: RngStream,
) -> Episode:
    if split not in ("train", "test"):
        raise EpisodeError(f"split must be 'train' or 'test', got {split!r}")
    cfg = dist.config
    g = rng.generator()

    dataset_id, classes = _episode_classes(dist, split, g)
    if len(classes) < n_way:
        raise EpisodeError(
            f"split {split!r} of dataset {dataset_id} has {len(classes)} classes, "
            f"cannot build a {n_way}-way episode"
        )

    chosen = g.choice(np.array(classes), size=n_way, replace=False)
    mode_id = int(g.integers(cfg.n_modes))
    if cfg.setting == "multi_domain":
        domain_id = int(g.integers(cfg.n_domains))
    else:
        domain_id = 0
    kind, scale = dist.domain_noise[domain_id]
    rot = dist.mode_rotations[mode_id]
    mask = dist.mode_masks[mode_id]
    warp = _MODE_WARPS[mode_id % len(_MODE_WARPS)] if cfg.use_mode_warps else _warp_identity

    sx, sy, qx, qy = [], [], [], []
    bank = dist.class_banks[dataset_id]
    for label, cid in enumerate(chosen):
        raw = bank[int(cid)].sample(k_shot + q_per_class, g)
        x = warp(raw @ rot.T)
        # coordinates outside the mode's informative subset carry pure
        # distractor noise at blob scale
        distract = cfg.mean_scale * g.standard_normal(x.shape)
        x = np.where(mask, x, distract)
        x = x + _domain_noise(kind, scale, x.shape, g)
        sx.append(x[:k_shot])
        qx.append(x[k_shot:])
        sy.append(np.full(k_shot, label, dtype=np.int64))
        qy.append(np.full(q_per_class, label, dtype=np.int64))

    support_x = np.concatenate(sx)
    support_y = np.concatenate(sy)
    query_x = np.concatenate(qx)
    query_y = np.concatenate(qy)

    # Shuffle support order so per-class structure is not positional.
    order = g.permutation(support_x.shape[0])
    return Episode(
        support_x=support_x[order],
        support_y=support_y[order],
        query_x=query_x,
        query_y=query_y,
        n_way=n_way,
        k_shot=k_shot,
        mode_id=mode_id,
        domain_id=domain_id,
        dataset_id=dataset_id,
    )


def dump_episodes(episodes, path) -> None:
    with open(path, "w") as fh:
        for i, ep in enumerate(episodes):
            fh.write(ep.to_record(i) + "\n")
