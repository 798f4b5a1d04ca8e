import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metakg.episodes import (
    DistributionConfig,
    EpisodeError,
    RngStream,
    make_task_distribution,
    sample_episode,
)


def test_split_arithmetic():
    cfg = DistributionConfig(n_datasets=2, classes_per_dataset=20, train_frac=0.7)
    dist = make_task_distribution(cfg, RngStream(0, 0))
    for ds in range(2):
        assert len(dist.train_classes[ds]) == 14
        assert len(dist.test_classes[ds]) == 6


def test_train_test_disjoint_and_generator_unshared(small_dist):
    for ds in small_dist.train_classes:
        train = set(small_dist.train_classes[ds])
        test = set(small_dist.test_classes[ds])
        assert not train & test
        # no generator object reachable from both splits
        train_gens = {id(small_dist.class_banks[ds][c]) for c in train}
        test_gens = {id(small_dist.class_banks[ds][c]) for c in test}
        assert not train_gens & test_gens


def test_holdout_dataset_contributes_no_training_classes():
    cfg = DistributionConfig(
        setting="dataset_generalization", n_datasets=6, holdout_dataset=5,
        classes_per_dataset=12,
    )
    dist = make_task_distribution(cfg, RngStream(1, 0))
    holdout = set(dist.class_banks[5])
    for _ in range(50):
        ep = sample_episode(dist, "train", 5, 1, 2, RngStream(1, 100 + _))
        assert ep.dataset_id in range(5)
    ep = sample_episode(dist, "test", 3, 1, 2, RngStream(1, 999))
    assert ep.dataset_id == 5


def test_single_mode_single_domain_degenerates():
    cfg = DistributionConfig(n_modes=1, n_domains=1, n_datasets=1, classes_per_dataset=10)
    dist = make_task_distribution(cfg, RngStream(2, 0))
    ep = sample_episode(dist, "train", 3, 1, 2, RngStream(2, 5))
    assert ep.mode_id == 0 and ep.domain_id == 0


def test_rejects_bad_configs():
    with pytest.raises(EpisodeError):
        make_task_distribution(DistributionConfig(train_frac=1.5), RngStream(0, 0))
    with pytest.raises(EpisodeError):
        make_task_distribution(
            DistributionConfig(setting="dataset_generalization"), RngStream(0, 0)
        )
    with pytest.raises(EpisodeError):
        make_task_distribution(DistributionConfig(classes_per_dataset=1), RngStream(0, 0))


def test_episode_shapes_and_label_ranges(small_dist):
    ep = sample_episode(small_dist, "train", 5, 1, 15, RngStream(123, 10))
    assert ep.support_x.shape == (5, 8)
    assert ep.query_x.shape == (75, 8)
    assert set(ep.support_y) == set(range(5))
    assert ep.query_y.min() == 0 and ep.query_y.max() == 4


@given(st.integers(0, 2**32), st.integers(2, 5), st.integers(1, 4))
@settings(max_examples=25, deadline=None)
def test_per_class_support_counts(seed, n_way, k_shot):
    cfg = DistributionConfig(n_datasets=1, classes_per_dataset=8, input_dim=4)
    dist = make_task_distribution(cfg, RngStream(0, 0))
    ep = sample_episode(dist, "train", n_way, k_shot, 2, RngStream(seed, 1))
    counts = np.bincount(ep.support_y, minlength=n_way)
    assert (counts == k_shot).all()


def test_two_class_split_forces_both_classes():
    cfg = DistributionConfig(n_datasets=1, classes_per_dataset=7, train_frac=0.72, input_dim=4)
    dist = make_task_distribution(cfg, RngStream(3, 0))
    assert len(dist.test_classes[0]) == 2
    for i in range(10):
        ep = sample_episode(dist, "test", 2, 5, 2, RngStream(3, i))
        assert set(ep.support_y) == {0, 1}


def test_insufficient_classes_raises(small_dist):
    with pytest.raises(EpisodeError):
        sample_episode(small_dist, "test", 50, 1, 2, RngStream(0, 0))


def test_determinism_bit_identical(small_dist):
    a = sample_episode(small_dist, "train", 5, 2, 6, RngStream(55, 77))
    b = sample_episode(small_dist, "train", 5, 2, 6, RngStream(55, 77))
    assert a.to_bytes() == b.to_bytes()
    c = sample_episode(small_dist, "train", 5, 2, 6, RngStream(55, 78))
    assert a.to_bytes() != c.to_bytes()


def test_multi_domain_draws_one_domain_per_episode():
    cfg = DistributionConfig(setting="multi_domain", n_domains=3, n_datasets=1,
                             classes_per_dataset=10, input_dim=4)
    dist = make_task_distribution(cfg, RngStream(9, 0))
    seen = {sample_episode(dist, "train", 3, 1, 2, RngStream(9, i)).domain_id
            for i in range(40)}
    assert seen == {0, 1, 2}
