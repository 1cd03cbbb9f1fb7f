"""Generative model: class sampling, per-block Hawkes processes, attachment."""

import numpy as np
import pytest
from scipy import stats

from blockhawkes.core import ClassAssignment, partition_by_blocks
from blockhawkes.generator import BlockHawkesModel, sample_classes, sample_network
from blockhawkes.hawkes import HawkesParams


def uniform_model(k=2, alpha=0.5, beta=1.0, lam=1.0, probs=None):
    params = [[HawkesParams(alpha, beta, lam) for _ in range(k)] for _ in range(k)]
    if probs is None:
        probs = np.full(k, 1.0 / k)
    return BlockHawkesModel(num_classes=k, class_probs=probs, params=params)


class TestModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            uniform_model(probs=np.array([0.7, 0.7]))
        with pytest.raises(ValueError):
            uniform_model(probs=np.array([-0.1, 1.1]))
        with pytest.raises(ValueError):
            BlockHawkesModel(2, np.array([0.5, 0.5]),
                             [[HawkesParams(1, 1, 1)]])

    def test_param_arrays(self):
        model = BlockHawkesModel(
            2,
            np.array([0.5, 0.5]),
            [
                [HawkesParams(1.0, 2.0, 3.0), HawkesParams(0.1, 0.2, 0.3)],
                [HawkesParams(4.0, 5.0, 6.0), HawkesParams(7.0, 8.0, 9.0)],
            ],
        )
        np.testing.assert_allclose(model.alphas(), [[1.0, 0.1], [4.0, 7.0]])
        np.testing.assert_allclose(model.betas(), [[2.0, 0.2], [5.0, 8.0]])
        np.testing.assert_allclose(model.lambdas(), [[3.0, 0.3], [6.0, 9.0]])

    def test_round_trip_dict(self):
        model = uniform_model(k=3, alpha=0.4)
        again = BlockHawkesModel.from_dict(model.to_dict())
        assert again.num_classes == 3
        np.testing.assert_allclose(again.class_probs, model.class_probs)
        assert again.params[1][2] == model.params[1][2]


class TestSampleClasses:
    def test_distribution(self):
        model = uniform_model(k=3, probs=np.array([0.2, 0.3, 0.5]))
        assignment = sample_classes(model, 6000, rng=0)
        counts = assignment.sizes()
        chi = stats.chisquare(counts, f_exp=6000 * model.class_probs)
        assert chi.pvalue > 0.001

    def test_deterministic(self):
        model = uniform_model(k=4)
        a = sample_classes(model, 50, rng=9)
        b = sample_classes(model, 50, rng=9)
        np.testing.assert_array_equal(a.labels, b.labels)


class TestSampleNetwork:
    def test_structure(self):
        model = uniform_model(k=2, alpha=0.3, beta=1.0, lam=0.8)
        stream, assignment = sample_network(model, num_nodes=12, horizon=30.0,
                                            rng=4)
        assert stream.num_nodes == 12
        assert np.all(np.diff(stream.times) >= 0)
        assert np.all(stream.senders != stream.receivers)
        assert stream.times.max() < 30.0
        # each event's class pair is consistent with the attachment rule
        blocks = partition_by_blocks(stream, assignment)
        total = sum(v.num_events for v in blocks.values())
        assert total == stream.num_events

    def test_deterministic_under_int_seed(self):
        model = uniform_model(k=2)
        s1, a1 = sample_network(model, 10, 20.0, rng=77)
        s2, a2 = sample_network(model, 10, 20.0, rng=77)
        np.testing.assert_array_equal(a1.labels, a2.labels)
        np.testing.assert_array_equal(s1.times, s2.times)
        np.testing.assert_array_equal(s1.senders, s2.senders)
        np.testing.assert_array_equal(s1.receivers, s2.receivers)

    def test_fixed_assignment_respected(self):
        model = uniform_model(k=2)
        labels = ClassAssignment(np.array([0] * 5 + [1] * 5), 2)
        stream, assignment = sample_network(model, 10, 10.0, rng=3,
                                            assignment=labels)
        np.testing.assert_array_equal(assignment.labels, labels.labels)
        blocks = partition_by_blocks(stream, assignment)
        for (q, l), view in blocks.items():
            idx = view.event_indices
            assert np.all(labels.labels[stream.senders[idx]] == q)
            assert np.all(labels.labels[stream.receivers[idx]] == l)

    def test_attachment_uniform_over_ordered_pairs(self):
        # single class of 4 nodes: 12 ordered pairs, uniform attachment
        model = uniform_model(k=1, alpha=0.0, beta=1.0, lam=40.0)
        stream, _ = sample_network(model, 4, horizon=100.0, rng=11)
        assert stream.num_events > 2000
        codes = stream.senders * 4 + stream.receivers
        observed = np.bincount(codes, minlength=16)
        diag = np.arange(4) * 4 + np.arange(4)
        assert observed[diag].sum() == 0
        chi = stats.chisquare(np.delete(observed, diag))
        assert chi.pvalue > 0.001

    def test_empty_block_events_discarded_with_warning(self):
        # all mass on class 0: pairs touching class 1 have no node pairs,
        # their processes still fire, and those events are dropped
        model = uniform_model(k=2, alpha=0.0, beta=1.0, lam=2.0,
                              probs=np.array([1.0, 0.0]))
        with pytest.warns(UserWarning, match="discard"):
            stream, assignment = sample_network(model, 6, horizon=5.0, rng=2)
        assert assignment.sizes()[1] == 0
        blocks = partition_by_blocks(stream, assignment)
        assert blocks[(0, 0)].num_events == stream.num_events

    def test_singleton_diagonal_discarded(self):
        model = uniform_model(k=1, alpha=0.0, beta=1.0, lam=1.0)
        with pytest.warns(UserWarning, match="discard"):
            stream, _ = sample_network(model, 1, horizon=10.0, rng=6)
        assert stream.num_events == 0

    def test_mean_total_count(self):
        # K=2 all-pairs (0.5, 1.0, 1.0): stationary rate 2 per unit per pair,
        # 4 pairs on [0, 25] -> 200 expected
        model = uniform_model(k=2, alpha=0.5, beta=1.0, lam=1.0)
        counts = [
            sample_network(model, 10, horizon=25.0, rng=seed)[0].num_events
            for seed in range(150)
        ]
        assert np.mean(counts) == pytest.approx(200.0, rel=0.06)
