"""Deviation experiment, adjusted Rand index, and prediction protocol.

Oracles: hand-evaluated contingency tables for ARI, closed-form subcritical
event counts for the deviation bound, adjacency-matrix cross-checks for the
entry indicators, and Monte Carlo / composition checks for the prediction
arms.
"""

import math

import numpy as np
import pytest

from blockhawkes.core import ClassAssignment, EventStream, aggregate
from blockhawkes.evaluation import (
    DeviationReport,
    PredictionProtocol,
    PredictionReport,
    _entry_occupied,
    _geometric_prediction,
    adjusted_rand_index,
    deviation_experiment,
    expected_event_count,
    linear_scaling_rule,
    predict_discrete_baseline,
    predict_rolling,
    theoretical_bound,
)
from blockhawkes.generator import BlockHawkesModel, sample_network
from blockhawkes.hawkes import HawkesParams, expected_next_event_time, fit_mle


def single_block_stream(params, num_nodes, horizon, seed):
    model = BlockHawkesModel(1, np.array([1.0]), [[params]])
    stream, _ = sample_network(model, num_nodes, horizon, rng=seed)
    return stream


class TestAdjustedRandIndex:
    def test_identical_partitions(self):
        a = ClassAssignment(np.array([0, 1, 0, 2, 1]), 3)
        assert adjusted_rand_index(a, a) == pytest.approx(1.0)

    def test_label_permutation_gives_one(self):
        a = np.array([0, 0, 1, 1])
        b = np.array([1, 1, 0, 0])
        assert adjusted_rand_index(a, b) == pytest.approx(1.0)

    def test_hand_contingency_oracle(self):
        # a = (0,0,0,1,1,1), b = (0,0,1,1,2,2): contingency [[2,1,0],[0,1,2]]
        # sum C(n_ij,2) = 2, rows 6, cols 3, C(6,2) = 15
        # ARI = (2 - 6*3/15) / ((6+3)/2 - 6*3/15) = 0.8/3.3 = 8/33
        a = np.array([0, 0, 0, 1, 1, 1])
        b = np.array([0, 0, 1, 1, 2, 2])
        assert adjusted_rand_index(a, b) == pytest.approx(8 / 33, rel=1e-12)

    def test_symmetry_and_relabeling_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = rng.integers(0, 3, size=30)
            b = rng.integers(0, 4, size=30)
            ab = adjusted_rand_index(a, b)
            assert ab == pytest.approx(adjusted_rand_index(b, a), rel=1e-12)
            perm = rng.permutation(4)
            assert ab == pytest.approx(adjusted_rand_index(a, perm[b]),
                                       rel=1e-12)
            assert -1.0 <= ab <= 1.0

    def test_accepts_class_assignments(self):
        a = ClassAssignment(np.array([0, 0, 1, 1]), 2)
        b = ClassAssignment(np.array([0, 1, 0, 1]), 2)
        got = adjusted_rand_index(a, b)
        assert got == pytest.approx(adjusted_rand_index(a.labels, b.labels))

    def test_trivial_partitions_define_as_one(self):
        a = np.zeros(5, dtype=int)
        assert adjusted_rand_index(a, a) == pytest.approx(1.0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length"):
            adjusted_rand_index(np.array([0, 1]), np.array([0, 1, 2]))


class TestDeviationArithmetic:
    def test_scaling_rule(self):
        p = linear_scaling_rule(10)
        assert (p.alpha, p.beta, p.lambda_inf) == (50.0, 100.0, 5.0)

    def test_expected_count_subcritical(self):
        # lambda*T/(1 - alpha/beta)
        assert expected_event_count(
            linear_scaling_rule(10), 20.0
        ) == pytest.approx(200.0, rel=1e-12)

    def test_expected_count_supercritical_is_nan(self):
        assert math.isnan(expected_event_count(HawkesParams(2.0, 1.0, 1.0), 10.0))

    def test_bound_values(self):
        assert theoretical_bound(200.0, 90) == pytest.approx(1.0)
        assert theoretical_bound(20000.0, 999000) == pytest.approx(
            20000 / 999000, rel=1e-12
        )

    def test_entry_indicator_matches_adjacency(self):
        for seed in range(5):
            stream = single_block_stream(
                HawkesParams(1.0, 2.0, 3.0), 6, 5.0, seed
            )
            adj = np.asarray(aggregate(stream))
            for i, j in [(0, 1), (2, 3), (4, 5), (1, 0)]:
                assert _entry_occupied(stream, i, j) == bool(adj[i, j])


class TestDeviationExperiment:
    def test_poisson_block_deviations_vanish(self):
        # splitting property: entries of a Poisson block are independent
        report = deviation_experiment(
            [10], lambda n: HawkesParams(0.0, 1.0, 9.0), 10.0, 4000, rng=0
        )
        pt = report.points[0]
        p = pt.p_zero
        se0 = math.sqrt(p * (1 - p)) * math.sqrt(
            abs(1 / pt.num_cond_zero - 1 / pt.num_sims)
        )
        se1 = math.sqrt(p * (1 - p)) * math.sqrt(
            1 / pt.num_cond_one + 1 / pt.num_sims
        )
        assert pt.delta0 <= 3 * se0 + 1e-12
        assert pt.delta1 <= 3 * se1 + 1e-12

    def test_hawkes_deviations_within_bound(self):
        report = deviation_experiment(
            [10, 50], linear_scaling_rule, 20.0, 1500, rng=1
        )
        for pt in report.points:
            assert pt.bound == pytest.approx(
                min(1.0, pt.mean_events / pt.num_pairs)
            )
            assert pt.delta0 <= pt.bound
            assert pt.delta1 <= pt.bound
            # subcritical cross-check of the empirical mean count
            assert pt.mean_events == pytest.approx(
                pt.expected_events, rel=0.05
            )

    def test_monitored_pair_choice_immaterial(self):
        report = deviation_experiment(
            [10], linear_scaling_rule, 20.0, 4000, rng=2
        )
        pt = report.points[0]
        assert pt.delta0_alt == pytest.approx(pt.delta0, abs=0.06)
        assert pt.delta1_alt == pytest.approx(pt.delta1, abs=0.06)

    def test_unobserved_conditioning_event_reported_nan(self):
        report = deviation_experiment(
            [10], lambda n: HawkesParams(0.0, 1.0, 1e-5), 10.0, 30, rng=3
        )
        pt = report.points[0]
        assert math.isnan(pt.delta1)
        assert pt.num_cond_one == 0
        assert pt.delta0 == pytest.approx(0.0, abs=1e-9)

    def test_rows_roundtrip(self):
        report = deviation_experiment(
            [10], linear_scaling_rule, 5.0, 50, rng=4
        )
        rows = report.rows()
        assert rows[0]["num_nodes"] == 10
        assert rows[0]["bound"] == report.points[0].bound


def two_event_stream():
    # one training event (snapshot 0 only), one test event 1.0 into the window
    return EventStream([0, 0], [1, 1], [1.0, 13.0], num_nodes=2, horizon=16.0)


class TestPredictionProtocol:
    def test_from_fraction(self):
        stream = two_event_stream()
        proto = PredictionProtocol.from_fraction(stream, 0.75, window=2.0)
        assert proto.train_end == pytest.approx(12.0)
        assert proto.num_windows == 2
        assert proto.window_bounds(1) == (pytest.approx(14.0),
                                          pytest.approx(16.0))

    def test_window_count_capped_by_horizon(self):
        stream = two_event_stream()
        with pytest.raises(ValueError, match="window"):
            PredictionProtocol(12.0, 5.0, 2, 16.0)

    def test_needs_at_least_one_window(self):
        stream = two_event_stream()
        with pytest.raises(ValueError, match="window"):
            PredictionProtocol.from_fraction(stream, 0.99, window=2.0)


class TestDiscreteBaseline:
    def test_geometric_prediction_arithmetic(self):
        assert _geometric_prediction(0.5, 6.0) == pytest.approx(9.0)
        assert _geometric_prediction(1.0, 6.0) == pytest.approx(3.0)

    def test_half_occupied_snapshots(self):
        stream = two_event_stream()
        labels = ClassAssignment(np.zeros(2, dtype=int), 1)
        proto = PredictionProtocol(12.0, 4.0, 1, stream.horizon)
        report = predict_discrete_baseline(stream, labels, proto, 6.0)
        (rec,) = report.records
        assert rec.prediction == pytest.approx(9.0)
        assert rec.actual == pytest.approx(1.0)
        assert report.rmse_total == pytest.approx(8.0)
        assert report.rmse_within == pytest.approx(8.0)
        assert math.isnan(report.rmse_between)

    def test_all_snapshots_occupied(self):
        stream = EventStream([0, 0, 0], [1, 1, 1], [1.0, 7.0, 13.0],
                             num_nodes=2, horizon=16.0)
        labels = ClassAssignment(np.zeros(2, dtype=int), 1)
        proto = PredictionProtocol(12.0, 4.0, 1, stream.horizon)
        report = predict_discrete_baseline(stream, labels, proto, 6.0)
        (rec,) = report.records
        assert rec.prediction == pytest.approx(3.0)

    def test_zero_probability_pair_flagged_and_excluded(self):
        stream = EventStream([0], [1], [13.0], num_nodes=2, horizon=16.0)
        labels = ClassAssignment(np.zeros(2, dtype=int), 1)
        proto = PredictionProtocol(12.0, 4.0, 1, stream.horizon)
        report = predict_discrete_baseline(stream, labels, proto, 6.0)
        (rec,) = report.records
        assert math.isnan(rec.prediction)
        assert rec.flag == "undefined-probability"
        assert math.isnan(report.rmse_total)
        assert report.num_flagged == 1

    def test_requires_two_training_snapshots(self):
        stream = two_event_stream()
        labels = ClassAssignment(np.zeros(2, dtype=int), 1)
        proto = PredictionProtocol(12.0, 4.0, 1, stream.horizon)
        with pytest.raises(ValueError, match="snapshot"):
            predict_discrete_baseline(stream, labels, proto, 7.0)


class TestPredictRolling:
    def test_one_window_composition(self):
        stream = EventStream(
            [0, 0, 0, 0], [1, 1, 1, 1], [2.0, 5.0, 9.0, 13.0],
            num_nodes=2, horizon=16.0,
        )
        labels = ClassAssignment(np.zeros(2, dtype=int), 1)
        proto = PredictionProtocol(12.0, 4.0, 1, stream.horizon)
        report = predict_rolling(stream, labels, proto)
        (rec,) = report.records
        train = np.array([2.0, 5.0, 9.0])
        fit = fit_mle(train, 12.0)
        expect = expected_next_event_time(fit.params, train, 12.0)
        assert rec.prediction == pytest.approx(expect, rel=1e-9)
        assert rec.actual == pytest.approx(1.0)
        assert report.rmse_total == pytest.approx(abs(expect - 1.0), rel=1e-9)

    def test_censored_window_excluded(self):
        stream = EventStream([0, 0], [1, 1], [2.0, 5.0],
                             num_nodes=2, horizon=16.0)
        labels = ClassAssignment(np.zeros(2, dtype=int), 1)
        proto = PredictionProtocol(12.0, 4.0, 1, stream.horizon)
        report = predict_rolling(stream, labels, proto)
        (rec,) = report.records
        assert rec.censored
        assert math.isnan(rec.actual)
        assert math.isnan(report.rmse_total)
        assert report.num_censored == 1

    def test_empty_training_pair_flagged(self):
        stream = EventStream([0], [1], [13.0], num_nodes=2, horizon=16.0)
        labels = ClassAssignment(np.zeros(2, dtype=int), 1)
        proto = PredictionProtocol(12.0, 4.0, 1, stream.horizon)
        report = predict_rolling(stream, labels, proto)
        (rec,) = report.records
        assert rec.flag == "empty-history"
        assert rec.prediction > 1e6  # background floored at 1e-8

    def test_poisson_rmse_near_irreducible_error(self):
        # block Poisson rate 2: waits are Exp(2), scored only when inside the
        # window, so the irreducible error is the RMS residual of Exp(2)
        # truncated at the window length around the predicted mean 0.5
        rate, cut = 2.0, 2.0
        tail = math.exp(-rate * cut)
        kept = 1.0 - tail
        mean_w = 1 / rate - cut * tail / kept
        mean_w2 = 2 / rate**2 - (cut**2 + 2 * cut / rate) * tail / kept
        irreducible = math.sqrt(mean_w2 - 2 * mean_w / rate + 1 / rate**2)
        stream = single_block_stream(HawkesParams(0.0, 1.0, rate), 2, 300.0, 7)
        labels = ClassAssignment(np.zeros(2, dtype=int), 1)
        proto = PredictionProtocol.from_fraction(stream, 2 / 3, window=cut)
        assert proto.num_windows == 50
        report = predict_rolling(stream, labels, proto)
        assert report.rmse_total == pytest.approx(irreducible, rel=0.2)

    def test_weekly_refit_uses_growing_history(self):
        model = BlockHawkesModel.homogeneous(
            2, HawkesParams(0.5, 1.0, 1.5), HawkesParams(0.2, 1.0, 0.4)
        )
        stream, truth = sample_network(model, 8, 60.0, rng=11)
        proto = PredictionProtocol.from_fraction(stream, 2 / 3, window=5.0)
        report = predict_rolling(stream, truth, proto)
        pairs = {r.pair for r in report.records}
        assert pairs == {(q, l) for q in range(2) for l in range(2)}
        per_pair = {p: [r for r in report.records if r.pair == p]
                    for p in pairs}
        assert all(len(v) == proto.num_windows for v in per_pair.values())


class TestReportConsistency:
    def _arms(self):
        model = BlockHawkesModel.homogeneous(
            2, HawkesParams(0.5, 1.0, 1.5), HawkesParams(0.2, 1.0, 0.5)
        )
        stream, truth = sample_network(model, 8, 120.0, rng=13)
        proto = PredictionProtocol.from_fraction(stream, 2 / 3, window=5.0)
        bhm = predict_rolling(stream, truth, proto)
        disc = predict_discrete_baseline(stream, truth, proto, 4.0)
        return bhm, disc

    def test_rmse_recomputable_from_records(self):
        for report in self._arms():
            for cat, want in [
                ("within", report.rmse_within),
                ("between", report.rmse_between),
                ("total", report.rmse_total),
            ]:
                resid = [
                    r.prediction - r.actual
                    for r in report.records
                    if not r.censored and math.isfinite(r.prediction)
                    and (cat == "total"
                         or (cat == "within") == (r.pair[0] == r.pair[1]))
                ]
                if resid:
                    check = math.sqrt(np.mean(np.square(resid)))
                    assert want == pytest.approx(check, rel=1e-12)
                else:
                    assert math.isnan(want)

    def test_arms_share_windows_and_actuals(self):
        bhm, disc = self._arms()
        key = lambda r: (r.pair, r.window)
        b = {key(r): (r.actual, r.censored) for r in bhm.records}
        d = {key(r): (r.actual, r.censored) for r in disc.records}
        assert b.keys() == d.keys()
        for k in b:
            assert b[k][1] == d[k][1]
            if not b[k][1]:
                assert b[k][0] == pytest.approx(d[k][0], rel=1e-12)

    def test_rmse_nonnegative(self):
        for report in self._arms():
            for value in (report.rmse_within, report.rmse_between,
                          report.rmse_total):
                assert math.isnan(value) or value >= 0.0
