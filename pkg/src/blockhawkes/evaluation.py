"""Model evaluation: independence deviations, partition scoring, prediction.

Three instruments: a Monte Carlo check that single-block adjacency entries
decouple as networks grow (with its closed-form bound), the adjusted Rand
index for comparing partitions, and a rolling next-event prediction protocol
with a discrete-snapshot baseline sharing the same splits.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ClassAssignment, EventStream, partition_by_blocks
from .generator import BlockHawkesModel, sample_network
from .hawkes import HawkesParams, expected_next_event_time, fit_mle

# ---------------------------------------------------------------------------
# Adjusted Rand index


def _as_labels(x) -> np.ndarray:
    if isinstance(x, ClassAssignment):
        return x.labels
    return np.asarray(x, dtype=np.int64).ravel()


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected partition agreement in [-1, 1].

    Computed from the pair-counting contingency table; invariant under
    relabeling either argument. Accepts `ClassAssignment` or label arrays.
    Degenerate comparisons with zero chance-adjusted range (both partitions
    trivial) score 1.0.
    """
    a = _as_labels(a)
    b = _as_labels(b)
    if a.shape != b.shape:
        raise ValueError(
            f"partitions differ in length: {a.shape[0]} vs {b.shape[0]}"
        )
    n = a.shape[0]

    def comb2(x):
        return x * (x - 1.0) / 2.0

    total = comb2(float(n))
    if total == 0:
        return 1.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1.0)
    sum_cells = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / total
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        return 1.0
    return float((sum_cells - expected) / (maximum - expected))


# ---------------------------------------------------------------------------
# Deviation-from-independence experiment


def linear_scaling_rule(num_nodes: int) -> HawkesParams:
    """Densifying single-block configuration: excitation, decay, and
    background all grow linearly with the node count, so per-node-pair rates
    stay of order 1/N while total volume grows."""
    n = float(num_nodes)
    return HawkesParams(5.0 * n, 10.0 * n, 0.5 * n)


def expected_event_count(params: HawkesParams, horizon: float) -> float:
    """Mean total event count; nan when the process is not subcritical."""
    ratio = params.branching_ratio
    if ratio >= 1.0:
        return math.nan
    return params.lambda_inf * horizon / (1.0 - ratio)


def theoretical_bound(mean_events: float, num_pairs: int) -> float:
    """Upper bound min{1, mu/n} on either conditional-marginal deviation."""
    return min(1.0, mean_events / num_pairs)


def _entry_occupied(stream: EventStream, i: int, j: int) -> bool:
    return bool(np.any((stream.senders == i) & (stream.receivers == j)))


@dataclass(frozen=True)
class DeviationPoint:
    """One network size: empirical deviations against the bound.

    `delta0` (resp. `delta1`) is |P(entry empty | other entry empty) -
    P(entry empty)| (resp. conditioning on the other entry being occupied);
    nan when the conditioning event was never observed. The `_alt` values
    repeat the estimate on a second disjoint entry pair (nan when the
    network is too small to host one).
    """

    num_nodes: int
    num_sims: int
    num_pairs: int
    mean_events: float
    expected_events: float
    bound: float
    p_zero: float
    delta0: float
    delta1: float
    delta0_alt: float
    delta1_alt: float
    num_cond_zero: int
    num_cond_one: int


@dataclass(frozen=True)
class DeviationReport:
    points: list[DeviationPoint]

    def rows(self) -> list[dict]:
        return [asdict(p) for p in self.points]


def _conditional_deltas(zero_a, zero_b):
    """|P(A empty | B state) - P(A empty)| for both states of B."""
    p = float(zero_a.mean())
    m_zero = int(zero_b.sum())
    m_one = int(zero_a.shape[0] - m_zero)
    d0 = abs(float(zero_a[zero_b].mean()) - p) if m_zero else math.nan
    d1 = abs(float(zero_a[~zero_b].mean()) - p) if m_one else math.nan
    return d0, d1, m_zero, m_one


def deviation_experiment(
    sizes,
    params_rule,
    horizon: float,
    num_sims: int,
    rng,
) -> DeviationReport:
    """Estimate how far single-block adjacency entries are from independent.

    For each network size N: simulate `num_sims` one-class networks with
    parameters `params_rule(N)`, reduce each to whether the monitored
    adjacency entries (0,1) and (2,3) received any event, and compare the
    conditional empty-probability of one entry given the other against its
    marginal. Reported against the bound min{1, mean events / N(N-1)}.
    A second disjoint entry pair, (4,5) given (6,7), is estimated alongside
    when N >= 8; block exchangeability makes the choice immaterial.
    """
    root = np.random.default_rng(rng)
    points = []
    for size in sizes:
        size = int(size)
        if size < 4:
            raise ValueError("deviation experiment needs at least 4 nodes")
        params = params_rule(size)
        model = BlockHawkesModel(1, np.array([1.0]), [[params]])
        with_alt = size >= 8
        zero_main = np.empty(num_sims, dtype=bool)
        zero_cond = np.empty(num_sims, dtype=bool)
        zero_main_alt = np.empty(num_sims, dtype=bool)
        zero_cond_alt = np.empty(num_sims, dtype=bool)
        counts = np.empty(num_sims)
        for s in range(num_sims):
            stream, _ = sample_network(model, size, horizon, rng=root)
            counts[s] = stream.num_events
            zero_main[s] = not _entry_occupied(stream, 0, 1)
            zero_cond[s] = not _entry_occupied(stream, 2, 3)
            if with_alt:
                zero_main_alt[s] = not _entry_occupied(stream, 4, 5)
                zero_cond_alt[s] = not _entry_occupied(stream, 6, 7)
        d0, d1, m0, m1 = _conditional_deltas(zero_main, zero_cond)
        if with_alt:
            d0a, d1a, _, _ = _conditional_deltas(zero_main_alt, zero_cond_alt)
        else:
            d0a = d1a = math.nan
        num_pairs = size * (size - 1)
        mean_events = float(counts.mean())
        points.append(DeviationPoint(
            num_nodes=size,
            num_sims=num_sims,
            num_pairs=num_pairs,
            mean_events=mean_events,
            expected_events=expected_event_count(params, horizon),
            bound=theoretical_bound(mean_events, num_pairs),
            p_zero=float(zero_main.mean()),
            delta0=d0,
            delta1=d1,
            delta0_alt=d0a,
            delta1_alt=d1a,
            num_cond_zero=m0,
            num_cond_one=m1,
        ))
    return DeviationReport(points)


# ---------------------------------------------------------------------------
# Rolling next-event prediction


@dataclass(frozen=True)
class PredictionProtocol:
    """Train/test split shared by both prediction arms.

    Test window j covers ``(train_end + j*window, train_end + (j+1)*window]``.
    """

    train_end: float
    window: float
    num_windows: int
    horizon: float

    def __post_init__(self):
        if not 0 < self.train_end < self.horizon:
            raise ValueError("train_end must lie inside (0, horizon)")
        if self.window <= 0:
            raise ValueError("window length must be positive")
        if self.num_windows < 1:
            raise ValueError("need at least one test window")
        span = self.train_end + self.num_windows * self.window
        if span > self.horizon + 1e-9:
            raise ValueError(
                f"{self.num_windows} windows of length {self.window} "
                f"extend past the horizon {self.horizon}"
            )

    @classmethod
    def from_fraction(
        cls,
        stream: EventStream,
        fraction: float = 2 / 3,
        *,
        window: float,
        num_windows: int | None = None,
    ) -> "PredictionProtocol":
        if not 0 < fraction < 1:
            raise ValueError("train fraction must lie in (0, 1)")
        train_end = stream.horizon * fraction
        available = int((stream.horizon - train_end) / window + 1e-9)
        if num_windows is None:
            num_windows = available
        return cls(train_end, float(window), num_windows, stream.horizon)

    def window_bounds(self, index: int) -> tuple[float, float]:
        start = self.train_end + index * self.window
        return start, start + self.window


@dataclass(frozen=True)
class PredictionRecord:
    """One block pair in one test window.

    `actual` is the waiting time from the window start to the pair's first
    in-window event, nan when censored (no event). `flag` marks degenerate
    predictions: "empty-history" (no events observed yet at fit time) or
    "undefined-probability" (the discrete baseline saw no occupied training
    snapshot; prediction is nan).
    """

    pair: tuple[int, int]
    window: int
    start: float
    prediction: float
    actual: float
    censored: bool
    flag: str = ""


def _rmse(residuals) -> float:
    if not residuals:
        return math.nan
    return math.sqrt(float(np.mean(np.square(residuals))))


@dataclass(frozen=True)
class PredictionReport:
    """Per-record predictions plus pooled RMSE aggregates.

    Residuals are pooled over all scorable records in a category; "within"
    covers diagonal class pairs, "between" the off-diagonal ones. Censored
    windows and undefined predictions are excluded from every aggregate.
    """

    arm: str
    records: list[PredictionRecord]
    protocol: PredictionProtocol
    rmse_within: float
    rmse_between: float
    rmse_total: float
    num_scored: int
    num_censored: int
    num_flagged: int

    @classmethod
    def from_records(cls, arm, records, protocol) -> "PredictionReport":
        usable = [
            r for r in records
            if not r.censored and math.isfinite(r.prediction)
        ]
        within = [r.prediction - r.actual for r in usable
                  if r.pair[0] == r.pair[1]]
        between = [r.prediction - r.actual for r in usable
                   if r.pair[0] != r.pair[1]]
        return cls(
            arm=arm,
            records=records,
            protocol=protocol,
            rmse_within=_rmse(within),
            rmse_between=_rmse(between),
            rmse_total=_rmse(within + between),
            num_scored=len(usable),
            num_censored=sum(r.censored for r in records),
            num_flagged=sum(bool(r.flag) for r in records),
        )


def _scorable_blocks(stream, assignment, protocol):
    if protocol.train_end + protocol.num_windows * protocol.window \
            > stream.horizon + 1e-9:
        raise ValueError("protocol windows extend past the stream horizon")
    blocks = partition_by_blocks(stream, assignment)
    return {
        key: view for key, view in sorted(blocks.items())
        if view.num_pairs > 0
    }


def _first_event_wait(times, start, end) -> float:
    pos = np.searchsorted(times, start, side="right")
    if pos < times.shape[0] and times[pos] <= end:
        return float(times[pos] - start)
    return math.nan


def predict_rolling(
    stream: EventStream,
    assignment: ClassAssignment,
    protocol: PredictionProtocol,
    *,
    refit_iterations: int = 300,
) -> PredictionReport:
    """Expected-waiting-time predictions per block pair per test window.

    For each window, the pair's parameters are refit by MLE on all of its
    events up to the window start (horizon = window start, warm-started from
    the previous window's fit), and the prediction is the expected time to
    the next event of the block's process given that history. The class
    assignment stays frozen throughout.
    """
    records = []
    for key, view in _scorable_blocks(stream, assignment, protocol).items():
        times = view.times
        params = None
        for j in range(protocol.num_windows):
            start, end = protocol.window_bounds(j)
            n_hist = int(np.searchsorted(times, start, side="right"))
            history = times[:n_hist]
            fit = fit_mle(history, start, init=params,
                          max_iterations=refit_iterations)
            params = fit.params
            prediction = expected_next_event_time(params, history, start)
            actual = _first_event_wait(times, start, end)
            records.append(PredictionRecord(
                pair=key,
                window=j,
                start=start,
                prediction=prediction,
                actual=actual,
                censored=math.isnan(actual),
                flag="" if n_hist else "empty-history",
            ))
    return PredictionReport.from_records("hawkes", records, protocol)


def _geometric_prediction(p_hat: float, snapshot_length: float) -> float:
    # expected elapsed snapshots (geometric, mean 1/p) times the length,
    # minus half a snapshot to land mid-interval
    return snapshot_length / p_hat - snapshot_length / 2.0


def predict_discrete_baseline(
    stream: EventStream,
    assignment: ClassAssignment,
    protocol: PredictionProtocol,
    snapshot_length: float,
) -> PredictionReport:
    """Discrete-snapshot baseline under the identical protocol.

    The stream before a window is cut into snapshots of `snapshot_length`;
    p_hat is the fraction containing at least one event of the pair, and the
    prediction is ``snapshot_length/p_hat - snapshot_length/2``. Pairs whose
    p_hat is zero get a nan prediction flagged "undefined-probability".
    Like the main arm, p_hat is re-estimated before every window.
    """
    length = float(snapshot_length)
    if length <= 0:
        raise ValueError("snapshot length must be positive")
    if int(protocol.train_end / length + 1e-9) < 2:
        raise ValueError(
            "snapshot length must fit at least twice into the training window"
        )
    records = []
    for key, view in _scorable_blocks(stream, assignment, protocol).items():
        times = view.times
        for j in range(protocol.num_windows):
            start, end = protocol.window_bounds(j)
            num_snaps = int(start / length + 1e-9)
            covered = times[times < num_snaps * length]
            occupied = np.unique(np.floor(covered / length)).shape[0]
            p_hat = occupied / num_snaps
            if p_hat > 0:
                prediction, flag = _geometric_prediction(p_hat, length), ""
            else:
                prediction, flag = math.nan, "undefined-probability"
            actual = _first_event_wait(times, start, end)
            records.append(PredictionRecord(
                pair=key,
                window=j,
                start=start,
                prediction=prediction,
                actual=actual,
                censored=math.isnan(actual),
                flag=flag,
            ))
    return PredictionReport.from_records("discrete", records, protocol)
