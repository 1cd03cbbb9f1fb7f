"""Generative block Hawkes model and network sampling.

Nodes draw classes i.i.d. from `class_probs`; every ordered class pair (q, l)
runs one exponential Hawkes process on [0, horizon); each of its events
attaches to an ordered node pair drawn uniformly from block (q, l). Events
belonging to blocks with zero ordered node pairs (an empty class, or a
diagonal block of a singleton class) cannot attach and are discarded with a
warning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import ClassAssignment, EventStream, block_pair_count
from .hawkes import HawkesParams, simulate


@dataclass
class BlockHawkesModel:
    """Class prior plus one `HawkesParams` per ordered class pair."""

    num_classes: int
    class_probs: np.ndarray
    params: list[list[HawkesParams]]

    def __post_init__(self):
        self.num_classes = int(self.num_classes)
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        probs = np.asarray(self.class_probs, dtype=np.float64)
        if probs.shape != (self.num_classes,):
            raise ValueError(f"class_probs must have shape ({self.num_classes},)")
        if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0, atol=1e-9):
            raise ValueError("class_probs must be nonnegative and sum to 1")
        self.class_probs = probs / probs.sum()
        k = self.num_classes
        if len(self.params) != k or any(len(row) != k for row in self.params):
            raise ValueError(f"params must be a {k}x{k} grid")
        for row in self.params:
            for p in row:
                if not isinstance(p, HawkesParams):
                    raise ValueError("params entries must be HawkesParams")

    def alphas(self) -> np.ndarray:
        return np.array([[p.alpha for p in row] for row in self.params])

    def betas(self) -> np.ndarray:
        return np.array([[p.beta for p in row] for row in self.params])

    def lambdas(self) -> np.ndarray:
        return np.array([[p.lambda_inf for p in row] for row in self.params])

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "class_probs": [float(p) for p in self.class_probs],
            "params": [
                [
                    {"alpha": p.alpha, "beta": p.beta, "lambda_inf": p.lambda_inf}
                    for p in row
                ]
                for row in self.params
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BlockHawkesModel":
        params = [
            [HawkesParams(cell["alpha"], cell["beta"], cell["lambda_inf"])
             for cell in row]
            for row in payload["params"]
        ]
        return cls(
            num_classes=payload["num_classes"],
            class_probs=np.asarray(payload["class_probs"], dtype=np.float64),
            params=params,
        )

    @classmethod
    def homogeneous(
        cls,
        num_classes: int,
        diag: HawkesParams,
        offdiag: HawkesParams,
        class_probs: np.ndarray | None = None,
    ) -> "BlockHawkesModel":
        """Planted-partition style model: one diagonal and one off-diagonal
        parameter triple."""
        if class_probs is None:
            class_probs = np.full(num_classes, 1.0 / num_classes)
        params = [
            [diag if q == l else offdiag for l in range(num_classes)]
            for q in range(num_classes)
        ]
        return cls(num_classes, class_probs, params)


def _pair_generators(rng, num_classes: int):
    """One substream per ordered pair; reproducible and order-independent
    when `rng` is an integer seed, sequential otherwise."""
    k = num_classes
    if isinstance(rng, (int, np.integer)):
        base = np.random.SeedSequence(int(rng))
        children = base.spawn(k * k + 1)
        class_gen = np.random.default_rng(children[0])
        pair_gens = [np.random.default_rng(c) for c in children[1:]]
        return class_gen, pair_gens
    gen = np.random.default_rng(rng)
    return gen, [gen] * (k * k)


def sample_classes(model: BlockHawkesModel, num_nodes: int, rng) -> ClassAssignment:
    """Draw node classes i.i.d. from the model's class prior."""
    class_gen, _ = _pair_generators(rng, model.num_classes)
    labels = class_gen.choice(model.num_classes, size=num_nodes,
                              p=model.class_probs)
    return ClassAssignment(labels, model.num_classes)


def sample_network(
    model: BlockHawkesModel,
    num_nodes: int,
    horizon: float,
    rng,
    *,
    assignment: ClassAssignment | None = None,
    max_events: int = 10_000_000,
) -> tuple[EventStream, ClassAssignment]:
    """Simulate a network event stream from the generative model.

    Returns the stream and the class assignment used (drawn from the prior
    unless one is supplied). An integer `rng` seed fully determines the
    output: classes and each block pair get independent substreams spawned
    from it.
    """
    k = model.num_classes
    class_gen, pair_gens = _pair_generators(rng, k)
    if assignment is None:
        labels = class_gen.choice(k, size=num_nodes, p=model.class_probs)
        assignment = ClassAssignment(labels, k)
    elif assignment.num_nodes != num_nodes or assignment.num_classes != k:
        raise ValueError("assignment shape does not match num_nodes/model")
    labels = assignment.labels
    sizes = assignment.sizes()
    members = [np.flatnonzero(labels == q) for q in range(k)]

    all_times: list[np.ndarray] = []
    all_send: list[np.ndarray] = []
    all_recv: list[np.ndarray] = []
    dropped = 0
    for q in range(k):
        for l in range(k):
            gen = pair_gens[q * k + l]
            times = simulate(model.params[q][l], horizon, gen,
                             max_events=max_events)
            m = times.shape[0]
            if m == 0:
                continue
            n_pairs = block_pair_count(sizes[q], sizes[l], q == l)
            if n_pairs == 0:
                dropped += m
                continue
            if q == l:
                senders_local = gen.integers(0, sizes[q], size=m)
                shift = gen.integers(1, sizes[q], size=m)
                receivers_local = (senders_local + shift) % sizes[q]
                send = members[q][senders_local]
                recv = members[q][receivers_local]
            else:
                send = members[q][gen.integers(0, sizes[q], size=m)]
                recv = members[l][gen.integers(0, sizes[l], size=m)]
            all_times.append(times)
            all_send.append(send)
            all_recv.append(recv)
    if dropped:
        warnings.warn(
            f"discarded {dropped} events from blocks with zero ordered node "
            "pairs (empty class or singleton diagonal)",
            UserWarning,
            stacklevel=2,
        )
    if all_times:
        times = np.concatenate(all_times)
        send = np.concatenate(all_send)
        recv = np.concatenate(all_recv)
        order = np.argsort(times, kind="stable")
        times, send, recv = times[order], send[order], recv[order]
    else:
        times = np.empty(0)
        send = np.empty(0, dtype=np.int64)
        recv = np.empty(0, dtype=np.int64)
    stream = EventStream(send, recv, times, num_nodes=num_nodes,
                         horizon=float(horizon))
    return stream, assignment
