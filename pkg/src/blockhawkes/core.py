"""Event streams, class assignments, block partitioning, and CSV handling.

Conventions used across the package:

* nodes are dense 0-based integers; ingestion maps raw IDs by first
  appearance and returns the mapping,
* event times live in the observation window ``[0, horizon]`` and are kept
  sorted ascending (stable for ties),
* self-loops are invalid everywhere,
* aggregation windows are half-open ``[t_start, t_end)``; the default
  full-window aggregate closes at the horizon so an event exactly at the
  horizon is kept.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterator

import numpy as np

_EVENT_HEADER = ["sender", "receiver", "time"]


class ParseError(ValueError):
    """Malformed CSV input; ``line`` is the 1-based offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Event:
    """One directed interaction; self-loops are rejected."""

    sender: int
    receiver: int
    time: float

    def __post_init__(self):
        if self.sender == self.receiver:
            raise ValueError(f"self-loop at node {self.sender}")


@dataclass
class EventStream:
    """Sorted timestamped events on a directed network of `num_nodes` nodes.

    `senders`, `receivers`, and `times` are parallel arrays; `times` is
    ascending and bounded by ``[0, horizon]``.
    """

    senders: np.ndarray
    receivers: np.ndarray
    times: np.ndarray
    num_nodes: int
    horizon: float

    def __post_init__(self):
        self.senders = np.ascontiguousarray(self.senders, dtype=np.int64)
        self.receivers = np.ascontiguousarray(self.receivers, dtype=np.int64)
        self.times = np.ascontiguousarray(self.times, dtype=np.float64)
        if not (self.senders.shape == self.receivers.shape == self.times.shape):
            raise ValueError("senders, receivers, times must have equal length")
        if self.num_nodes < 1:
            raise ValueError("num_nodes must be positive")
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        self.horizon = float(self.horizon)
        self.num_nodes = int(self.num_nodes)
        m = self.times.shape[0]
        if m == 0:
            return
        for name, arr in (("sender", self.senders), ("receiver", self.receivers)):
            if arr.min() < 0 or arr.max() >= self.num_nodes:
                raise ValueError(f"{name} index outside [0, {self.num_nodes})")
        if np.any(self.senders == self.receivers):
            where = int(np.argmax(self.senders == self.receivers))
            raise ValueError(f"self-loop at event {where}")
        if not np.isfinite(self.times).all():
            raise ValueError("event times must be finite")
        if self.times[0] < 0 or self.times[-1] > self.horizon:
            raise ValueError("event times must lie in [0, horizon]")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("event times must be sorted ascending")

    @property
    def num_events(self) -> int:
        return int(self.times.shape[0])

    def __len__(self) -> int:
        return self.num_events

    def __iter__(self) -> Iterator[Event]:
        for s, r, t in zip(self.senders, self.receivers, self.times):
            yield Event(int(s), int(r), float(t))

    def before(self, t_cut: float) -> "EventStream":
        """Events with time < `t_cut`, re-windowed to horizon `t_cut`."""
        keep = self.times < t_cut
        return EventStream(self.senders[keep], self.receivers[keep],
                           self.times[keep], self.num_nodes, t_cut)


@dataclass
class ClassAssignment:
    """Hard node-to-class labels in ``[0, num_classes)``; classes may be empty."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        self.num_classes = int(self.num_classes)
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.num_classes
        ):
            raise ValueError(f"labels outside [0, {self.num_classes})")

    @property
    def num_nodes(self) -> int:
        return int(self.labels.shape[0])

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass
class BlockPairView:
    """Events of one ordered class pair plus the pair count of its block."""

    sender_class: int
    receiver_class: int
    times: np.ndarray
    event_indices: np.ndarray
    num_pairs: int

    @property
    def num_events(self) -> int:
        return int(self.times.shape[0])


def block_pair_count(size_q: int, size_l: int, diagonal: bool) -> int:
    """Ordered node pairs in a block: q*l off-diagonal, q*(q-1) on it."""
    if diagonal:
        return int(size_q) * (int(size_q) - 1)
    return int(size_q) * int(size_l)


def partition_by_blocks(
    stream: EventStream, assignment: ClassAssignment
) -> dict[tuple[int, int], BlockPairView]:
    """Split events into the K*K ordered class pairs, preserving time order."""
    if assignment.num_nodes != stream.num_nodes:
        raise ValueError("assignment covers a different node count than stream")
    labels = assignment.labels
    k = assignment.num_classes
    sizes = assignment.sizes()
    send_cls = labels[stream.senders]
    recv_cls = labels[stream.receivers]
    pair_code = send_cls * k + recv_cls
    order = np.argsort(pair_code, kind="stable")
    sorted_codes = pair_code[order]
    bounds = np.searchsorted(sorted_codes, np.arange(k * k + 1))
    out: dict[tuple[int, int], BlockPairView] = {}
    for q in range(k):
        for l in range(k):
            code = q * k + l
            idx = order[bounds[code]:bounds[code + 1]]
            idx = np.sort(idx)
            out[(q, l)] = BlockPairView(
                q, l, stream.times[idx], idx,
                block_pair_count(sizes[q], sizes[l], q == l),
            )
    return out


@dataclass
class AdjacencyMatrix:
    """Binary adjacency aggregated over a half-open time window."""

    matrix: np.ndarray
    t_start: float
    t_end: float

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.matrix.astype(dtype)
        return self.matrix


def aggregate(
    stream: EventStream, t_start: float = 0.0, t_end: float | None = None
) -> AdjacencyMatrix:
    """Binary adjacency of events in ``[t_start, t_end)``.

    With `t_end` omitted the window is the whole observation ``[0, horizon]``,
    closed on the right.
    """
    if t_end is None:
        t_end = stream.horizon
        mask = (stream.times >= t_start) & (stream.times <= t_end)
    else:
        mask = (stream.times >= t_start) & (stream.times < t_end)
    if not t_end > t_start:
        raise ValueError("window must satisfy t_start < t_end")
    n = stream.num_nodes
    matrix = np.zeros((n, n), dtype=np.int64)
    matrix[stream.senders[mask], stream.receivers[mask]] = 1
    return AdjacencyMatrix(matrix, float(t_start), float(t_end))


def weighted_adjacency(stream: EventStream) -> np.ndarray:
    """Event-count matrix over the full observation window."""
    n = stream.num_nodes
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (stream.senders, stream.receivers), 1)
    return counts


# ---------------------------------------------------------------------------
# CSV input/output


def _open_maybe(path_or_file, mode: str):
    if hasattr(path_or_file, "read") or hasattr(path_or_file, "write"):
        return path_or_file, False
    return open(Path(path_or_file), mode, newline=""), True


def load_events(
    source,
    *,
    num_nodes: int | None = None,
    horizon: float | None = None,
    ids: str = "map",
) -> tuple[EventStream, dict[str, int]]:
    """Read a ``sender,receiver,time`` CSV into an `EventStream`.

    ``ids="map"`` (default) assigns dense indices by first appearance and
    works for arbitrary string IDs; ``ids="index"`` trusts the IDs to already
    be 0-based integers (use it to reload files this package wrote, where
    renumbering by appearance would scramble node identity). Returns the
    stream and the id-to-index mapping. Rows may be unsorted; they are sorted
    by time, stable for ties.
    """
    if ids not in ("map", "index"):
        raise ValueError(f"ids must be 'map' or 'index', got {ids!r}")
    fh, owned = _open_maybe(source, "r")
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file, expected header "
                             + ",".join(_EVENT_HEADER)) from None
        if [h.strip() for h in header] != _EVENT_HEADER:
            raise ParseError(
                f"expected header {','.join(_EVENT_HEADER)!r}, got {','.join(header)!r}",
                line=1,
            )
        mapping: dict[str, int] = {}
        send_list: list[int] = []
        recv_list: list[int] = []
        time_list: list[float] = []

        def resolve(token: str, line: int) -> int:
            token = token.strip()
            if ids == "index":
                try:
                    value = int(token)
                except ValueError:
                    raise ParseError(
                        f"node id {token!r} is not an integer index", line
                    ) from None
                if value < 0:
                    raise ParseError(f"negative node index {value}", line)
                return value
            if token not in mapping:
                mapping[token] = len(mapping)
            return mapping[token]

        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line_no)
            s = resolve(row[0], line_no)
            r = resolve(row[1], line_no)
            if s == r:
                raise ParseError(f"self-loop at node {row[0].strip()!r}", line_no)
            try:
                t = float(row[2])
            except ValueError:
                raise ParseError(f"bad time {row[2]!r}", line_no) from None
            if not np.isfinite(t) or t < 0:
                raise ParseError(f"time must be finite and >= 0, got {t}", line_no)
            send_list.append(s)
            recv_list.append(r)
            time_list.append(t)
    finally:
        if owned:
            fh.close()

    send = np.asarray(send_list, dtype=np.int64)
    recv = np.asarray(recv_list, dtype=np.int64)
    times = np.asarray(time_list, dtype=np.float64)
    order = np.argsort(times, kind="stable")
    send, recv, times = send[order], recv[order], times[order]

    if ids == "index":
        observed = int(max(send.max(), recv.max())) + 1 if send.size else 0
        mapping = {str(i): i for i in range(num_nodes or observed)}
    else:
        observed = len(mapping)
    if num_nodes is None:
        if observed == 0:
            raise ValueError("empty stream: pass num_nodes explicitly")
        num_nodes = observed
    elif num_nodes < observed:
        raise ValueError(f"num_nodes={num_nodes} but {observed} nodes observed")
    if horizon is None:
        if times.size == 0:
            raise ValueError("empty stream: pass horizon explicitly")
        horizon = float(times[-1])
    stream = EventStream(send, recv, times, num_nodes=num_nodes, horizon=horizon)
    return stream, mapping


def _format_time(t: float) -> str:
    # repr round-trips doubles exactly and keeps them short
    return repr(float(t))


def save_events(stream: EventStream, dest, id_map: dict[str, int] | None = None) -> None:
    """Write ``sender,receiver,time`` rows; `id_map` restores original IDs."""
    inverse = None
    if id_map is not None:
        inverse = {index: original for original, index in id_map.items()}
        if len(inverse) != len(id_map):
            raise ValueError("id_map is not one-to-one")
    fh, owned = _open_maybe(dest, "w")
    try:
        fh.write(",".join(_EVENT_HEADER) + "\n")
        for s, r, t in zip(stream.senders, stream.receivers, stream.times):
            if inverse is not None:
                fh.write(f"{inverse[int(s)]},{inverse[int(r)]},{_format_time(t)}\n")
            else:
                fh.write(f"{int(s)},{int(r)},{_format_time(t)}\n")
    finally:
        if owned:
            fh.close()


def save_node_mapping(mapping: dict[str, int], dest) -> None:
    fh, owned = _open_maybe(dest, "w")
    try:
        fh.write("original_id,index\n")
        for original, index in sorted(mapping.items(), key=lambda kv: kv[1]):
            fh.write(f"{original},{index}\n")
    finally:
        if owned:
            fh.close()


def save_labels(labels: np.ndarray, dest) -> None:
    """Write a ``node,label`` CSV for a dense 0..N-1 node range."""
    fh, owned = _open_maybe(dest, "w")
    try:
        fh.write("node,label\n")
        for node, label in enumerate(np.asarray(labels, dtype=np.int64)):
            fh.write(f"{node},{int(label)}\n")
    finally:
        if owned:
            fh.close()


def load_labels(source) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``node,label`` CSV; returns (nodes, labels) sorted by node."""
    fh, owned = _open_maybe(source, "r")
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["node", "label"]:
            raise ParseError("expected header 'node,label'", line=1)
        nodes: list[int] = []
        labels: list[int] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", line_no)
            try:
                nodes.append(int(row[0]))
                labels.append(int(row[1]))
            except ValueError:
                raise ParseError(f"bad row {row!r}", line_no) from None
    finally:
        if owned:
            fh.close()
    nodes_arr = np.asarray(nodes, dtype=np.int64)
    labels_arr = np.asarray(labels, dtype=np.int64)
    order = np.argsort(nodes_arr, kind="stable")
    return nodes_arr[order], labels_arr[order]
