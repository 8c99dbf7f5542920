"""Actors, attributes and hyperevent streams, plus CSV ingestion."""
from __future__ import annotations

import csv
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DecreasingTime,
    DuplicateActor,
    DuplicateReceiverWarning,
    EmptyReceiverSet,
    EmptyStream,
    FormatError,
    MissingValue,
    SelfLoop,
    UnknownActor,
    UnknownAttribute,
    UnknownKind,
)

EVENT_HEADER = ("TIME", "SENDER", "RECEIVERS")
_TRUE = {"1", "1.0", "true", "yes", "t", "y"}
_FALSE = {"0", "0.0", "false", "no", "f", "n"}
_MISSING = {"", "na", "nan", "null", "none"}


class ActorIndex:
    """Bijection between actor labels and dense integer indices ``0..n-1``."""

    def __init__(self, labels: Iterable[str]):
        self._labels = tuple(labels)
        self._index = {}
        for pos, label in enumerate(self._labels):
            if label in self._index:
                raise DuplicateActor(f"actor {label!r} listed twice")
            self._index[label] = pos

    def __len__(self):
        return len(self._labels)

    def __contains__(self, label):
        return label in self._index

    def __iter__(self):
        return iter(self._labels)

    def __eq__(self, other):
        return isinstance(other, ActorIndex) and self._labels == other._labels

    def __hash__(self):
        return hash(self._labels)

    def __repr__(self):
        return f"ActorIndex({len(self)} actors)"

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise UnknownActor(f"unknown actor {label!r}") from None

    def label(self, idx: int) -> str:
        return self._labels[idx]


@dataclass(frozen=True)
class AttributeTable:
    """Time-invariant actor attributes.

    Numeric attributes are float arrays indexed by actor; categorical
    attributes are stored as integer codes into ``categories[name]``.
    """

    actors: ActorIndex
    numeric: Mapping[str, np.ndarray] = field(default_factory=dict)
    categorical: Mapping[str, np.ndarray] = field(default_factory=dict)
    categories: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.actors)
        for name, col in {**self.numeric, **self.categorical}.items():
            if len(col) != n:
                raise MissingValue(f"attribute {name!r} has {len(col)} values for {n} actors")
            col.setflags(write=False)

    @classmethod
    def empty(cls) -> "AttributeTable":
        return cls(ActorIndex(()))

    @property
    def names(self) -> list[str]:
        return list(self.numeric) + list(self.categorical)

    def __len__(self):
        return len(self.numeric) + len(self.categorical)

    def kind(self, name: str) -> str:
        if name in self.numeric:
            return "num"
        if name in self.categorical:
            return "cat"
        raise UnknownAttribute(f"unknown attribute {name!r}")

    def column(self, name: str) -> tuple[np.ndarray, bool]:
        """Return ``(values, is_categorical)`` for attribute ``name``."""
        if name in self.numeric:
            return self.numeric[name], False
        if name in self.categorical:
            return self.categorical[name], True
        raise UnknownAttribute(f"unknown attribute {name!r}")

    def value(self, name: str, actor: int):
        col, is_cat = self.column(name)
        if is_cat:
            return self.categories[name][col[actor]]
        return float(col[actor])


@dataclass(frozen=True)
class RiskPolicy:
    """Which receivers a sender could address at any time.

    By default every actor except the sender is eligible. ``eligible`` maps
    a sender index to an explicit receiver universe.
    """

    exclude_sender: bool = True
    eligible: Mapping[int, tuple[int, ...]] | None = None

    def __post_init__(self):
        if self.eligible is not None and self.exclude_sender:
            for sender, universe in self.eligible.items():
                if sender in universe:
                    raise SelfLoop(f"eligible set of sender {sender} contains the sender")

    def universe(self, sender: int, n_actors: int) -> np.ndarray:
        if self.eligible is not None and sender in self.eligible:
            return np.array(sorted(self.eligible[sender]), dtype=np.int64)
        everyone = np.arange(n_actors, dtype=np.int64)
        if self.exclude_sender:
            return np.delete(everyone, sender)
        return everyone

    def allows(self, sender: int, receivers: Sequence[int], n_actors: int) -> bool:
        if self.eligible is not None and sender in self.eligible:
            allowed = set(self.eligible[sender])
            return all(r in allowed for r in receivers)
        if self.exclude_sender and sender in receivers:
            return False
        return all(0 <= r < n_actors for r in receivers)


@dataclass(frozen=True)
class Hyperevent:
    time: float
    sender: int
    receivers: tuple[int, ...]
    index: int

    def __post_init__(self):
        if not self.receivers:
            raise EmptyReceiverSet(f"event {self.index} has no receivers")

    @property
    def size(self) -> int:
        return len(self.receivers)


@dataclass(frozen=True)
class EventStream:
    events: tuple[Hyperevent, ...]
    actors: ActorIndex
    policy: RiskPolicy = RiskPolicy()

    def __post_init__(self):
        last_t = -math.inf
        for pos, ev in enumerate(self.events):
            if ev.index != pos:
                raise FormatError(f"event at position {pos} carries index {ev.index}")
            if ev.time < last_t:
                raise DecreasingTime(f"event {pos}: time {ev.time} < previous {last_t}")
            last_t = ev.time

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __getitem__(self, item):
        return self.events[item]

    @property
    def n_actors(self) -> int:
        return len(self.actors)

    @classmethod
    def from_records(cls, records, actors=None, policy=RiskPolicy()):
        """Build a stream from ``(time, sender_label, receiver_labels)`` tuples.

        If ``actors`` is omitted the universe is the sorted set of labels.
        """
        records = [(float(t), s, list(rs)) for t, s, rs in records]
        if actors is None:
            labels = set()
            for _, s, rs in records:
                labels.add(s)
                labels.update(rs)
            actors = ActorIndex(sorted(labels))
        events = [_make_event(pos, t, s, rs, actors, policy) for pos, (t, s, rs) in enumerate(records)]
        return cls(tuple(events), actors, policy)

    def receiver_labels(self, ev: Hyperevent) -> list[str]:
        return [self.actors.label(r) for r in ev.receivers]


def _make_event(pos, time, sender, receivers, actors, policy, where=None):
    where = where or f"event {pos}"
    if not math.isfinite(time) or time < 0:
        raise FormatError(f"{where}: time must be a finite nonnegative number")
    if not receivers:
        raise EmptyReceiverSet(f"{where}: empty receiver set")
    s = actors.index(sender)
    idx = [actors.index(r) for r in receivers]
    uniq = sorted(set(idx))
    if len(uniq) != len(idx):
        dups = sorted({actors.label(r) for r, c in Counter(idx).items() if c > 1})
        warnings.warn(f"{where}: duplicate receivers {dups} removed", DuplicateReceiverWarning, stacklevel=3)
    if policy.exclude_sender and s in uniq:
        raise SelfLoop(f"{where}: sender {sender!r} is among its receivers")
    if not policy.allows(s, uniq, len(actors)):
        raise UnknownActor(f"{where}: receivers outside the eligible set of {sender!r}")
    return Hyperevent(time, s, tuple(uniq), pos)


def format_time(t: float) -> str:
    if float(t).is_integer():
        return str(int(t))
    return repr(float(t))


def parse_events(path, actors: ActorIndex | None = None, policy: RiskPolicy = RiskPolicy()) -> EventStream:
    """Read an ``events.csv`` file.

    Times must be non-decreasing; ties keep file order. When ``actors`` is
    None the actor universe is the sorted set of labels found in the file.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, quoting=csv.QUOTE_NONE))
    if not rows or tuple(c.strip() for c in rows[0]) != EVENT_HEADER:
        raise FormatError(f"{path}: header must be {','.join(EVENT_HEADER)}")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        try:
            t = float(row[0])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad time {row[0]!r}") from None
        recv = [r.strip() for r in row[2].split(";") if r.strip()]
        records.append((lineno, t, row[1].strip(), recv))

    if actors is None:
        labels = set()
        for _, _, s, rs in records:
            labels.add(s)
            labels.update(rs)
        actors = ActorIndex(sorted(labels))

    events = []
    last_t = -math.inf
    for pos, (lineno, t, s, rs) in enumerate(records):
        where = f"{path}:{lineno}"
        if t < last_t:
            raise DecreasingTime(f"{where}: time {t} precedes previous time {last_t}")
        last_t = t
        events.append(_make_event(pos, t, s, rs, actors, policy, where))
    return EventStream(tuple(events), actors, policy)


def write_events(stream: EventStream, path) -> None:
    """Write ``stream`` in canonical form (receivers in index order, LF endings)."""
    lines = [",".join(EVENT_HEADER)]
    for ev in stream:
        lines.append(
            f"{format_time(ev.time)},{stream.actors.label(ev.sender)},{';'.join(stream.receiver_labels(ev))}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _coerce_numeric(name, raw, where):
    low = raw.strip().lower()
    if low in _MISSING:
        raise MissingValue(f"{where}: missing value for {name!r}")
    if low in _TRUE:
        return 1.0
    if low in _FALSE:
        return 0.0
    try:
        val = float(raw)
    except ValueError:
        raise FormatError(f"{where}: non-numeric value {raw!r} for {name!r}") from None
    if not math.isfinite(val):
        raise FormatError(f"{where}: non-finite value for {name!r}")
    return val


def parse_attributes(path) -> AttributeTable:
    """Read an ``attributes.csv`` file with header ``ACTOR,<name>:<kind>,...``.

    An empty file yields an empty table.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return AttributeTable.empty()
    rows = list(csv.reader(text.splitlines(), quoting=csv.QUOTE_NONE))
    header = [c.strip() for c in rows[0]]
    if not header or header[0] != "ACTOR":
        raise FormatError(f"{path}: first header column must be ACTOR")
    columns = []
    for col in header[1:]:
        name, sep, kind = col.rpartition(":")
        if not sep or not name:
            raise UnknownKind(f"{path}: column {col!r} must be written as <name>:<kind>")
        if kind not in ("num", "cat"):
            raise UnknownKind(f"{path}: unknown attribute kind {kind!r} in column {col!r}")
        if name in [c[0] for c in columns]:
            raise FormatError(f"{path}: attribute {name!r} declared twice")
        columns.append((name, kind))

    labels, cells = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) < len(header):
            raise MissingValue(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        if len(row) > len(header):
            raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        labels.append(row[0].strip())
        cells.append((lineno, row[1:]))
    actors = ActorIndex(labels)

    numeric, categorical, categories = {}, {}, {}
    for c, (name, kind) in enumerate(columns):
        if kind == "num":
            numeric[name] = np.array(
                [_coerce_numeric(name, row[c], f"{path}:{ln}") for ln, row in cells], dtype=float
            )
        else:
            raw = []
            for ln, row in cells:
                val = row[c].strip()
                if val.lower() in _MISSING:
                    raise MissingValue(f"{path}:{ln}: missing value for {name!r}")
                raw.append(val)
            cats = tuple(sorted(set(raw)))
            lookup = {v: k for k, v in enumerate(cats)}
            categorical[name] = np.array([lookup[v] for v in raw], dtype=np.int64)
            categories[name] = cats
    return AttributeTable(actors, numeric, categorical, categories)


def write_attributes(table: AttributeTable, path) -> None:
    header = ["ACTOR"] + [f"{n}:num" for n in table.numeric] + [f"{n}:cat" for n in table.categorical]
    lines = [",".join(header)]
    for a, label in enumerate(table.actors):
        vals = [format_time(table.numeric[n][a]) for n in table.numeric]
        vals += [table.categories[n][table.categorical[n][a]] for n in table.categorical]
        lines.append(",".join([label] + vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SizeHistogram:
    counts: Mapping[int, int]
    n_events: int
    mean_size: float

    def binned(self, max_size: int = 10) -> list[tuple[str, int]]:
        """Counts for sizes ``1..max_size`` plus an overflow bin ``>max_size``."""
        rows = [(str(s), self.counts.get(s, 0)) for s in range(1, max_size + 1)]
        rows.append((f">{max_size}", sum(c for s, c in self.counts.items() if s > max_size)))
        return rows

    def format_table(self, max_size: int = 10) -> str:
        bins = self.binned(max_size)
        width = max(len(f"{c:,}") for _, c in bins) + 1
        top = "|J|        " + "".join(f"{b:>{width}}" for b, _ in bins)
        bottom = "frequency: " + "".join(f"{c:>{width},}" for _, c in bins)
        return "\n".join(
            [top, bottom, f"events: {self.n_events:,}", f"mean receivers: {self.mean_size:.2f}"]
        )


def stream_stats(stream: EventStream) -> SizeHistogram:
    if len(stream) == 0:
        raise EmptyStream("stream has no events")
    sizes = Counter(ev.size for ev in stream)
    n = len(stream)
    mean = sum(s * c for s, c in sizes.items()) / n
    return SizeHistogram(dict(sorted(sizes.items())), n, mean)
