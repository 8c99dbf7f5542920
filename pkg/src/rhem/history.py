"""Decayed hyperedge-degree statistics of an event history.

Every counter is stored lazily as ``(value, ref_time)`` and rescaled by
``exp(-(t - ref_time) * ln2 / half_life)`` when read or updated, so an
update only touches the keys of the new event.
"""
from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from itertools import combinations
from math import comb
from pathlib import Path
from typing import Iterable, NamedTuple

from .core import EventStream, Hyperevent
from .errors import CostWarning, FormatError, OrderExceeded, OutOfOrderEvent

UNDERFLOW = 1e-300
LARGE_EVENT = 30
DEFAULT_ORDER = 4
STATE_MAGIC = b"RHEMHIST"
STATE_VERSION = 1
ONE_WEEK = 604800.0


@dataclass(frozen=True)
class DecayConfig:
    half_life: float = ONE_WEEK

    def __post_init__(self):
        if not (self.half_life > 0 and math.isfinite(self.half_life)):
            raise ValueError(f"half_life must be positive and finite, got {self.half_life}")

    @property
    def rate(self) -> float:
        return math.log(2) / self.half_life

    def weight(self, dt: float) -> float:
        return math.exp(-dt * self.rate)


class DecayedCounter(NamedTuple):
    value: float
    ref_time: float

    def value_at(self, t: float, rate: float) -> float:
        v = self.value * math.exp(-(t - self.ref_time) * rate)
        return v if v >= UNDERFLOW else 0.0


def canonical(actors: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted(set(actors)))


class HistoryView:
    """Read-only queries over decayed degree stores.

    ``HistoryState`` extends this with ``advance``; ``HistoryState.snapshot``
    returns a detached ``HistoryView``.
    """

    def __init__(self, decay: DecayConfig, max_order: int = DEFAULT_ORDER):
        if max_order < 1:
            raise ValueError("max_order must be >= 1")
        self.decay = decay
        self.max_order = int(max_order)
        self.position = 0
        self.last_time = -math.inf
        self._rate = decay.rate
        self._in = {}         # receiver subset -> (value, ref_time)
        self._send = {}       # (sender, subset) -> (value, ref_time)
        self._out = {}        # sender -> (value, ref_time)
        self._exact = {}      # (sender, receivers) -> (value, ref_time)
        self._unordered = {}  # sorted {sender} | receivers -> (value, ref_time)
        # adjacency for dyadic lookups and candidate batching
        self._out_nbrs = {}   # sender -> receivers ever addressed
        self._in_nbrs = {}    # receiver -> senders ever received from
        self._exact_by_sender = {}
        self._unordered_by_actor = {}

    def _check_time(self, t):
        if t < self.last_time:
            raise OutOfOrderEvent(f"query time {t} precedes last event time {self.last_time}")

    def _check_order(self, p):
        if p > self.max_order:
            raise OrderExceeded(f"subset order {p} exceeds tracked order {self.max_order}")

    def _read(self, store, key, t):
        entry = store.get(key)
        if entry is None:
            return 0.0
        v = entry[0] * math.exp(-(t - entry[1]) * self._rate)
        return v if v >= UNDERFLOW else 0.0

    def counter(self, store: str, key) -> DecayedCounter | None:
        """Raw stored counter; ``store`` is one of in, send, out, exact, unordered."""
        entry = getattr(self, "_" + store).get(key)
        return None if entry is None else DecayedCounter(*entry)

    def n_keys(self, store: str) -> int:
        return len(getattr(self, "_" + store))

    def hy_deg_in(self, subset, t: float) -> float:
        """Decayed number of past events jointly received by every member of ``subset``."""
        key = canonical(subset)
        self._check_order(len(key))
        self._check_time(t)
        return self._read(self._in, key, t)

    def hy_deg(self, sender: int, subset, t: float) -> float:
        """Like :meth:`hy_deg_in` but counting only events sent by ``sender``."""
        key = canonical(subset)
        self._check_order(len(key))
        self._check_time(t)
        return self._read(self._send, (sender, key), t)

    def deg_out(self, actor: int, t: float) -> float:
        self._check_time(t)
        return self._read(self._out, actor, t)

    def exact_count(self, sender: int, receivers, t: float) -> float:
        self._check_time(t)
        return self._read(self._exact, (sender, canonical(receivers)), t)

    def unordered_count(self, sender: int, receivers, t: float) -> float:
        self._check_time(t)
        return self._read(self._unordered, canonical([sender, *receivers]), t)

    # unchecked fast paths used by covariate evaluation; keys must be canonical
    def _in_fast(self, key, t):
        return self._read(self._in, key, t)

    def _send_fast(self, sender, key, t):
        return self._read(self._send, (sender, key), t)

    def _dyad(self, sender, receiver, t):
        return self._read(self._send, (sender, (receiver,)), t)

    def out_neighbors(self, actor: int) -> frozenset:
        return frozenset(self._out_nbrs.get(actor, ()))

    def in_neighbors(self, actor: int) -> frozenset:
        return frozenset(self._in_nbrs.get(actor, ()))


class HistoryState(HistoryView):
    """Mutable history, advanced one event at a time in stream order."""

    def advance(self, event: Hyperevent) -> "HistoryState":
        if event.index != self.position:
            raise OutOfOrderEvent(f"expected event index {self.position}, got {event.index}")
        if event.time < self.last_time:
            raise OutOfOrderEvent(f"event {event.index} at {event.time} precedes {self.last_time}")
        t = event.time
        i = event.sender
        J = event.receivers
        rate = self._rate
        top = min(self.max_order, len(J))
        if len(J) > LARGE_EVENT:
            n_keys = sum(comb(len(J), p) for p in range(1, top + 1))
            warnings.warn(
                f"event {event.index} has {len(J)} receivers; updating {n_keys} subset keys",
                CostWarning,
                stacklevel=2,
            )

        def bump(store, key):
            entry = store.get(key)
            if entry is None:
                store[key] = (1.0, t)
            else:
                v = entry[0] * math.exp(-(t - entry[1]) * rate)
                store[key] = ((v if v >= UNDERFLOW else 0.0) + 1.0, t)

        in_store, send_store = self._in, self._send
        n_subsets = 0
        for p in range(1, top + 1):
            for sub in combinations(J, p):
                bump(in_store, sub)
                bump(send_store, (i, sub))
                n_subsets += 1
        bump(self._out, i)
        bump(self._exact, (i, J))
        ukey = canonical((i, *J))
        bump(self._unordered, ukey)

        self._out_nbrs.setdefault(i, set()).update(J)
        for j in J:
            self._in_nbrs.setdefault(j, set()).add(i)
        self._exact_by_sender.setdefault(i, set()).add(J)
        for a in ukey:
            self._unordered_by_actor.setdefault(a, set()).add(ukey)

        self.last_update_subsets = n_subsets
        self.position += 1
        self.last_time = t
        return self

    def snapshot(self) -> HistoryView:
        """Detached read-only copy; later ``advance`` calls do not affect it."""
        view = HistoryView(self.decay, self.max_order)
        view.position = self.position
        view.last_time = self.last_time
        for name in ("_in", "_send", "_out", "_exact", "_unordered"):
            setattr(view, name, dict(getattr(self, name)))
        for name in ("_out_nbrs", "_in_nbrs", "_exact_by_sender", "_unordered_by_actor"):
            setattr(view, name, {k: frozenset(v) for k, v in getattr(self, name).items()})
        return view

    @classmethod
    def from_stream(cls, stream: EventStream, decay: DecayConfig, max_order=DEFAULT_ORDER, upto=None):
        state = cls(decay, max_order)
        for ev in stream.events[: upto if upto is not None else len(stream)]:
            state.advance(ev)
        return state

    # --- binary dump -----------------------------------------------------

    _STORES = ("_in", "_send", "_out", "_exact", "_unordered")

    @staticmethod
    def _flatten(name, key):
        if name == "_out":
            return (key,)
        if name in ("_send", "_exact"):
            return (key[0], *key[1])
        return key

    @staticmethod
    def _unflatten(name, flat):
        if name == "_out":
            return flat[0]
        if name in ("_send", "_exact"):
            return (flat[0], tuple(flat[1:]))
        return tuple(flat)

    def save(self, path) -> None:
        """Write the state as sorted ``(key, value, ref_time)`` records, little-endian."""
        out = bytearray(STATE_MAGIC)
        out += struct.pack("<IIdqd", STATE_VERSION, self.max_order, self.decay.half_life,
                           self.position, self.last_time)
        for name in self._STORES:
            store = getattr(self, name)
            flat = sorted((self._flatten(name, k), v) for k, v in store.items())
            out += struct.pack("<Q", len(flat))
            for key, (value, ref) in flat:
                out += struct.pack(f"<H{len(key)}q", len(key), *key)
                out += struct.pack("<dd", value, ref)
        Path(path).write_bytes(bytes(out))

    @classmethod
    def load(cls, path) -> "HistoryState":
        data = Path(path).read_bytes()
        if not data.startswith(STATE_MAGIC):
            raise FormatError(f"{path}: not a history state file")
        off = len(STATE_MAGIC)
        version, order, half_life, position, last_time = struct.unpack_from("<IIdqd", data, off)
        if version != STATE_VERSION:
            raise FormatError(f"{path}: unsupported state version {version}")
        off += struct.calcsize("<IIdqd")
        state = cls(DecayConfig(half_life), order)
        state.position = position
        state.last_time = last_time
        for name in cls._STORES:
            (count,) = struct.unpack_from("<Q", data, off)
            off += 8
            store = getattr(state, name)
            for _ in range(count):
                (klen,) = struct.unpack_from("<H", data, off)
                off += 2
                flat = struct.unpack_from(f"<{klen}q", data, off)
                off += 8 * klen
                value, ref = struct.unpack_from("<dd", data, off)
                off += 16
                store[cls._unflatten(name, flat)] = (value, ref)
        for (i, sub) in state._send:
            if len(sub) == 1:
                state._out_nbrs.setdefault(i, set()).add(sub[0])
                state._in_nbrs.setdefault(sub[0], set()).add(i)
        for (i, J) in state._exact:
            state._exact_by_sender.setdefault(i, set()).add(J)
        for ukey in state._unordered:
            for a in ukey:
                state._unordered_by_actor.setdefault(a, set()).add(ukey)
        return state
