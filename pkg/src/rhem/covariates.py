"""Hyperedge covariates x_t(i, J).

Attribute covariates read an :class:`~rhem.core.AttributeTable`; network
covariates read a history view at query time ``t``. Every function accepts
receivers in any order.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import AttributeTable
from .errors import InvalidSpec, OrderExceeded, UnknownAttribute
from .history import HistoryView, canonical

ATTRIBUTE_KINDS = ("rec_avg", "send_rec_diff", "rec_set_diff")
SUBSET_KINDS = ("rec_sub_rep", "send_rec_sub_rep", "interact_rec")
TRIADIC_KINDS = ("transitive_closure", "cyclic_closure", "in_balance", "out_balance")
HISTORY_KINDS = (
    "exact_repetition",
    "unordered_repetition",
    *SUBSET_KINDS,
    "reciprocation",
    "out_in_pop",
    *TRIADIC_KINDS,
)
KINDS = ATTRIBUTE_KINDS + HISTORY_KINDS


@dataclass(frozen=True)
class CovariateSpec:
    kind: str
    attribute: str | None = None
    order: int | None = None
    sqrt: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown covariate kind {self.kind!r}")
        if self.kind in ATTRIBUTE_KINDS:
            if not self.attribute:
                raise InvalidSpec(f"{self.kind} needs an attribute name")
            if self.sqrt:
                raise InvalidSpec(f"square-root transform is only allowed on network covariates ({self.kind})")
        elif self.attribute is not None:
            raise InvalidSpec(f"{self.kind} takes no attribute")
        if self.kind in SUBSET_KINDS:
            if self.order is None or self.order < 1:
                raise InvalidSpec(f"{self.kind} needs a positive order p")
        elif self.order is not None:
            raise InvalidSpec(f"{self.kind} takes no order")

    @property
    def name(self) -> str:
        if self.attribute is not None:
            return f"{self.kind}_{self.attribute}"
        if self.order is not None:
            return f"{self.kind}_{self.order}"
        return self.kind

    @property
    def is_history(self) -> bool:
        return self.kind in HISTORY_KINDS

    def to_line(self) -> str:
        parts = [self.kind]
        if self.attribute is not None:
            parts.append(self.attribute)
        if self.order is not None:
            parts.append(str(self.order))
        return ":".join(parts) + (",sqrt" if self.sqrt else "")


def parse_spec(line: str) -> CovariateSpec:
    """Parse ``kind[:attribute][:p][,sqrt]``."""
    main, *flags = [s.strip() for s in line.strip().split(",")]
    sqrt = False
    for flag in flags:
        if flag == "sqrt":
            sqrt = True
        elif flag not in ("", "id", "identity"):
            raise InvalidSpec(f"unknown transform {flag!r} in {line!r}")
    kind, *rest = main.split(":")
    attribute = order = None
    if kind in ATTRIBUTE_KINDS:
        if len(rest) != 1:
            raise InvalidSpec(f"expected {kind}:<attribute>, got {line!r}")
        attribute = rest[0]
    elif kind in SUBSET_KINDS:
        if len(rest) != 1:
            raise InvalidSpec(f"expected {kind}:<p>, got {line!r}")
        try:
            order = int(rest[0])
        except ValueError:
            raise InvalidSpec(f"order must be an integer in {line!r}") from None
    elif rest:
        raise InvalidSpec(f"{kind} takes no arguments, got {line!r}")
    return CovariateSpec(kind, attribute, order, sqrt)


def parse_spec_file(path) -> list[CovariateSpec]:
    specs = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            specs.append(parse_spec(line))
    return specs


def validate_specs(specs: Sequence[CovariateSpec], attrs: AttributeTable | None, max_order: int) -> None:
    seen = set()
    for spec in specs:
        if spec.name in seen:
            raise InvalidSpec(f"covariate {spec.name} listed twice")
        seen.add(spec.name)
        if spec.kind in ATTRIBUTE_KINDS:
            if attrs is None:
                raise UnknownAttribute(f"{spec.name} needs an attribute table")
            kind = attrs.kind(spec.attribute)
            if spec.kind == "rec_avg" and kind != "num":
                raise InvalidSpec(f"rec_avg needs a numeric attribute, {spec.attribute!r} is categorical")
        if spec.order is not None and spec.order > max_order:
            raise OrderExceeded(f"{spec.name}: order {spec.order} exceeds tracked order {max_order}")


# --- attribute covariates ---------------------------------------------------

def rec_avg(z: str, i: int, J, attrs: AttributeTable) -> float:
    col, is_cat = attrs.column(z)
    if is_cat:
        raise InvalidSpec(f"rec_avg needs a numeric attribute, {z!r} is categorical")
    J = canonical(J)
    return float(col[list(J)].mean())


def send_rec_diff(z: str, i: int, J, attrs: AttributeTable) -> float:
    col, is_cat = attrs.column(z)
    vals = col[list(canonical(J))]
    if is_cat:
        return float((vals != col[i]).mean())
    return float(np.abs(vals - col[i]).mean())


def rec_set_diff(z: str, i: int, J, attrs: AttributeTable) -> float:
    """Mean pairwise difference within ``J``; 0 for a single receiver."""
    col, is_cat = attrs.column(z)
    J = canonical(J)
    if len(J) < 2:
        return 0.0
    total = 0.0
    for a, b in combinations(J, 2):
        total += float(col[a] != col[b]) if is_cat else abs(float(col[a]) - float(col[b]))
    return total / comb(len(J), 2)


# --- network covariates -----------------------------------------------------

def exact_repetition(i: int, J, t: float, hist: HistoryView) -> float:
    return hist.exact_count(i, J, t)


def unordered_repetition(i: int, J, t: float, hist: HistoryView) -> float:
    return hist.unordered_count(i, J, t)


def _subset_mean(read, J, p):
    if len(J) < p:
        return 0.0
    return sum(read(sub) for sub in combinations(J, p)) / comb(len(J), p)


def rec_sub_rep(p: int, i: int, J, t: float, hist: HistoryView) -> float:
    hist._check_order(p)
    hist._check_time(t)
    return _subset_mean(lambda sub: hist._in_fast(sub, t), canonical(J), p)


def send_rec_sub_rep(p: int, i: int, J, t: float, hist: HistoryView) -> float:
    hist._check_order(p)
    hist._check_time(t)
    return _subset_mean(lambda sub: hist._send_fast(i, sub, t), canonical(J), p)


def _interact_rec(p, J, t, hist):
    n = len(J)
    if n - 1 < p:
        return 0.0
    total = 0.0
    for j in J:
        others = tuple(a for a in J if a != j)
        for sub in combinations(others, p):
            total += hist._send_fast(j, sub, t)
    return total / (n * comb(n - 1, p))


def interact_rec(p: int, i: int, J, t: float, hist: HistoryView) -> float:
    hist._check_order(p)
    hist._check_time(t)
    return _interact_rec(p, canonical(J), t, hist)


def reciprocation(i: int, J, t: float, hist: HistoryView) -> float:
    hist._check_time(t)
    J = canonical(J)
    return sum(hist._dyad(j, i, t) for j in J) / len(J)


def out_in_pop(i: int, J, t: float, hist: HistoryView) -> float:
    hist._check_time(t)
    J = canonical(J)
    return sum(hist._read(hist._out, j, t) for j in J) / len(J)


def _triad_term(kind, i, j, t, hist):
    """Sum over third actors ``a`` (a != i, j) for one receiver ``j``."""
    out_n, in_n = hist._out_nbrs, hist._in_nbrs
    dy = hist._dyad
    empty = ()
    total = 0.0
    if kind == "transitive_closure":      # i -> a -> j
        for a in set(out_n.get(i, empty)).intersection(in_n.get(j, empty)):
            if a != i and a != j:
                total += min(dy(i, a, t), dy(a, j, t))
    elif kind == "cyclic_closure":        # j -> a -> i
        for a in set(in_n.get(i, empty)).intersection(out_n.get(j, empty)):
            if a != i and a != j:
                total += min(dy(a, i, t), dy(j, a, t))
    elif kind == "in_balance":            # a -> i, a -> j
        for a in set(in_n.get(i, empty)).intersection(in_n.get(j, empty)):
            if a != i and a != j:
                total += min(dy(a, i, t), dy(a, j, t))
    elif kind == "out_balance":           # i -> a, j -> a
        for a in set(out_n.get(i, empty)).intersection(out_n.get(j, empty)):
            if a != i and a != j:
                total += min(dy(i, a, t), dy(j, a, t))
    else:
        raise InvalidSpec(f"unknown triadic kind {kind!r}")
    return total


def triadic(kind: str, i: int, J, t: float, hist: HistoryView) -> float:
    """Transitive/cyclic closure or incoming/outgoing balance.

    ``kind`` is one of ``transitive_closure``, ``cyclic_closure``,
    ``in_balance``, ``out_balance`` (the short forms ``transitive``,
    ``cyclic`` are accepted too). Third actors range over every actor other
    than ``i`` and the receiver in question, including other members of ``J``.
    """
    kind = {"transitive": "transitive_closure", "cyclic": "cyclic_closure"}.get(kind, kind)
    hist._check_time(t)
    J = canonical(J)
    return sum(_triad_term(kind, i, j, t, hist) for j in J) / len(J)


# --- assembly ---------------------------------------------------------------

def evaluate_one(spec: CovariateSpec, i: int, J, t: float, attrs: AttributeTable | None, hist: HistoryView) -> float:
    kind = spec.kind
    if kind == "rec_avg":
        val = rec_avg(spec.attribute, i, J, attrs)
    elif kind == "send_rec_diff":
        val = send_rec_diff(spec.attribute, i, J, attrs)
    elif kind == "rec_set_diff":
        val = rec_set_diff(spec.attribute, i, J, attrs)
    elif kind == "exact_repetition":
        val = exact_repetition(i, J, t, hist)
    elif kind == "unordered_repetition":
        val = unordered_repetition(i, J, t, hist)
    elif kind == "rec_sub_rep":
        val = rec_sub_rep(spec.order, i, J, t, hist)
    elif kind == "send_rec_sub_rep":
        val = send_rec_sub_rep(spec.order, i, J, t, hist)
    elif kind == "interact_rec":
        val = interact_rec(spec.order, i, J, t, hist)
    elif kind == "reciprocation":
        val = reciprocation(i, J, t, hist)
    elif kind == "out_in_pop":
        val = out_in_pop(i, J, t, hist)
    else:
        val = triadic(kind, i, J, t, hist)
    return float(np.sqrt(val)) if spec.sqrt else val


def evaluate(specs: Sequence[CovariateSpec], i: int, J, t: float, attrs: AttributeTable | None, hist: HistoryView) -> np.ndarray:
    """Covariate vector of hyperedge ``(i, J)`` at time ``t``, in spec order."""
    return np.array([evaluate_one(s, i, J, t, attrs, hist) for s in specs], dtype=float)


def _dyadic_vector(kind, order, i, actors, t, hist, n):
    """Per-receiver values v[j] such that the covariate is mean(v[J])."""
    v = np.zeros(n)
    if kind == "reciprocation":
        for j in hist._in_nbrs.get(i, ()):
            if j < n:
                v[j] = hist._dyad(j, i, t)
    elif kind == "out_in_pop":
        for j in actors:
            v[j] = hist._read(hist._out, j, t)
    elif kind == "rec_sub_rep":
        for j in actors:
            v[j] = hist._in_fast((j,), t)
    elif kind == "send_rec_sub_rep":
        for j in hist._out_nbrs.get(i, ()):
            if j < n:
                v[j] = hist._dyad(i, j, t)
    else:
        for j in actors:
            v[j] = _triad_term(kind, i, j, t, hist)
    return v


def evaluate_batch(
    specs: Sequence[CovariateSpec],
    i: int,
    candidates,
    t: float,
    attrs: AttributeTable | None,
    hist: HistoryView,
) -> np.ndarray:
    """Covariate matrix for many receiver sets of one sender and equal size.

    ``candidates`` is an ``(n_sets, size)`` integer array. Row ``r`` of the
    result equals ``evaluate(specs, i, candidates[r], t, attrs, hist)``.
    """
    cands = np.sort(np.asarray(candidates, dtype=np.int64), axis=1)
    n_sets, size = cands.shape
    out = np.empty((n_sets, len(specs)))
    if n_sets == 0 or not specs:
        return out
    hist._check_time(t)
    n = int(max(cands.max(), i)) + 1
    actors = np.unique(cands).tolist()
    rows = None

    for c, spec in enumerate(specs):
        kind = spec.kind
        if kind in ATTRIBUTE_KINDS:
            col, is_cat = attrs.column(spec.attribute)
            vals = col[cands]
            if kind == "rec_avg":
                if is_cat:
                    raise InvalidSpec(f"rec_avg needs a numeric attribute, {spec.attribute!r} is categorical")
                out[:, c] = vals.mean(axis=1)
            elif kind == "send_rec_diff":
                diff = (vals != col[i]) if is_cat else np.abs(vals - col[i])
                out[:, c] = diff.mean(axis=1)
            else:
                acc = np.zeros(n_sets)
                for a, b in combinations(range(size), 2):
                    acc += (vals[:, a] != vals[:, b]) if is_cat else np.abs(vals[:, a] - vals[:, b])
                out[:, c] = acc / comb(size, 2) if size >= 2 else 0.0
            continue

        if spec.order is not None:
            hist._check_order(spec.order)
        dyadic = kind in ("reciprocation", "out_in_pop") or kind in TRIADIC_KINDS or (
            kind in ("rec_sub_rep", "send_rec_sub_rep") and spec.order == 1
        )
        if dyadic:
            v = _dyadic_vector(kind, spec.order, i, actors, t, hist, n)
            out[:, c] = v[cands].mean(axis=1)
        else:
            if rows is None:
                rows = [tuple(r) for r in cands.tolist()]
            if kind == "exact_repetition":
                out[:, c] = [hist._read(hist._exact, (i, r), t) for r in rows]
            elif kind == "unordered_repetition":
                out[:, c] = [hist._read(hist._unordered, canonical((i, *r)), t) for r in rows]
            elif kind == "rec_sub_rep":
                out[:, c] = [_subset_mean(lambda s: hist._in_fast(s, t), r, spec.order) for r in rows]
            elif kind == "send_rec_sub_rep":
                out[:, c] = [_subset_mean(lambda s: hist._send_fast(i, s, t), r, spec.order) for r in rows]
            else:
                out[:, c] = [_interact_rec(spec.order, r, t, hist) for r in rows]
        if spec.sqrt:
            out[:, c] = np.sqrt(out[:, c])
    return out
