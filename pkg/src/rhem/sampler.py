"""Case-control sampling of non-event receiver sets."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import comb
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .core import AttributeTable, EventStream, Hyperevent, RiskPolicy
from .covariates import CovariateSpec, evaluate_batch, validate_specs
from .errors import FormatError, InsufficientControls, UnknownActor
from .history import DEFAULT_ORDER, DecayConfig, HistoryState
from .problem import EstimationProblem

SAMPLE_HEADER = ("STRATUM", "IS_CASE", "SENDER", "RECEIVERS")
# below this many candidate sets we enumerate instead of rejection sampling
ENUMERATION_LIMIT = 5000


@dataclass(frozen=True)
class SamplerConfig:
    k: int = 100
    seed: int = 0
    policy: RiskPolicy = RiskPolicy()

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")


@dataclass
class SampledStratum:
    index: int
    time: float
    sender: int
    case: tuple[int, ...]
    controls: list[tuple[int, ...]]
    covariates: np.ndarray | None = field(default=None, repr=False)

    @property
    def receiver_sets(self) -> list[tuple[int, ...]]:
        """Case first, then controls in draw order."""
        return [self.case, *self.controls]


@lru_cache(maxsize=256)
def combination_table(n: int, size: int) -> np.ndarray:
    """All ``size``-subsets of ``range(n)`` in lexicographic order, one per row."""
    if size > n:
        return np.empty((0, size), dtype=np.int64)
    table = np.fromiter(
        (a for c in combinations(range(n), size) for a in c), dtype=np.int64, count=comb(n, size) * size
    ).reshape(-1, size)
    table.setflags(write=False)
    return table


def event_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for one event, derived from ``(seed, index)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample_stratum(event: Hyperevent, cfg: SamplerConfig, rng: np.random.Generator, n_actors: int) -> SampledStratum:
    """Draw ``cfg.k`` distinct controls uniformly from the same-size non-case sets."""
    universe = cfg.policy.universe(event.sender, n_actors)
    L = event.size
    case = event.receivers
    pos = np.searchsorted(universe, case)
    if np.any(pos >= len(universe)) or np.any(universe[np.minimum(pos, len(universe) - 1)] != case):
        raise UnknownActor(f"event {event.index}: case receivers outside the eligible universe")
    total = comb(len(universe), L)
    available = total - 1
    if available < cfg.k:
        raise InsufficientControls(
            f"event {event.index}: only {available} control sets of size {L} exist, k={cfg.k}",
            available=available,
        )

    if total <= ENUMERATION_LIMIT:
        table = combination_table(len(universe), L)
        # position of the case in lexicographic order, found by matching rows
        case_row = int(np.flatnonzero((table == pos).all(axis=1))[0])
        picks = rng.choice(available, size=cfg.k, replace=False)
        picks = picks + (picks >= case_row)
        controls = [tuple(universe[table[r]].tolist()) for r in picks]
    else:
        seen = {case}
        controls = []
        n = len(universe)
        while len(controls) < cfg.k:
            draw = tuple(sorted(universe[rng.choice(n, size=L, replace=False)].tolist()))
            if draw not in seen:
                seen.add(draw)
                controls.append(draw)
    return SampledStratum(event.index, event.time, event.sender, case, controls)


def iter_strata(
    stream: EventStream,
    cfg: SamplerConfig,
    specs: Sequence[CovariateSpec] = (),
    attrs: AttributeTable | None = None,
    decay: DecayConfig = DecayConfig(),
    max_order: int = DEFAULT_ORDER,
) -> Iterator[SampledStratum]:
    """Yield one stratum per event with covariates computed on the history before it."""
    validate_specs(specs, attrs, max_order)
    state = HistoryState(decay, max_order)
    n = stream.n_actors
    for ev in stream:
        stratum = sample_stratum(ev, cfg, event_rng(cfg.seed, ev.index), n)
        rows = np.array(stratum.receiver_sets, dtype=np.int64)
        stratum.covariates = evaluate_batch(specs, ev.sender, rows, ev.time, attrs, state)
        state.advance(ev)
        yield stratum


def sample_stream(stream, cfg, specs=(), attrs=None, decay=DecayConfig(), max_order=DEFAULT_ORDER) -> list[SampledStratum]:
    return list(iter_strata(stream, cfg, specs, attrs, decay, max_order))


def strata_problem(strata: Sequence[SampledStratum], names: Sequence[str]) -> EstimationProblem:
    return EstimationProblem.from_blocks([s.covariates for s in strata], names)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_sample_csv(path, strata, stream: EventStream, names, meta: dict | None = None) -> None:
    """Write strata as ``STRATUM,IS_CASE,SENDER,RECEIVERS,<covariates...>``.

    ``meta`` is written as a leading ``# key=value ...`` comment line.
    """
    label = stream.actors.label
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*SAMPLE_HEADER, *names])
        for s in strata:
            for r, J in enumerate(s.receiver_sets):
                w.writerow(
                    [s.index, int(r == 0), label(s.sender), ";".join(label(j) for j in J),
                     *(_fmt(v) for v in s.covariates[r])]
                )


def read_meta(path) -> dict:
    with Path(path).open(encoding="utf-8") as fh:
        first = fh.readline()
    if not first.startswith("#"):
        return {}
    return dict(item.split("=", 1) for item in first[1:].split() if "=" in item)


def read_sample_csv(path) -> tuple[EstimationProblem, dict]:
    """Load a sampled-covariate CSV into an :class:`EstimationProblem`.

    Rows of one stratum must be contiguous with exactly one ``IS_CASE=1`` row.
    """
    meta = read_meta(path)
    with Path(path).open(newline="", encoding="utf-8") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        reader = csv.reader(lines)
        header = next(reader, None)
        if header is None or tuple(header[:4]) != SAMPLE_HEADER:
            raise FormatError(f"{path}: header must start with {','.join(SAMPLE_HEADER)}")
        names = header[4:]
        values, sizes, cases = [], [], []
        current = None
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields")
            stratum = row[0]
            if stratum != current:
                if stratum in seen:
                    raise FormatError(f"{path}:{lineno}: stratum {stratum} is not contiguous")
                seen.add(stratum)
                current = stratum
                sizes.append(0)
                cases.append(None)
            if row[1] not in ("0", "1"):
                raise FormatError(f"{path}:{lineno}: IS_CASE must be 0 or 1")
            if row[1] == "1":
                if cases[-1] is not None:
                    raise FormatError(f"{path}:{lineno}: stratum {stratum} has two cases")
                cases[-1] = sizes[-1]
            sizes[-1] += 1
            try:
                values.append([float(v) for v in row[4:]])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric covariate value") from None
    if not sizes:
        raise FormatError(f"{path}: no rows")
    if any(c is None for c in cases):
        raise FormatError(f"{path}: a stratum has no case row")
    X = np.array(values, dtype=float).reshape(len(values), len(names))
    return EstimationProblem(X, sizes, cases, names), meta
