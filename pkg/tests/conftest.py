import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rhem.core import ActorIndex, AttributeTable, EventStream
from rhem.history import DecayConfig, HistoryState

# near-flat decay: w(dt) = 1 within 1e-12 for the small dt used in figure tests
FLAT = DecayConfig(1e12)


def raw_events(stream, upto=None):
    """``(t, sender, frozenset(receivers))`` for the oracle."""
    evs = stream.events[: upto if upto is not None else len(stream)]
    return [(e.time, e.sender, frozenset(e.receivers)) for e in evs]


def random_stream(rng, n_actors=8, n_events=30, max_size=4):
    actors = ActorIndex([f"x{k}" for k in range(n_actors)])
    t = 0.0
    recs = []
    for _ in range(n_events):
        # ties on purpose now and then
        t += 0.0 if rng.random() < 0.15 else float(rng.exponential(1.0))
        s = int(rng.integers(n_actors))
        size = int(rng.integers(1, min(max_size, n_actors - 1) + 1))
        others = [a for a in range(n_actors) if a != s]
        J = rng.choice(others, size=size, replace=False)
        recs.append((t, f"x{s}", [f"x{j}" for j in J]))
    return EventStream.from_records(recs, actors=actors)


def random_attributes(rng, n_actors):
    return AttributeTable(
        ActorIndex([f"x{k}" for k in range(n_actors)]),
        numeric={
            "bin": rng.integers(0, 2, n_actors).astype(float),
            "num": np.round(rng.normal(size=n_actors), 3),
        },
        categorical={"dept": rng.integers(0, 3, n_actors)},
        categories={"dept": ("Legal", "Other", "Trading")},
    )


def figure_history(records, labels="ABCDEFG"):
    actors = ActorIndex(list(labels))
    stream = EventStream.from_records(records, actors=actors)
    return stream, HistoryState.from_stream(stream, FLAT), actors.index


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
