from collections import Counter
from math import comb

import numpy as np
import pytest
from scipy import stats

from rhem.covariates import evaluate_batch, parse_spec
from rhem.errors import InfeasibleSize
from rhem.generator import GeneratorConfig, actor_labels, attributes_for, simulate
from rhem.history import DecayConfig, HistoryState
from rhem.sampler import combination_table


def test_actor_labels():
    assert actor_labels(3) == ["a0", "a1", "a2"]
    assert actor_labels(12)[0] == "a00"


def test_zero_coefficients_give_uniform_receivers():
    cfg = GeneratorConfig(6, 6000, [parse_spec("reciprocation")], [0.0], size_dist={2: 1.0}, seed=1)
    stream = simulate(cfg)
    # receiver pairs relative to sender; ten pairs per sender
    counts = Counter(ev.receivers for ev in stream if ev.sender == 0)
    assert len(counts) == comb(5, 2)
    assert stats.chisquare(list(counts.values())).pvalue > 0.001
    senders = Counter(ev.sender for ev in stream)
    assert stats.chisquare([senders[a] for a in range(6)]).pvalue > 0.001


def test_structure_of_output():
    specs = [parse_spec("exact_repetition"), parse_spec("rec_avg:female")]
    cfg = GeneratorConfig(10, 200, specs, [1.0, 0.5], size_dist={1: 0.5, 3: 0.5}, seed=2)
    stream = simulate(cfg)
    assert len(stream) == 200
    times = [ev.time for ev in stream]
    assert all(a <= b for a, b in zip(times, times[1:]))
    for ev in stream:
        assert ev.sender not in ev.receivers and len(ev.receivers) in (1, 3)
    assert attributes_for(cfg).names == ["female"]


def test_simulation_is_deterministic():
    specs = [parse_spec("reciprocation")]
    a = simulate(GeneratorConfig(8, 100, specs, [1.0], seed=5))
    b = simulate(GeneratorConfig(8, 100, specs, [1.0], seed=5))
    c = simulate(GeneratorConfig(8, 100, specs, [1.0], seed=6))
    assert a.events == b.events
    assert a.events != c.events


def test_strong_repetition_dominates():
    specs = [parse_spec("exact_repetition")]
    decay = DecayConfig(1e6)
    repeats = []
    for beta in (0.0, 6.0):
        stream = simulate(GeneratorConfig(10, 400, specs, [beta], decay=decay, seed=3))
        seen = set()
        n = 0
        for ev in stream:
            n += (ev.sender, ev.receivers) in seen
            seen.add((ev.sender, ev.receivers))
        repeats.append(n / len(stream))
    assert repeats[1] > 0.9 > repeats[0]


def test_first_event_follows_attribute_model():
    # with an empty history the receiver pair is drawn from softmax(beta * rec_avg)
    specs = [parse_spec("rec_avg:female")]
    base = GeneratorConfig(6, 1, specs, [1.5], size_dist={2: 1.0}, seed=0)
    attrs = attributes_for(base)
    z = attrs.column("female")[0]
    counts = Counter()
    for r in range(4000):
        ev = simulate(GeneratorConfig(6, 1, specs, [1.5], size_dist={2: 1.0}, seed=r, attributes=attrs)).events[0]
        counts[(ev.sender, ev.receivers)] += 1
    tv = []
    for sender in range(6):
        cands = [c for c in combination_table(6, 2) if sender not in c]
        p = np.array([np.exp(1.5 * z[list(c)].mean()) for c in cands])
        p /= p.sum()
        n = sum(counts[(sender, tuple(c))] for c in cands)
        emp = np.array([counts[(sender, tuple(c))] for c in cands]) / n
        tv.append(0.5 * np.abs(emp - p).sum())
    assert max(tv) < 0.12


def test_exact_draw_probabilities():
    # empirical receiver distribution for a fixed history converges to the model
    specs = [parse_spec("reciprocation"), parse_spec("rec_avg:female")]
    beta = np.array([1.5, 1.0])
    warm = GeneratorConfig(7, 1, specs, beta, size_dist={2: 1.0}, seed=0)
    attrs = attributes_for(warm)
    first = simulate(warm).events[0]
    hist = HistoryState(warm.decay)
    hist.advance(first)
    sender = first.receivers[0]
    universe = np.array([a for a in range(7) if a != sender])
    cands = universe[combination_table(6, 2)]
    X = evaluate_batch(specs, sender, cands, first.time + 0.5, attrs, hist)
    p = np.exp(X @ beta)
    p /= p.sum()
    rng = np.random.default_rng(0)
    from rhem.generator import _choose

    draws = Counter(_choose(rng, X @ beta) for _ in range(40000))
    emp = np.array([draws[j] for j in range(len(cands))]) / 40000
    assert 0.5 * np.abs(emp - p).sum() < 0.02


def test_importance_resampling_path():
    # C(39, 4) > 1e4 forces proposal resampling
    cfg = GeneratorConfig(40, 30, [parse_spec("reciprocation")], [1.0], size_dist={4: 1.0}, seed=1, proposals=300)
    stream = simulate(cfg)
    assert all(len(ev.receivers) == 4 and ev.sender not in ev.receivers for ev in stream)


def test_invalid_configs():
    with pytest.raises(InfeasibleSize):
        GeneratorConfig(4, 10, [], [], size_dist={4: 1.0})
    with pytest.raises(ValueError):
        GeneratorConfig(4, 10, [parse_spec("reciprocation")], [])
    with pytest.raises(ValueError):
        GeneratorConfig(4, 10, [], [], size_dist={1: 0.4})
