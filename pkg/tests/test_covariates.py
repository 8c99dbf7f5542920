import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import FLAT, figure_history, random_attributes, random_stream, raw_events
import oracle
from rhem import covariates as cv
from rhem.core import ActorIndex, AttributeTable
from rhem.covariates import CovariateSpec, evaluate, evaluate_batch, parse_spec, parse_spec_file
from rhem.errors import InvalidSpec, OrderExceeded, UnknownAttribute
from rhem.history import DecayConfig, HistoryState

ALL_SPECS = [
    parse_spec(s)
    for s in [
        "rec_avg:bin", "rec_avg:num", "send_rec_diff:bin", "send_rec_diff:dept", "send_rec_diff:num",
        "rec_set_diff:bin", "rec_set_diff:dept", "rec_set_diff:num",
        "exact_repetition", "unordered_repetition",
        "rec_sub_rep:1", "rec_sub_rep:2", "rec_sub_rep:3", "rec_sub_rep:4",
        "send_rec_sub_rep:1", "send_rec_sub_rep:2", "send_rec_sub_rep:3",
        "interact_rec:1", "interact_rec:2", "interact_rec:3",
        "reciprocation", "out_in_pop",
        "transitive_closure", "cyclic_closure", "in_balance", "out_balance",
        "rec_sub_rep:2,sqrt", "reciprocation,sqrt",
    ]
]
# the two sqrt variants share names with plain ones; keep them out of named lists
UNIQUE_SPECS = ALL_SPECS[:-2]


@pytest.fixture
def people():
    return AttributeTable(
        ActorIndex(["s", "f", "m", "x"]),
        numeric={"female": np.array([0.0, 1.0, 0.0, 1.0]), "zero": np.zeros(4)},
        categorical={"dept": np.array([0, 0, 2, 1])},
        categories={"dept": ("Legal", "Other", "Trading")},
    )


def test_spec_parsing_round_trip(tmp_path):
    for spec in ALL_SPECS:
        assert parse_spec(spec.to_line()) == spec
    assert parse_spec("rec_sub_rep:3,sqrt") == CovariateSpec("rec_sub_rep", order=3, sqrt=True)
    assert parse_spec("rec_avg:female").name == "rec_avg_female"
    path = tmp_path / "specs.txt"
    path.write_text("# comment\nreciprocation\n\nrec_sub_rep:2,sqrt  # trailing\n")
    assert [s.name for s in parse_spec_file(path)] == ["reciprocation", "rec_sub_rep_2"]


@pytest.mark.parametrize(
    "line", ["bogus", "rec_avg", "rec_sub_rep", "rec_sub_rep:0", "reciprocation:2", "rec_avg:female,sqrt", "exact_repetition,log"]
)
def test_bad_specs(line):
    with pytest.raises(InvalidSpec):
        parse_spec(line)


def test_rec_avg(people):
    assert cv.rec_avg("zero", 0, [1, 2, 3], people) == 0
    assert cv.rec_avg("female", 0, [1], people) == 1
    # values (1, 1, 0)
    assert cv.rec_avg("female", 0, [1, 3, 2], people) == pytest.approx(2 / 3)
    with pytest.raises(UnknownAttribute):
        cv.rec_avg("age", 0, [1], people)
    with pytest.raises(InvalidSpec):
        cv.rec_avg("dept", 0, [1], people)


def test_send_rec_diff(people):
    assert cv.send_rec_diff("zero", 0, [1, 2], people) == 0
    # male sender, receivers female and male
    assert cv.send_rec_diff("female", 0, [1, 2], people) == pytest.approx(1 / 2)
    # Legal sender; Legal, Trading, Other receivers
    assert cv.send_rec_diff("dept", 0, [1, 2, 3], people) == pytest.approx(2 / 3)


def test_rec_set_diff(people):
    assert cv.rec_set_diff("zero", 0, [1, 2, 3], people) == 0
    assert cv.rec_set_diff("female", 0, [1], people) == 0
    # binary values (1, 0, 0): two mismatched pairs of three
    assert cv.rec_set_diff("female", 3, [1, 0, 2], people) == pytest.approx(2 / 3)


def test_repetition_figure_one():
    _, h, ix = figure_history([(1, "A", "BCDE")])
    J = [ix(c) for c in "BCDE"]
    assert cv.exact_repetition(ix("A"), J, 2, h) == pytest.approx(1, abs=1e-9)
    assert cv.exact_repetition(ix("C"), [ix(c) for c in "ABDE"], 2, h) == 0
    assert cv.unordered_repetition(ix("C"), [ix(c) for c in "ABDE"], 2, h) == pytest.approx(1, abs=1e-9)
    assert cv.unordered_repetition(ix("C"), [ix(c) for c in "ABD"], 2, h) == 0
    assert cv.unordered_repetition(ix("A"), J, 2, h) == pytest.approx(1, abs=1e-9)
    stream, _, _ = figure_history([(1, "A", "BCDE")])
    decayed = HistoryState.from_stream(stream, DecayConfig(4.0))
    assert cv.exact_repetition(ix("A"), J, 5, decayed) == pytest.approx(0.5)


def test_subset_repetition_figure_two():
    _, h, ix = figure_history([(1, "A", "BCDE")])
    J = [ix(c) for c in "CDEF"]
    expected = [3 / 4, 3 / 6, 1 / 4, 0]
    for p, want in zip(range(1, 5), expected):
        assert cv.rec_sub_rep(p, ix("A"), J, 2, h) == pytest.approx(want, abs=1e-9)
        assert cv.send_rec_sub_rep(p, ix("A"), J, 2, h) == pytest.approx(want, abs=1e-9)
        assert cv.send_rec_sub_rep(p, ix("G"), J, 2, h) == 0
        # sender G does not change the non-specific variant
        assert cv.rec_sub_rep(p, ix("G"), J, 2, h) == pytest.approx(want, abs=1e-9)
    assert cv.rec_sub_rep(3, ix("A"), [ix("C"), ix("D")], 2, h) == 0
    with pytest.raises(OrderExceeded):
        cv.rec_sub_rep(5, ix("A"), J, 2, h)


def test_empty_history_is_zero():
    h = HistoryState(FLAT)
    for p in (1, 2, 3):
        assert cv.send_rec_sub_rep(p, 0, [1, 2, 3], 0.0, h) == 0


def test_interaction_among_receivers_figure_three():
    _, h, ix = figure_history([(1, "A", "CDE")])
    J = [ix(c) for c in "ABCD"]
    assert cv.interact_rec(1, ix("F"), J, 2, h) == pytest.approx(2 / 12, abs=1e-9)
    assert cv.interact_rec(2, ix("F"), J, 2, h) == pytest.approx(1 / 12, abs=1e-9)
    assert cv.interact_rec(3, ix("F"), J, 2, h) == 0
    assert cv.interact_rec(1, ix("F"), [ix("A")], 2, h) == 0


def test_reciprocation_and_popularity_figure_four():
    _, h, ix = figure_history([(1, "A", "DEF"), (2, "B", "AC")])
    J = [ix(c) for c in "ABC"]
    assert cv.reciprocation(ix("D"), J, 3, h) == pytest.approx(1 / 3, abs=1e-9)
    assert cv.out_in_pop(ix("D"), J, 3, h) == pytest.approx(2 / 3, abs=1e-9)
    assert cv.reciprocation(ix("G"), J, 3, h) == 0
    assert cv.out_in_pop(ix("A"), [ix("E"), ix("F")], 3, h) == 0


def test_popularity_half_life():
    stream, _, ix = figure_history([(0, "B", "A")])
    h = HistoryState.from_stream(stream, DecayConfig(2.0))
    assert cv.out_in_pop(ix("C"), [ix("B")], 2.0, h) == pytest.approx(0.5)


@pytest.mark.parametrize(
    "history, kind, sender, receivers, want",
    [
        ([(1, "A", "BC"), (2, "C", "DE")], "transitive", "A", "DE", 1.0),
        ([(1, "A", "BC"), (2, "C", "DE")], "cyclic", "E", "AF", 0.5),
        ([(1, "C", "AB"), (2, "C", "DE")], "in_balance", "A", "DE", 1.0),
        ([(1, "A", "BC"), (2, "E", "DC")], "out_balance", "A", "DE", 0.5),
    ],
)
def test_triadic_figures(history, kind, sender, receivers, want):
    _, h, ix = figure_history(history)
    val = cv.triadic(kind, ix(sender), [ix(c) for c in receivers], 3, h)
    assert val == pytest.approx(want, abs=1e-9)


def test_evaluate_applies_sqrt():
    _, h, ix = figure_history([(1, "A", "BCDE")])
    vec = evaluate([parse_spec("rec_sub_rep:1,sqrt")], ix("A"), [ix(c) for c in "CDEF"], 2, None, h)
    assert vec[0] == pytest.approx(math.sqrt(3 / 4), abs=1e-9)
    assert evaluate([], ix("A"), [1], 2, None, h).shape == (0,)


def _history_case(seed, n_actors=8, n_events=30):
    rng = np.random.default_rng(seed)
    stream = random_stream(rng, n_actors, n_events)
    attrs = random_attributes(rng, n_actors)
    hl = float(rng.uniform(0.3, 30))
    m = int(rng.integers(0, n_events + 1))
    state = HistoryState.from_stream(stream, DecayConfig(hl), 4, upto=m)
    t = stream[m].time if m < n_events else stream[-1].time + 1.0
    return rng, stream, attrs, hl, m, state, t


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_matches_oracle(seed):
    rng, stream, attrs, hl, m, state, t = _history_case(seed)
    past = raw_events(stream, m)
    for _ in range(4):
        i = int(rng.integers(8))
        J = [int(a) for a in rng.choice([a for a in range(8) if a != i], size=int(rng.integers(1, 6)), replace=False)]
        got = evaluate(ALL_SPECS, i, J, t, attrs, state)
        want = [oracle.covariate(s, past, i, J, t, hl, range(8), attrs) for s in ALL_SPECS]
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), size=st.integers(1, 5))
def test_batch_matches_single(seed, size):
    rng, stream, attrs, hl, m, state, t = _history_case(seed)
    i = int(rng.integers(8))
    others = [a for a in range(8) if a != i]
    cands = np.array([rng.choice(others, size=size, replace=False) for _ in range(12)])
    batch = evaluate_batch(ALL_SPECS, i, cands, t, attrs, state)
    for row, J in zip(batch, cands):
        np.testing.assert_allclose(row, evaluate(ALL_SPECS, i, J, t, attrs, state), rtol=1e-12, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng, stream, attrs, hl, m, state, t = _history_case(seed)
    i = 0
    J = [int(a) for a in rng.choice(np.arange(1, 8), size=4, replace=False)]
    base = evaluate(ALL_SPECS, i, J, t, attrs, state)
    for _ in range(3):
        perm = list(rng.permutation(J))
        np.testing.assert_array_equal(evaluate(ALL_SPECS, i, perm, t, attrs, state), base)


DYADIC = [parse_spec(s) for s in [
    "rec_avg:bin", "send_rec_diff:num", "send_rec_diff:dept", "reciprocation", "out_in_pop",
    "transitive_closure", "cyclic_closure", "in_balance", "out_balance", "rec_sub_rep:1", "send_rec_sub_rep:1",
]]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_dyadic_decomposition(seed):
    rng, stream, attrs, hl, m, state, t = _history_case(seed)
    i = int(rng.integers(8))
    J = [int(a) for a in rng.choice([a for a in range(8) if a != i], size=3, replace=False)]
    whole = evaluate(DYADIC, i, J, t, attrs, state)
    parts = np.mean([evaluate(DYADIC, i, [j], t, attrs, state) for j in J], axis=0)
    np.testing.assert_allclose(whole, parts, rtol=1e-12, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_subset_repetition_nesting_and_range(seed):
    rng, stream, attrs, hl, m, state, t = _history_case(seed)
    i = int(rng.integers(8))
    J = [int(a) for a in rng.choice([a for a in range(8) if a != i], size=5, replace=False)]
    vals = [cv.rec_sub_rep(p, i, J, t, state) for p in range(1, 5)]
    svals = [cv.send_rec_sub_rep(p, i, J, t, state) for p in range(1, 5)]
    for seq in (vals, svals):
        for p in range(1, 4):
            if seq[p] > 0:
                assert all(v > 0 for v in seq[:p])
    vec = evaluate(UNIQUE_SPECS, i, J, t, attrs, state)
    named = dict(zip([s.name for s in UNIQUE_SPECS], vec))
    for name in ("rec_avg_bin", "send_rec_diff_bin", "rec_set_diff_bin", "send_rec_diff_dept", "rec_set_diff_dept"):
        assert 0 <= named[name] <= 1
    for spec, v in zip(UNIQUE_SPECS, vec):
        if spec.is_history:
            assert v >= 0
