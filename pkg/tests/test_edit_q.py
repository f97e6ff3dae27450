import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocdkit.edit_q import EOS, QRow, edit_distance, prefix_distance_table, q_values, q_values_batch
from ocdkit.oracle import oracle_q_exhaustive

seqs = st.lists(st.integers(0, 3), max_size=8)


def test_edit_distance_examples():
    assert edit_distance("SATRAPY", "SUNDAY") == 4
    assert edit_distance("", "SUNDAY") == 6
    assert edit_distance("SUNDAY", "") == 6
    assert edit_distance("kitten", "kitten") == 0


@given(seqs, seqs)
def test_symmetric(a, b):
    assert edit_distance(a, b) == edit_distance(b, a)


@given(seqs, seqs, seqs)
def test_triangle(a, b, c):
    assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)


def test_table_golden_rows():
    t = prefix_distance_table("SATRAPY", "SUNDAY")
    assert t[2].tolist() == [2, 1, 1, 2, 3, 3, 4]
    assert t[-1, -1] == 4
    t = prefix_distance_table("SATURDAY", "SUNDAY")
    assert t[3].tolist() == [3, 2, 2, 2, 3, 4, 4]
    assert prefix_distance_table("", "").tolist() == [[0]]


@given(seqs, seqs)
def test_table_invariants(hyp, ref):
    t = prefix_distance_table(hyp, ref)
    assert t[0].tolist() == list(range(len(ref) + 1))
    assert t[:, 0].tolist() == list(range(len(hyp) + 1))
    assert np.abs(np.diff(t, axis=0)).max(initial=0) <= 1
    assert np.abs(np.diff(t, axis=1)).max(initial=0) <= 1
    i, j = np.indices(t.shape)
    assert (t >= np.abs(i - j)).all()
    assert t[-1, -1] == edit_distance(hyp, ref)


SATURDAY_ROWS = [
    ({"S"}, 0), ({"U"}, 0), ({"U", "N"}, -1), ({"U", "N", "D"}, -2), ({"N"}, -2),
    ({"N", "D"}, -3), ({"A"}, -3), ({"Y"}, -3), ({EOS}, -3),
]


def test_q_values_saturday():
    table = q_values("SATURDAY", "SUNDAY")
    assert [(set(r.optimal), -r.m) for r in table] == SATURDAY_ROWS


def test_q_values_satrapy():
    table = q_values("SATRAPY", "SUNDAY")
    assert table.minima == [0, 0, 1, 2, 3, 3, 4, 4]
    assert [set(r.optimal) for r in table] == [
        {"S"}, {"U"}, {"U", "N"}, {"U", "N", "D"}, {"U", "N", "D", "A"}, {"Y"}, {"Y", EOS}, {EOS},
    ]


def test_q_values_ba_ab_against_exhaustive_oracle():
    # expected values computed by the exhaustive oracle, then frozen
    table = q_values("BA", "AB")
    for i, row in enumerate(table):
        for a in "AB":
            assert row.q(a) == oracle_q_exhaustive("BA"[:i], a, "AB", "AB", 3)
    assert [(set(r.optimal), r.m) for r in table] == [({"A"}, 0), ({"A", "B", EOS}, 1), ({"B"}, 1)]


def test_empty_reference():
    table = q_values([1, 2, 3], [], eos=9)
    assert table.minima == [0, 1, 2, 3]
    assert all(r.optimal == {9} for r in table)


def test_dense_materialization():
    row = QRow(2, frozenset({1, 3}))
    assert row.dense(5).tolist() == [-3, -2, -3, -2, -3]


@settings(max_examples=300)
@given(seqs, seqs)
def test_row_invariants(hyp, ref):
    eos = 4
    table = q_values(hyp, ref, eos)
    assert len(table) == len(hyp) + 1
    assert table[0].m == 0
    for i, row in enumerate(table):
        dense = row.dense(5)
        assert set(dense.tolist()) <= {-row.m, -row.m - 1}
        assert (dense == -row.m).any()
        assert row.optimal <= set(ref) | {eos}
        if i < len(hyp):
            nxt = table[i + 1].m
            assert nxt - row.m in (0, 1)
            assert nxt == -row.q(hyp[i])


@given(seqs, st.data())
def test_correct_prefix_targets_next_token(ref, data):
    k = data.draw(st.integers(0, len(ref)))
    table = q_values(ref[:k], ref, eos=4)
    for i, row in enumerate(table):
        assert row.m == 0
        assert row.optimal == ({ref[i]} if i < len(ref) else {4})


def test_batch_matches_single(rng):
    pairs = [
        (rng.integers(0, 4, rng.integers(0, 7)).tolist(), rng.integers(0, 4, rng.integers(0, 7)).tolist())
        for _ in range(500)
    ]
    expected = [q_values(h, r, 4) for h, r in pairs]
    assert q_values_batch(pairs, 4) == expected
    assert q_values_batch(pairs, 4, workers=4) == expected
    assert q_values_batch([("SATURDAY", "SUNDAY")]) == [q_values("SATURDAY", "SUNDAY")]
    assert q_values_batch([]) == []


def _median_time(n, reps=5):
    rng = np.random.default_rng(n)
    hyp = rng.integers(0, 30, n).tolist()
    ref = rng.integers(0, 30, n).tolist()
    times = []
    for _ in range(reps):
        t = time.perf_counter()
        q_values(hyp, ref, 30)
        times.append(time.perf_counter() - t)
    return float(np.median(times))


def test_quadratic_scaling():
    ratio = _median_time(200) / _median_time(100)
    assert 3.0 <= ratio <= 6.0, ratio


@pytest.mark.parametrize("hyp,ref", [("", ""), ("A", ""), ("", "A")])
def test_degenerate_shapes(hyp, ref):
    table = q_values(hyp, ref)
    assert len(table) == len(hyp) + 1
