"""Prefix edit distances and optimal-completion Q-values.

For a hypothesis ``hyp`` and a reference ``ref``, the optimal Q-value of
extending ``hyp[:i]`` with token ``a`` is the best negative edit distance any
completion can still reach. Every row of that table takes only two values:
``-m`` for the tokens that start an optimal reference suffix and ``-m - 1``
for everything else, where ``m`` is the smallest edit distance between
``hyp[:i]`` and any prefix of ``ref``.

Sequences are any indexable collections of hashable tokens (strings or lists
of ints both work). The end-of-sequence token never appears inside a
sequence; it is passed separately as ``eos``.
"""

from __future__ import annotations

from collections.abc import Hashable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

EOS = "</s>"


@dataclass(frozen=True)
class QRow:
    """Q-values of all one-token extensions of a single hypothesis prefix.

    Attributes:
      m: minimum edit distance between the prefix and any reference prefix.
      optimal: tokens whose Q-value is ``-m``; every other token has ``-m - 1``.
    """

    m: int
    optimal: frozenset

    def q(self, token: Hashable) -> int:
        return -self.m if token in self.optimal else -self.m - 1

    def dense(self, n_tokens: int, dtype=np.float64) -> np.ndarray:
        """Materializes the row over integer token ids ``0 .. n_tokens - 1``."""
        out = np.full(n_tokens, -self.m - 1, dtype=dtype)
        for tok in self.optimal:
            out[tok] = -self.m
        return out


@dataclass(frozen=True)
class QTable:
    """One :class:`QRow` per prefix ``hyp[:0] .. hyp[:len(hyp)]``."""

    rows: tuple[QRow, ...]
    eos: Hashable = EOS

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, i: int) -> QRow:
        return self.rows[i]

    def __iter__(self) -> Iterator[QRow]:
        return iter(self.rows)

    @property
    def minima(self) -> list[int]:
        return [row.m for row in self.rows]

    def dense(self, n_tokens: int, dtype=np.float64) -> np.ndarray:
        return np.stack([row.dense(n_tokens, dtype) for row in self.rows])


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit insert, delete and substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ai in enumerate(a, 1):
        cur = [i]
        for j, bj in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ai != bj)))
        prev = cur
    return prev[-1]


def prefix_distance_table(hyp: Sequence, ref: Sequence) -> np.ndarray:
    """Full ``(len(hyp) + 1, len(ref) + 1)`` table of prefix edit distances.

    ``table[i, j]`` is the edit distance between ``hyp[:i]`` and ``ref[:j]``.
    Kept for inspection and golden tests; :func:`q_values` does not build it.
    """
    table = np.zeros((len(hyp) + 1, len(ref) + 1), dtype=np.int64)
    for i, row in enumerate(distance_rows(hyp, ref)):
        table[i] = row
    return table


def distance_rows(hyp: Sequence, ref: Sequence) -> Iterator[list[int]]:
    """Yields the rows of the prefix distance table one at a time.

    Only a single row buffer is alive; each yielded list is a fresh copy, so
    callers may keep it.
    """
    n = len(ref)
    d = list(range(n + 1))
    yield list(d)
    for i, h in enumerate(hyp, 1):
        diag = d[0]
        d[0] = i
        for j in range(1, n + 1):
            above = d[j]
            best = diag + (h != ref[j - 1])
            if above + 1 < best:
                best = above + 1
            if d[j - 1] + 1 < best:
                best = d[j - 1] + 1
            d[j] = best
            diag = above
        yield list(d)


def row_targets(row: Sequence[int], ref: Sequence, eos: Hashable = EOS) -> QRow:
    """Turns one prefix distance row into its two-valued Q row."""
    m = min(row)
    n = len(ref)
    optimal = {ref[j] for j in range(n) if row[j] == m}
    if row[n] == m:
        optimal.add(eos)
    return QRow(m, frozenset(optimal))


def q_values(hyp: Sequence, ref: Sequence, eos: Hashable = EOS) -> QTable:
    """Optimal Q-values for every prefix of ``hyp`` against ``ref``.

    Runs in ``O(len(hyp) * len(ref))`` time with a single rolling row of
    ``len(ref) + 1`` distances.

    Example:
      >>> table = q_values("SATURDAY", "SUNDAY")
      >>> sorted(table[2].optimal), table[2].m
      (['N', 'U'], 1)
    """
    n = len(ref)
    d = list(range(n + 1))
    rows = [QRow(0, frozenset({ref[0]} if n else {eos}))]
    for i, h in enumerate(hyp, 1):
        diag = d[0]
        d[0] = i
        m = i
        for j in range(1, n + 1):
            above = d[j]
            best = diag + (h != ref[j - 1])
            if above + 1 < best:
                best = above + 1
            if d[j - 1] + 1 < best:
                best = d[j - 1] + 1
            d[j] = best
            diag = above
            if best < m:
                m = best
        optimal = {ref[j] for j in range(n) if d[j] == m}
        if d[n] == m:
            optimal.add(eos)
        rows.append(QRow(m, frozenset(optimal)))
    return QTable(tuple(rows), eos)


def q_values_batch(
    pairs: Sequence[tuple[Sequence, Sequence]],
    eos: Hashable = EOS,
    workers: int | None = None,
) -> list[QTable]:
    """:func:`q_values` over many ``(hyp, ref)`` pairs, in input order."""
    if not workers or workers <= 1 or len(pairs) < 2:
        return [q_values(h, r, eos) for h, r in pairs]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(lambda p: q_values(p[0], p[1], eos), pairs))
