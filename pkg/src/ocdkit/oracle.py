"""Brute-force Q-values used to check the dynamic-programming kernel.

Two independent routes:

* :func:`oracle_q_suffix` tries every suffix of the reference as the
  completion (the only completions that can be optimal).
* :func:`oracle_q_exhaustive` tries every sequence over the vocabulary up to
  a length bound, so it does not rely on that restriction at all.

Both compute edit distances with their own plain full-table recurrence so a
bug in :mod:`ocdkit.edit_q` cannot leak into the check.
"""

from __future__ import annotations

import json
from collections.abc import Callable, Hashable, Sequence
from dataclasses import asdict, dataclass

import numpy as np

from ocdkit.edit_q import EOS, QTable, q_values

ENUMERATION_LIMIT = 10**7


class EnumerationTooLarge(ValueError):
    pass


def _levenshtein(a: Sequence, b: Sequence) -> int:
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        table[i][0] = i
    for j in range(len(b) + 1):
        table[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            table[i][j] = min(
                table[i - 1][j] + 1,
                table[i][j - 1] + 1,
                table[i - 1][j - 1] + (a[i - 1] != b[j - 1]),
            )
    return table[-1][-1]


def oracle_q_suffix(hyp_prefix: Sequence, a: Hashable, ref: Sequence, eos: Hashable = EOS) -> int:
    """Q-value of appending ``a`` when completions are restricted to reference suffixes."""
    prefix = list(hyp_prefix)
    ref = list(ref)
    if a == eos:
        return -_levenshtein(prefix, ref)
    return -min(_levenshtein(prefix + [a] + ref[k:], ref) for k in range(len(ref) + 1))


def oracle_q_exhaustive(
    hyp_prefix: Sequence,
    a: Hashable,
    ref: Sequence,
    vocab: Sequence,
    len_bound: int | None = None,
    eos: Hashable = EOS,
) -> int:
    """Q-value of appending ``a`` maximized over every completion up to ``len_bound``.

    ``len_bound`` defaults to ``len(ref) + 1``.

    Raises:
      EnumerationTooLarge: if more than ``ENUMERATION_LIMIT`` completions
        would have to be enumerated.
    """
    prefix = list(hyp_prefix)
    ref = list(ref)
    if a == eos:
        return -_levenshtein(prefix, ref)
    if len_bound is None:
        len_bound = len(ref) + 1
    vocab = list(vocab)
    total = sum(len(vocab) ** k for k in range(len_bound + 1))
    if total > ENUMERATION_LIMIT:
        raise EnumerationTooLarge(f"{total} completions exceeds limit {ENUMERATION_LIMIT}")
    return -_best_completion(tuple(prefix + [a]), tuple(ref), tuple(vocab), len_bound)


def _best_completion(head: tuple, ref: tuple, vocab: tuple, depth: int) -> int:
    """Minimum edit distance to ``ref`` over ``head + tail`` for every tail of length <= depth.

    Equivalent to enumerating all tails; completions that reach the same
    distance row with the same remaining budget are merged since their
    futures are identical.
    """
    start = list(range(len(ref) + 1))
    for h in head:
        start = _extend(start, h, ref)

    memo: dict[tuple[tuple[int, ...], int], int] = {}

    def search(row: tuple[int, ...], budget: int) -> int:
        key = (row, budget)
        if key in memo:
            return memo[key]
        best = row[-1]
        if budget > 0:
            for v in vocab:
                best = min(best, search(tuple(_extend(row, v, ref)), budget - 1))
        memo[key] = best
        return best

    return search(tuple(start), depth)


def _extend(row, token, ref: tuple) -> list[int]:
    out = [row[0] + 1]
    for j in range(1, len(ref) + 1):
        out.append(min(row[j] + 1, out[j - 1] + 1, row[j - 1] + (token != ref[j - 1])))
    return out


@dataclass
class OracleReport:
    trials: int
    mismatches: int = 0
    counterexample: dict | None = None
    checked_rows: int = 0

    @property
    def ok(self) -> bool:
        return self.mismatches == 0

    def to_text(self) -> str:
        if self.ok:
            return f"oracle-check: {self.trials} trials, {self.checked_rows} rows, 0 mismatches"
        return (
            f"oracle-check: {self.mismatches} mismatching trial(s) out of {self.trials}\n"
            f"first counterexample: {json.dumps(self.counterexample)}"
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self) | {"ok": self.ok}, indent=2)


def _compare_row(prefix, ref, row, vocab, eos):
    """Returns a description of the first disagreement in one row, or None."""
    for a in list(vocab) + [eos]:
        suffix_q = oracle_q_suffix(prefix, a, ref, eos)
        exhaustive_q = oracle_q_exhaustive(prefix, a, ref, vocab, eos=eos)
        if suffix_q != exhaustive_q:
            return {"token": a, "suffix": suffix_q, "exhaustive": exhaustive_q}
        if a == eos:
            # Ending is final, so the true value of eos may sit below -m - 1;
            # only its membership in the optimal set is comparable.
            if (suffix_q == -row.m) != (eos in row.optimal) or suffix_q > -row.m:
                return {"token": "eos", "kernel_m": row.m, "oracle": suffix_q}
        elif row.q(a) != suffix_q:
            return {"token": a, "kernel": row.q(a), "oracle": suffix_q}
    return None


def oracle_check(
    trials: int,
    vocab_size: int,
    max_len: int,
    seed: int,
    kernel: Callable[[Sequence, Sequence, Hashable], QTable] = q_values,
) -> OracleReport:
    """Compares ``kernel`` against both oracles on random integer sequences.

    Lengths are drawn uniformly from ``0 .. max_len``. Failures are reported,
    never raised. ``kernel`` is injectable so the harness itself can be
    fault-tested.
    """
    rng = np.random.default_rng(seed)
    vocab = list(range(vocab_size))
    eos = vocab_size
    report = OracleReport(trials=trials)
    for trial in range(trials):
        hyp = rng.integers(0, vocab_size, size=rng.integers(0, max_len + 1)).tolist()
        ref = rng.integers(0, vocab_size, size=rng.integers(0, max_len + 1)).tolist()
        table = kernel(hyp, ref, eos)
        problem = None
        if len(table) != len(hyp) + 1:
            problem = {"rows": len(table), "expected": len(hyp) + 1}
        else:
            for i, row in enumerate(table):
                problem = _compare_row(hyp[:i], ref, row, vocab, eos)
                report.checked_rows += 1
                if problem is not None:
                    problem["prefix_len"] = i
                    break
        if problem is not None:
            report.mismatches += 1
            if report.counterexample is None:
                report.counterexample = {"trial": trial, "hyp": hyp, "ref": ref, **problem}
    return report
