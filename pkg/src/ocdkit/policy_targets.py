"""Training targets derived from Q-value rows."""

from __future__ import annotations

from collections.abc import Hashable, Sequence
from dataclasses import dataclass

import numpy as np

from ocdkit.edit_q import EOS, QRow, QTable

STRATEGIES = ("shortest", "same_words")


@dataclass
class PolicyTargets:
    """Per-step target distributions over ``n_out`` token ids.

    ``probs[t]`` sums to one. With ``tau == 0`` each row is uniform over the
    optimal set of that step.
    """

    probs: np.ndarray
    tau: float = 0.0

    def __len__(self) -> int:
        return len(self.probs)


def soft_policy(q_row, tau: float, vocab_size: int | None = None) -> np.ndarray:
    """Softmax of Q-values at temperature ``tau``.

    ``q_row`` is either a :class:`QRow` (materialized over ``vocab_size``
    integer ids) or an already dense vector of Q-values.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    q = q_row.dense(vocab_size) if isinstance(q_row, QRow) else np.asarray(q_row, dtype=np.float64)
    z = (q - q.max()) / tau
    e = np.exp(z)
    return e / e.sum()


def hard_targets(q_row: QRow) -> frozenset:
    return q_row.optimal


def hard_distribution(q_row: QRow, vocab_size: int) -> np.ndarray:
    out = np.zeros(vocab_size)
    for tok in q_row.optimal:
        out[tok] = 1.0
    return out / out.sum()


def policy_targets(table: QTable, vocab_size: int, tau: float = 0.0, steps: int | None = None) -> PolicyTargets:
    """Stacks the first ``steps`` rows of ``table`` into target distributions."""
    rows = table.rows[: steps if steps is not None else len(table)]
    if tau == 0:
        probs = np.stack([hard_distribution(r, vocab_size) for r in rows])
    else:
        probs = np.stack([soft_policy(r, tau, vocab_size) for r in rows])
    return PolicyTargets(probs, tau)


def _word_count(seq: Sequence, space: Hashable) -> int:
    if len(seq) == 0:
        return 0
    return sum(1 for t in seq if t == space) + 1


def oct_select(
    q_row: QRow,
    distance_row: Sequence[int],
    ref: Sequence,
    hyp_prefix: Sequence,
    strategy: str,
    space: Hashable = " ",
    eos: Hashable = EOS,
) -> Hashable:
    """Picks a single optimal next token.

    Candidates are the reference positions ``j`` whose prefix distance equals
    the row minimum; position ``j`` proposes ``ref[j]`` (or eos at
    ``j == len(ref)``) and the completion ``hyp_prefix + ref[j:]``.

    ``shortest`` keeps the shortest completion, i.e. the largest ``j``.
    ``same_words`` keeps the completion whose word count is closest to the
    reference's, breaking ties toward the larger ``j``. Positions are unique,
    so no tie survives to the token id.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    m = min(distance_row)
    n = len(ref)
    candidates = [j for j in range(n + 1) if distance_row[j] == m]

    def token(j):
        return eos if j == n else ref[j]

    if strategy == "shortest":
        key = lambda j: -j
    else:
        target_words = _word_count(ref, space)
        prefix = list(hyp_prefix)

        def key(j):
            words = _word_count(prefix + list(ref[j:]), space)
            return (abs(words - target_words), -j)

    chosen = token(min(candidates, key=key))
    assert chosen in q_row.optimal
    return chosen

