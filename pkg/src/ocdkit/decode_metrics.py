"""Greedy and beam-search decoding, CER/WER, and corpus evaluation."""

from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ocdkit.edit_q import edit_distance
from ocdkit.toy_model import Seq2Seq

CSV_FIELDS = ("step", "split", "loss", "cer", "wer", "prefix_mismatch", "p_sample", "beam")


@dataclass
class BeamHypothesis:
    tokens: list[int]
    logprob: float
    finished: bool


@dataclass
class EvalMetrics:
    cer: float
    wer: float
    n_examples: int
    mean_logprob: float
    beam: int = 1
    empty_refs: int = 0


def default_max_len(x: Sequence) -> int:
    return 2 * len(x) + 10


def greedy_decode_batch(model: Seq2Seq, xs, max_len) -> list[BeamHypothesis]:
    """Argmax decoding for a batch; ``max_len`` is an int or one cap per input."""
    cfg = model.config
    B = len(xs)
    caps = np.broadcast_to(np.asarray(max_len), (B,))
    if (caps < 1).any():
        raise ValueError("max_len must be >= 1")
    enc = model.encode_batch(xs)
    h = model.initial_state(enc)
    prev = np.full(B, cfg.bos_id, dtype=np.int64)
    tokens = [[] for _ in range(B)]
    score = np.zeros(B)
    finished = np.zeros(B, dtype=bool)
    done = np.zeros(B, dtype=bool)
    for _ in range(int(caps.max())):
        active = np.flatnonzero(~done)
        if not len(active):
            break
        logp, h_new = model.decode_step(h[active], prev[active], enc.take(active))
        h[active] = h_new
        best = logp.argmax(axis=1)
        score[active] += logp[np.arange(len(active)), best]
        for k, b in enumerate(active):
            if best[k] == cfg.eos_id:
                finished[b] = done[b] = True
            else:
                tokens[b].append(int(best[k]))
                done[b] = len(tokens[b]) >= caps[b]
        prev[active] = best
    return [BeamHypothesis(tokens[b], float(score[b]), bool(finished[b])) for b in range(B)]


def greedy_decode(model: Seq2Seq, x, max_len: int) -> BeamHypothesis:
    return greedy_decode_batch(model, [x], max_len)[0]


def beam_search(model: Seq2Seq, x, beam: int, max_len: int) -> BeamHypothesis:
    """Width-limited search over content tokens and eos, scored by summed log-probability.

    Each step ranks every one-token extension of the frontier, keeps the best
    ``beam`` (ties broken by lexicographic token order), retires those ending
    in eos to a finished pool and continues with the rest. Stops when the
    frontier is empty, the cap is reached, or no frontier entry can still
    overtake the best finished hypothesis. Returns the best of the pool and
    the final frontier, so width 1 is exactly greedy decoding.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    cfg = model.config
    enc = model.encode_batch([x])
    frontier = [((), 0.0)]
    states = model.initial_state(enc)
    pool: list[tuple[tuple, float]] = []
    for _ in range(max_len):
        prev = np.array([h[-1] if h else cfg.bos_id for h, _ in frontier], dtype=np.int64)
        logp, states = model.decode_step(states, prev, enc.take(np.zeros(len(frontier), dtype=np.int64)))
        totals = np.array([s for _, s in frontier])[:, None] + logp.astype(np.float64)
        cands = [(totals[i, a], frontier[i][0] + (a,), i) for i in range(len(frontier)) for a in range(cfg.n_out)]
        cands.sort(key=lambda c: (-c[0], c[1]))
        keep, rows = [], []
        for score, toks, i in cands[:beam]:
            if toks[-1] == cfg.eos_id:
                pool.append((toks[:-1], score))
            else:
                keep.append((toks, score))
                rows.append(i)
        if not keep:
            frontier = []
            break
        frontier, states = keep, states[rows]
        if pool and max(s for _, s in pool) >= frontier[0][1]:
            break
    finished = [(s, toks, True) for toks, s in pool]
    unfinished = [(s, toks, False) for toks, s in frontier]
    score, toks, done = min(finished + unfinished, key=lambda c: (-c[0], c[1], not c[2]))
    return BeamHypothesis(list(toks), float(score), done)


def cer(hyp: Sequence, ref: Sequence) -> float:
    """Edit distance over reference length; an empty reference counts as length 1."""
    return edit_distance(hyp, ref) / max(len(ref), 1)


def split_words(seq: Sequence, space_token) -> list[tuple]:
    words, cur = [], []
    for t in seq:
        if t == space_token:
            if cur:
                words.append(tuple(cur))
            cur = []
        else:
            cur.append(t)
    if cur:
        words.append(tuple(cur))
    return words


def wer(hyp: Sequence, ref: Sequence, space_token) -> float:
    ref_words = split_words(ref, space_token)
    return edit_distance(split_words(hyp, space_token), ref_words) / max(len(ref_words), 1)


def corpus_scores(hyps, refs, space_token=None) -> tuple[float, float, int]:
    """Corpus CER and WER (summed edits over summed reference lengths) and the empty-reference count."""
    char_edits = char_len = word_edits = word_len = empty = 0
    for h, r in zip(hyps, refs):
        char_edits += edit_distance(h, r)
        char_len += len(r)
        empty += len(r) == 0
        rw = split_words(r, space_token)
        word_edits += edit_distance(split_words(h, space_token), rw)
        word_len += len(rw)
    return char_edits / max(char_len, 1), word_edits / max(word_len, 1), empty


def decode_all(model: Seq2Seq, xs, beam: int, max_len=None) -> list[BeamHypothesis]:
    caps = [default_max_len(x) for x in xs] if max_len is None else [max_len] * len(xs)
    if beam == 1:
        return greedy_decode_batch(model, xs, caps)
    return [beam_search(model, x, beam, c) for x, c in zip(xs, caps)]


def evaluate(model: Seq2Seq, dataset, beams=(16,), max_len=None, space_token=None) -> list[EvalMetrics]:
    """Corpus metrics for each beam width; ``dataset`` is a list of ``(x, y)`` id sequences."""
    if not dataset:
        raise ValueError("dataset must be non-empty")
    xs = [x for x, _ in dataset]
    refs = [y for _, y in dataset]
    rows = []
    for b in beams:
        hyps = decode_all(model, xs, b, max_len)
        c, w, empty = corpus_scores([h.tokens for h in hyps], refs, space_token)
        rows.append(EvalMetrics(c, w, len(dataset), float(np.mean([h.logprob for h in hyps])), b, empty))
    return rows


def metrics_csv_header(comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    buf.write(",".join(CSV_FIELDS) + "\n")
    return buf.getvalue()


def format_row(row: dict) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, CSV_FIELDS, lineterminator="\n")
    writer.writerow({k: _fmt(row.get(k, "")) for k in CSV_FIELDS})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


def read_metrics_csv(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    return list(csv.DictReader(lines))
