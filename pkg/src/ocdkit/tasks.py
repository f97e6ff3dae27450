"""Synthetic character-level transduction tasks and their file formats."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TASKS = ("copy", "reverse", "rot_k", "dedup", "word_reverse")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Vocab:
    """Closed character vocabulary.

    Token ids: the content characters in order, then the space character
    (when configured), then eos, then pad. The pad id doubles as the
    begin-of-sequence input of the decoder; it is never predicted.
    """

    tokens: tuple[str, ...]
    eos: str = "</s>"
    pad: str = "<pad>"
    space: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate vocabulary tokens")
        reserved = {self.eos, self.pad} | ({self.space} if self.space is not None else set())
        if reserved & set(self.tokens):
            raise ValueError(f"reserved markers {sorted(reserved & set(self.tokens))} in tokens")
        if not self.tokens:
            raise ValueError("vocabulary needs at least one token")

    @classmethod
    def of(cls, chars: str, space: bool = False) -> "Vocab":
        return cls(tuple(chars), space=" " if space else None)

    @property
    def symbols(self) -> tuple[str, ...]:
        """Content symbols by id (excludes eos and pad)."""
        return self.tokens + ((self.space,) if self.space is not None else ())

    @property
    def n_content(self) -> int:
        return len(self.symbols)

    @property
    def eos_id(self) -> int:
        return self.n_content

    @property
    def pad_id(self) -> int:
        return self.n_content + 1

    @property
    def bos_id(self) -> int:
        return self.pad_id

    @property
    def space_id(self) -> int | None:
        return len(self.tokens) if self.space is not None else None

    @property
    def size(self) -> int:
        """All ids including eos and pad."""
        return self.n_content + 2

    @property
    def n_out(self) -> int:
        """Number of predictable ids: content symbols plus eos."""
        return self.n_content + 1

    def encode(self, text: str) -> list[int]:
        index = {c: i for i, c in enumerate(self.symbols)}
        ids = []
        for c in text:
            if c not in index:
                raise DatasetError(f"unknown character {c!r}")
            ids.append(index[c])
        return ids

    def decode(self, ids) -> str:
        out = []
        for i in ids:
            i = int(i)
            if i == self.eos_id:
                break
            out.append(self.symbols[i])
        return "".join(out)

    def token_name(self, i: int) -> str:
        if i == self.eos_id:
            return self.eos
        if i == self.pad_id:
            return self.pad
        return self.symbols[i]

    def to_json(self) -> dict:
        d = {"tokens": list(self.tokens), "eos": self.eos, "pad": self.pad}
        if self.space is not None:
            d["space"] = self.space
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Vocab":
        return cls(tuple(d["tokens"]), d.get("eos", "</s>"), d.get("pad", "<pad>"), d.get("space"))


def save_vocab(vocab: Vocab, path) -> None:
    Path(path).write_text(json.dumps(vocab.to_json()) + "\n", encoding="utf-8")


def load_vocab(path) -> Vocab:
    return Vocab.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class DatasetRecord:
    x: str
    y: str


def _dedup(s: str) -> str:
    return "".join(c for i, c in enumerate(s) if i == 0 or c != s[i - 1])


def _rot(s: str, chars: tuple[str, ...], k: int) -> str:
    index = {c: i for i, c in enumerate(chars)}
    return "".join(chars[(index[c] + k) % len(chars)] for c in s)


def derive_target(task: str, x: str, vocab: Vocab, k: int = 1) -> str:
    """Applies the task's transduction rule to an input string."""
    if task == "copy":
        return x
    if task == "reverse":
        return x[::-1]
    if task == "rot_k":
        return _rot(x, vocab.tokens, k)
    if task == "dedup":
        return _dedup(x)
    if task == "word_reverse":
        return vocab.space.join(reversed(x.split(vocab.space)))
    raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")


def generate_dataset(
    task: str,
    n: int,
    len_range: tuple[int, int],
    vocab: Vocab,
    seed: int,
    k: int = 1,
) -> list[DatasetRecord]:
    """Draws ``n`` random ``(x, y)`` pairs for ``task``.

    ``x`` is uniform over the content characters with a length uniform in
    ``len_range`` (inclusive). For ``word_reverse`` the range bounds the
    length of each of the 2-4 words instead.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    lo, hi = len_range
    if lo < 1 or hi < lo:
        raise ValueError(f"invalid length range {len_range}")
    if task == "word_reverse" and vocab.space is None:
        raise ValueError("word_reverse needs a vocabulary with a space token")
    rng = np.random.default_rng(seed)
    chars = vocab.tokens
    records = []
    for _ in range(n):
        if task == "word_reverse":
            words = [
                "".join(chars[i] for i in rng.integers(0, len(chars), rng.integers(lo, hi + 1)))
                for _ in range(rng.integers(2, 5))
            ]
            x = vocab.space.join(words)
        else:
            x = "".join(chars[i] for i in rng.integers(0, len(chars), rng.integers(lo, hi + 1)))
        records.append(DatasetRecord(x, derive_target(task, x, vocab, k)))
    return records


def save_dataset(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(json.dumps({"x": r.x, "y": r.y}, ensure_ascii=False) + "\n")


def load_dataset(path, vocab: Vocab | None = None) -> list[DatasetRecord]:
    """Reads a JSON-lines dataset, optionally checking every character against ``vocab``."""
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = DatasetRecord(str(obj["x"]), str(obj["y"]))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise DatasetError(f"{path}:{lineno}: malformed record ({e})") from None
            if vocab is not None:
                try:
                    vocab.encode(rec.x)
                    vocab.encode(rec.y)
                except DatasetError as e:
                    raise DatasetError(f"{path}:{lineno}: {e}") from None
            records.append(rec)
    return records
