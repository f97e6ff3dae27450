"""Training trajectories: on-policy samples and scheduled-sampling prefixes."""

from __future__ import annotations

import zlib
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ocdkit.toy_model import Seq2Seq


def rng_stream(seed: int, purpose: str) -> np.random.Generator:
    """Independent generator per named purpose ("rollout", "mixing", "data", ...)."""
    return np.random.default_rng([seed, zlib.crc32(purpose.encode())])


def rollout_cap(target_len: int) -> int:
    return 2 * target_len + 10


@dataclass
class Rollout:
    tokens: list[int]
    ended_with_eos: bool
    per_step_logprobs: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.per_step_logprobs)


@dataclass(frozen=True)
class Schedule:
    p_start: float
    p_end: float
    ramp_steps: int

    def __post_init__(self):
        for name in ("p_start", "p_end"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.ramp_steps < 0:
            raise ValueError("ramp_steps must be >= 0")


def sampling_probability(step: int, schedule: Schedule) -> float:
    """Linear ramp from ``p_start`` to ``p_end`` over ``ramp_steps``, constant afterwards."""
    if schedule.ramp_steps == 0 or step >= schedule.ramp_steps:
        return schedule.p_end
    frac = max(step, 0) / schedule.ramp_steps
    return schedule.p_start + (schedule.p_end - schedule.p_start) * frac


def _draw(logprobs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling, one uniform per row."""
    cdf = np.cumsum(np.exp(logprobs.astype(np.float64)), axis=1)
    idx = (cdf <= (u * cdf[:, -1])[:, None]).sum(axis=1)
    return np.minimum(idx, logprobs.shape[1] - 1)


def sample_rollouts(model: Seq2Seq, xs, max_lens, rng: np.random.Generator) -> list[Rollout]:
    """Ancestral sampling at temperature 1 for a batch of inputs.

    Example ``b`` stops at eos or after ``max_lens[b]`` tokens.
    """
    cfg = model.config
    B = len(xs)
    max_lens = np.broadcast_to(np.asarray(max_lens), (B,))
    if (max_lens < 1).any():
        raise ValueError("max_len must be >= 1")
    enc = model.encode_batch(xs)
    h = model.initial_state(enc)
    prev = np.full(B, cfg.bos_id, dtype=np.int64)
    tokens = [[] for _ in range(B)]
    logps = [[] for _ in range(B)]
    done = np.zeros(B, dtype=bool)
    ended = np.zeros(B, dtype=bool)
    for t in range(int(max_lens.max())):
        active = np.flatnonzero(~done)
        if not len(active):
            break
        logp, h_new = model.decode_step(h[active], prev[active], enc.take(active))
        h[active] = h_new
        picks = _draw(logp, rng.random(len(active)))
        for k, b in enumerate(active):
            logps[b].append(logp[k])
            if picks[k] == cfg.eos_id:
                ended[b] = done[b] = True
            else:
                tokens[b].append(int(picks[k]))
                if len(tokens[b]) >= max_lens[b]:
                    done[b] = True
        prev[active] = picks
    return [
        Rollout(tokens[b], bool(ended[b]), np.array(logps[b]).reshape(-1, cfg.n_out)) for b in range(B)
    ]


def sample_rollout(model: Seq2Seq, x: Sequence[int], max_len: int, rng: np.random.Generator) -> Rollout:
    return sample_rollouts(model, [x], [max_len], rng)[0]


def scheduled_prefix_batch(model: Seq2Seq, xs, targets, p_sample: float, rng: np.random.Generator):
    """Decodes ``len(target) + 1`` steps per example on mixed prefixes.

    After each step the next conditioning token is a model sample with
    probability ``p_sample`` and the ground-truth token otherwise.

    Returns:
      ``(dec_inputs, logprobs)`` with shapes ``(B, T)`` and ``(B, T, n_out)``,
      ``T = max(len(target)) + 1``. Rows past an example's length are padding.
    """
    if not 0.0 <= p_sample <= 1.0:
        raise ValueError(f"p_sample must be in [0, 1], got {p_sample}")
    cfg = model.config
    B = len(xs)
    T = max(len(y) for y in targets) + 1
    truth = np.full((B, T), cfg.eos_id, dtype=np.int64)
    for b, y in enumerate(targets):
        truth[b, : len(y)] = y
    enc = model.encode_batch(xs)
    h = model.initial_state(enc)
    inputs = np.full((B, T), cfg.bos_id, dtype=np.int64)
    out = np.zeros((B, T, cfg.n_out), dtype=model.params["out_b"].dtype)
    for t in range(T):
        logp, h = model.decode_step(h, inputs[:, t], enc)
        out[:, t] = logp
        if t + 1 == T:
            break
        nxt = truth[:, t]
        if p_sample == 1.0:
            nxt = _draw(logp, rng.random(B))
        elif p_sample > 0.0:
            use_model = rng.random(B) < p_sample
            sampled = _draw(logp, rng.random(B))
            nxt = np.where(use_model, sampled, nxt)
        inputs[:, t + 1] = nxt
    return inputs, out


def scheduled_prefix_pass(model: Seq2Seq, x, target, p_sample: float, rng: np.random.Generator) -> np.ndarray:
    """Log-probabilities ``(len(target) + 1, n_out)`` along one mixed prefix."""
    _, logprobs = scheduled_prefix_batch(model, [x], [target], p_sample, rng)
    return logprobs[0]


def prefix_mismatch(rollout: Sequence, target: Sequence) -> float:
    """Fraction of positions where the rollout disagrees with the target.

    Positions past the shorter sequence count as mismatches.
    """
    longest = max(len(rollout), len(target))
    if longest == 0:
        return 0.0
    same = sum(a == b for a, b in zip(rollout, target))
    return 1.0 - same / longest
