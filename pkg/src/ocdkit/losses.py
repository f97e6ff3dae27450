"""Per-token cross-entropy losses for OCD, MLE and scheduled sampling.

All losses take a ``(steps, n_out)`` array of log-probabilities whose last
column is eos, and return a :class:`LossReport` whose ``total`` is the mean
over supervised steps.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ocdkit.policy_targets import PolicyTargets


@dataclass
class LossReport:
    total: float
    per_step: np.ndarray
    token_count: int

    @property
    def sum(self) -> float:
        return float(self.total * self.token_count)


def _check_logprobs(logprobs, atol=1e-6) -> np.ndarray:
    lp = np.asarray(logprobs, dtype=np.float64)
    if lp.ndim != 2:
        raise ValueError(f"expected (steps, n_out) log-probabilities, got shape {lp.shape}")
    mass = np.exp(lp).sum(axis=1)
    if lp.size and not np.allclose(mass, 1.0, rtol=0, atol=atol):
        bad = int(np.argmax(np.abs(mass - 1.0)))
        raise ValueError(f"log-probabilities at step {bad} sum to {mass[bad]:.8f}, not 1")
    return lp


def _report(per_step: np.ndarray) -> LossReport:
    n = len(per_step)
    return LossReport(float(per_step.mean()) if n else 0.0, per_step, n)


def target_distribution(target: Sequence[int], n_out: int, label_smoothing: float = 0.0) -> np.ndarray:
    """One-hot rows for ``target + [eos]`` mixed with a uniform distribution."""
    ids = list(target) + [n_out - 1]
    dist = np.zeros((len(ids), n_out))
    dist[np.arange(len(ids)), ids] = 1.0
    if label_smoothing:
        dist = (1.0 - label_smoothing) * dist + label_smoothing / n_out
    return dist


def cross_entropy(logprobs: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Per-step ``-sum_a dist[t, a] * logprobs[t, a]``, treating ``0 * -inf`` as 0."""
    terms = np.multiply(dist, logprobs, out=np.zeros(np.broadcast(dist, logprobs).shape), where=dist > 0)
    return -terms.sum(axis=1)


def ocd_loss(rollout_logprobs, targets: PolicyTargets) -> LossReport:
    """Cross-entropy between the optimal policy and the model along a rollout.

    Differs from the KL divergence only by the entropy of the targets, which
    does not depend on the model.
    """
    lp = _check_logprobs(rollout_logprobs)
    if len(lp) != len(targets):
        raise ValueError(f"rollout has {len(lp)} steps but targets have {len(targets)}")
    return _report(cross_entropy(lp, np.asarray(targets.probs)))


def mle_loss(target: Sequence[int], teacher_forced_logprobs, label_smoothing: float = 0.0) -> LossReport:
    if not 0.0 <= label_smoothing < 1.0:
        raise ValueError(f"label_smoothing must be in [0, 1), got {label_smoothing}")
    lp = _check_logprobs(teacher_forced_logprobs)
    if len(lp) != len(target) + 1:
        raise ValueError(f"expected {len(target) + 1} steps (target + eos), got {len(lp)}")
    return _report(cross_entropy(lp, target_distribution(target, lp.shape[1], label_smoothing)))


def ss_loss(target: Sequence[int], mixed_prefix_logprobs) -> LossReport:
    """Ground-truth cross-entropy on logits computed from mixed prefixes."""
    return mle_loss(target, mixed_prefix_logprobs, 0.0)


def hamming_accuracy(rollout: Sequence, target: Sequence) -> float:
    longest = max(len(rollout), len(target))
    if longest == 0:
        return 1.0
    same = sum(a == b for a, b in zip(rollout, target))
    return same / longest
