"""Training loop shared by all methods (mle, ss, ocd, oct_shortest, oct_words)."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ocdkit import decode_metrics as dm
from ocdkit.edit_q import distance_rows, q_values, row_targets
from ocdkit.losses import target_distribution
from ocdkit.policy_targets import hard_distribution, oct_select, soft_policy
from ocdkit.rollout import (
    Schedule,
    prefix_mismatch,
    rng_stream,
    rollout_cap,
    sample_rollouts,
    sampling_probability,
    scheduled_prefix_batch,
)
from ocdkit.tasks import Vocab
from ocdkit.toy_model import ModelConfig, OptimizerState, Seq2Seq, adam_step, save_checkpoint

log = logging.getLogger(__name__)

METHODS = ("mle", "ss", "ocd", "oct_shortest", "oct_words")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    method: str = "ocd"
    label_smoothing: float = 0.0
    tau: float = 0.0
    schedule: Schedule | None = None
    steps: int = 5000
    batch_size: int = 16
    lr: float = 0.001
    plateau_patience: int = 5
    seed: int = 0
    model: ModelConfig | None = None
    eval_every: int = 250
    beam: int = 16
    train_eval_n: int = 200

    def validate(self) -> None:
        """Raises :class:`ConfigError` listing every invalid field."""
        problems = []
        if self.method not in METHODS:
            problems.append(f"method: must be one of {METHODS}, got {self.method!r}")
        if not 0.0 <= self.label_smoothing < 1.0:
            problems.append("label_smoothing: must be in [0, 1)")
        if self.tau < 0:
            problems.append("tau: must be >= 0")
        if self.method == "ss" and self.schedule is None:
            problems.append("schedule: required when method is 'ss'")
        if self.method != "ss" and self.schedule is not None:
            problems.append("schedule: only valid when method is 'ss'")
        for name in ("steps", "batch_size", "eval_every", "beam"):
            if getattr(self, name) < 1:
                problems.append(f"{name}: must be >= 1")
        if self.train_eval_n < 0:
            problems.append("train_eval_n: must be >= 0")
        if self.plateau_patience < 1:
            problems.append("plateau_patience: must be >= 1")
        if not self.lr > 0:
            problems.append("lr: must be > 0")
        if self.model is None:
            problems.append("model: required")
        if problems:
            raise ConfigError("invalid config:\n  " + "\n  ".join(problems))

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"invalid config:\n  unknown field(s): {', '.join(unknown)}")
        d = dict(d)
        try:
            if d.get("schedule") is not None:
                d["schedule"] = Schedule(**d["schedule"])
            if d.get("model") is not None:
                d["model"] = ModelConfig(**d["model"])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid config:\n  {e}") from None
        return cls(**d)


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)
    best_val_cer: float = float("inf")
    best_step: int = -1
    lr_dropped_at: int | None = None
    nonfinite: bool = False
    model: Seq2Seq | None = None


def _pad(seqs, T, fill):
    out = np.full((len(seqs), T), fill, dtype=np.int64)
    for b, s in enumerate(seqs):
        out[b, : len(s)] = s
    return out


def build_batch(model: Seq2Seq, config: TrainConfig, xs, ys, step: int, streams, space_id=None) -> tuple:
    """Decoder inputs, target distributions and step mask for one batch.

    Returns ``(dec_inputs, dists, mask, mismatch, p_sample)``.
    """
    cfg = model.config
    n_out, bos, eos = cfg.n_out, cfg.bos_id, cfg.eos_id
    B = len(xs)
    if config.method in ("mle", "ss"):
        T = max(len(y) for y in ys) + 1
        if config.method == "ss":
            p = sampling_probability(step, config.schedule)
            inputs, _ = scheduled_prefix_batch(model, xs, ys, p, streams["mixing"])
            mismatch = float(np.mean([prefix_mismatch(list(inputs[b, 1 : len(y) + 1]), y) for b, y in enumerate(ys)]))
            smoothing = 0.0
        else:
            p, mismatch, smoothing = 0.0, 0.0, config.label_smoothing
            inputs = _pad([[bos] + list(y) for y in ys], T, eos)
        dists = np.zeros((B, T, n_out))
        mask = np.zeros((B, T), dtype=bool)
        for b, y in enumerate(ys):
            dists[b, : len(y) + 1] = target_distribution(y, n_out, smoothing)
            mask[b, : len(y) + 1] = True
        dists[~mask] = 1.0 / n_out
        return inputs, dists, mask, mismatch, p

    rollouts = sample_rollouts(model, xs, [rollout_cap(len(y)) for y in ys], streams["rollout"])
    T = max(r.steps for r in rollouts)
    inputs = np.full((B, T), bos, dtype=np.int64)
    dists = np.full((B, T, n_out), 1.0 / n_out)
    mask = np.zeros((B, T), dtype=bool)
    mismatch = []
    for b, (r, y) in enumerate(zip(rollouts, ys)):
        hyp = r.tokens
        steps = r.steps
        inputs[b, 1:steps] = hyp[: steps - 1]
        mask[b, :steps] = True
        mismatch.append(prefix_mismatch(hyp, y))
        if config.method == "ocd":
            table = q_values(hyp, y, eos)
            for i in range(steps):
                if config.tau > 0:
                    dists[b, i] = soft_policy(table[i], config.tau, n_out)
                else:
                    dists[b, i] = hard_distribution(table[i], n_out)
        else:
            strategy = "shortest" if config.method == "oct_shortest" else "same_words"
            for i, row in enumerate(distance_rows(hyp, y)):
                if i == steps:
                    break
                tok = oct_select(row_targets(row, y, eos), row, y, hyp[:i], strategy, space=space_id, eos=eos)
                dists[b, i] = 0.0
                dists[b, i, tok] = 1.0
    return inputs, dists, mask, float(np.mean(mismatch)), 1.0


def _eval_split(model, pairs, config, space_id):
    mle_like = []
    for start in range(0, len(pairs), 64):
        chunk = pairs[start : start + 64]
        xs = [x for x, _ in chunk]
        ys = [y for _, y in chunk]
        T = max(len(y) for y in ys) + 1
        inputs = _pad([[model.config.bos_id] + list(y) for y in ys], T, model.config.bos_id)
        logp, _ = model.forward(xs, inputs)
        for b, y in enumerate(ys):
            ids = list(y) + [model.config.eos_id]
            mle_like.extend(-logp[b, np.arange(len(ids)), ids])
    metrics = dm.evaluate(model, pairs, beams=(config.beam,), space_token=space_id)[0]
    return float(np.mean(mle_like)), metrics


def train(
    config: TrainConfig,
    train_pairs,
    val_pairs,
    vocab: Vocab,
    out_dir=None,
    log_every: int = 0,
) -> TrainResult:
    """Runs one training job.

    ``train_pairs`` and ``val_pairs`` hold ``(x_ids, y_ids)``. When
    ``out_dir`` is given, writes ``metrics.csv`` and the best-validation
    ``checkpoint.json`` there.
    """
    config.validate()
    if config.model.vocab_size != vocab.size:
        raise ConfigError(f"invalid config:\n  model.vocab_size: {config.model.vocab_size} != vocabulary size {vocab.size}")
    model = Seq2Seq(config.model)
    opt = OptimizerState.zeros_like(model.params)
    streams = {k: rng_stream(config.seed, k) for k in ("data", "rollout", "mixing", "train_eval")}
    lr = config.lr
    result = TrainResult()
    out_dir = Path(out_dir) if out_dir is not None else None
    csv_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "metrics.csv"
        comment = "config " + json.dumps(config.to_json(), sort_keys=True)
        csv_path.write_text(dm.metrics_csv_header(comment), encoding="utf-8")
    train_eval = train_pairs
    if config.train_eval_n < len(train_pairs):
        idx = streams["train_eval"].choice(len(train_pairs), config.train_eval_n, replace=False)
        train_eval = [train_pairs[i] for i in sorted(idx)]

    order = np.array([], dtype=np.int64)
    window_loss, window_mismatch, window_p = [], [], []
    evals_since_best = 0
    for step in range(1, config.steps + 1):
        if len(order) < config.batch_size:
            order = np.concatenate([order, streams["data"].permutation(len(train_pairs))])
        idx, order = order[: config.batch_size], order[config.batch_size :]
        xs = [train_pairs[i][0] for i in idx]
        ys = [train_pairs[i][1] for i in idx]
        inputs, dists, mask, mismatch, p = build_batch(model, config, xs, ys, step - 1, streams, vocab.space_id)
        loss, grads, _ = model.loss_and_gradients(xs, inputs, dists, mask)
        if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
            result.nonfinite = True
            log.error("non-finite loss or gradient at step %d; stopping", step)
            break
        model.params, opt = adam_step(model.params, grads, opt, lr)
        result.losses.append(loss)
        window_loss.append(loss)
        window_mismatch.append(mismatch)
        window_p.append(p)
        if log_every and step % log_every == 0:
            log.info("step %d loss %.4f", step, np.mean(result.losses[-log_every:]))

        if step % config.eval_every == 0 or step == config.steps:
            tr_nll, tr = _eval_split(model, train_eval, config, vocab.space_id)
            va_nll, va = _eval_split(model, val_pairs, config, vocab.space_id)
            shared = {"step": step, "prefix_mismatch": float(np.mean(window_mismatch)), "p_sample": float(np.mean(window_p)), "beam": config.beam}
            rows = [
                shared | {"split": "train", "loss": float(np.mean(window_loss)), "cer": tr.cer, "wer": tr.wer},
                shared | {"split": "val", "loss": va_nll, "cer": va.cer, "wer": va.wer},
            ]
            result.rows.extend(rows)
            if csv_path is not None:
                with open(csv_path, "a", encoding="utf-8") as f:
                    for r in rows:
                        f.write(dm.format_row(r))
            window_loss, window_mismatch, window_p = [], [], []
            if va.cer < result.best_val_cer:
                result.best_val_cer, result.best_step = va.cer, step
                evals_since_best = 0
                if out_dir is not None:
                    save_checkpoint(out_dir / "checkpoint.json", config.model, model.params, opt, step, {"train_config": config.to_json(), "vocab": vocab.to_json()})
            else:
                evals_since_best += 1
                if result.lr_dropped_at is None and evals_since_best >= config.plateau_patience:
                    lr *= 0.01
                    result.lr_dropped_at = step
                    log.info("validation CER plateaued; lr -> %g at step %d", lr, step)
    result.model = model
    return result
