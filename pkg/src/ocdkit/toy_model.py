"""Small GRU encoder-decoder with hand-written backpropagation.

Token ids follow :class:`ocdkit.tasks.Vocab`: ``vocab_size`` counts the
content symbols plus eos and pad. The decoder predicts over
``n_out = vocab_size - 1`` ids (content and eos, eos last) and is fed the
pad id as its begin-of-sequence input.

Everything is batched over examples. Sampled decoder inputs are plain data
to the backward pass; gradients only flow through log-probabilities.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1

_DTYPE_CODES = {"float32": "f32", "float64": "f64"}


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 32
    hidden_dim: int = 64
    use_attention: bool = False
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.vocab_size < 3:
            raise ValueError("vocab_size must be >= 3 (one symbol, eos, pad)")
        if self.embed_dim < 1 or self.hidden_dim < 1:
            raise ValueError("embed_dim and hidden_dim must be >= 1")
        if self.dtype not in _DTYPE_CODES:
            raise ValueError(f"dtype must be one of {sorted(_DTYPE_CODES)}")

    @property
    def n_out(self) -> int:
        return self.vocab_size - 1

    @property
    def eos_id(self) -> int:
        return self.vocab_size - 2

    @property
    def bos_id(self) -> int:
        return self.vocab_size - 1


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    V, D, H, O = config.vocab_size, config.embed_dim, config.hidden_dim, config.n_out
    return {
        "embed": (V, D),
        "enc_Wx": (D, 3 * H),
        "enc_Wh": (H, 3 * H),
        "enc_b": (3 * H,),
        "dec_Wx": (D, 3 * H),
        "dec_Wh": (H, 3 * H),
        "dec_b": (3 * H,),
        "att_W": (2 * H, H),
        "att_b": (H,),
        "out_W": (H, O),
        "out_b": (O,),
    }


def init_params(config: ModelConfig) -> dict[str, np.ndarray]:
    """Xavier-uniform matrices and zero biases, deterministic in ``config.seed``."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x1417]))
    params = {}
    for name, shape in param_shapes(config).items():
        if len(shape) == 2:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-bound, bound, size=shape).astype(config.dtype)
        else:
            params[name] = np.zeros(shape, dtype=config.dtype)
    return params


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _gru(x, h, Wx, Wh, b):
    H = h.shape[-1]
    gx = x @ Wx + b
    gh = h @ Wh
    z = _sigmoid(gx[:, :H] + gh[:, :H])
    r = _sigmoid(gx[:, H : 2 * H] + gh[:, H : 2 * H])
    ghn = gh[:, 2 * H :]
    n = np.tanh(gx[:, 2 * H :] + r * ghn)
    return (1.0 - z) * n + z * h, (x, h, z, r, n, ghn)


def _gru_backward(dh_new, cache, Wx, Wh, grads, prefix):
    x, h, z, r, n, ghn = cache
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h - n)
    dn_pre = dn * (1.0 - n * n)
    dr_pre = dn_pre * ghn * r * (1.0 - r)
    dz_pre = dz * z * (1.0 - z)
    dgx = np.concatenate([dz_pre, dr_pre, dn_pre], axis=1)
    dgh = np.concatenate([dz_pre, dr_pre, dn_pre * r], axis=1)
    grads[prefix + "Wx"] += x.T @ dgx
    grads[prefix + "Wh"] += h.T @ dgh
    grads[prefix + "b"] += dgx.sum(axis=0)
    return dgx @ Wx.T, dh_new * z + dgh @ Wh.T


@dataclass
class EncoderOutput:
    """Encoder states ``(B, S, H)``, their validity mask and the summary ``(B, H)``."""

    states: np.ndarray
    mask: np.ndarray
    summary: np.ndarray
    tokens: np.ndarray = field(repr=False, default=None)
    caches: list = field(repr=False, default=None)

    def take(self, index) -> "EncoderOutput":
        """Rows selected by ``index`` (used to expand examples into beams)."""
        return EncoderOutput(self.states[index], self.mask[index], self.summary[index])


class Seq2Seq:
    """Parameters plus configuration; the forward and backward passes live here."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None):
        self.config = config
        self.params = params if params is not None else init_params(config)

    # -- encoder ---------------------------------------------------------

    def encode_batch(self, xs) -> EncoderOutput:
        xs = [list(x) for x in xs]
        if any(len(x) == 0 for x in xs):
            raise ValueError("encoder input must be non-empty")
        p, H = self.params, self.config.hidden_dim
        B, S = len(xs), max(len(x) for x in xs)
        tokens = np.full((B, S), self.config.bos_id, dtype=np.int64)
        mask = np.zeros((B, S), dtype=bool)
        for b, x in enumerate(xs):
            tokens[b, : len(x)] = x
            mask[b, : len(x)] = True
        self._check_ids(tokens[mask], self.config.vocab_size)
        h = np.zeros((B, H), dtype=self.config.dtype)
        states = np.zeros((B, S, H), dtype=self.config.dtype)
        caches = []
        for s in range(S):
            h_new, cache = _gru(p["embed"][tokens[:, s]], h, p["enc_Wx"], p["enc_Wh"], p["enc_b"])
            m = mask[:, s : s + 1]
            h = np.where(m, h_new, h)
            states[:, s] = h
            caches.append(cache)
        return EncoderOutput(states, mask, h, tokens, caches)

    def encode(self, x):
        """Encoder states ``(len(x), H)`` and summary ``(H,)`` for one input."""
        out = self.encode_batch([x])
        return out.states[0], out.summary[0]

    # -- decoder ---------------------------------------------------------

    def _step(self, h, prev, enc: EncoderOutput):
        p = self.params
        h, gru_cache = _gru(p["embed"][prev], h, p["dec_Wx"], p["dec_Wh"], p["dec_b"])
        if self.config.use_attention:
            scores = np.einsum("bsh,bh->bs", enc.states, h)
            scores = np.where(enc.mask, scores, -np.inf)
            alpha = np.exp(scores - scores.max(axis=1, keepdims=True))
            alpha /= alpha.sum(axis=1, keepdims=True)
            ctx = np.einsum("bs,bsh->bh", alpha, enc.states)
            hc = np.concatenate([h, ctx], axis=1)
            feat = np.tanh(hc @ p["att_W"] + p["att_b"])
            att_cache = (alpha, hc, feat)
        else:
            feat, att_cache = h, None
        logp = _log_softmax(feat @ p["out_W"] + p["out_b"])
        return logp, h, (gru_cache, att_cache, feat)

    def initial_state(self, enc: EncoderOutput) -> np.ndarray:
        return enc.summary.copy()

    def decode_step(self, state, prev_token, enc: EncoderOutput):
        """One decoder step: ``(log-probabilities over n_out ids, next state)``.

        Accepts a single state ``(H,)`` with a scalar token, or a batch.
        """
        single = np.ndim(state) == 1
        h = np.atleast_2d(state)
        prev = np.atleast_1d(np.asarray(prev_token, dtype=np.int64))
        self._check_ids(prev, self.config.vocab_size)
        logp, h, _ = self._step(h, prev, enc)
        return (logp[0], h[0]) if single else (logp, h)

    @staticmethod
    def _check_ids(ids, limit):
        if ids.size and (ids.min() < 0 or ids.max() >= limit):
            raise ValueError(f"token id out of range [0, {limit})")

    # -- full passes -----------------------------------------------------

    def forward(self, xs, dec_inputs: np.ndarray):
        """Runs the decoder on fixed inputs ``(B, T)``; returns log-probs ``(B, T, n_out)`` and a tape."""
        enc = self.encode_batch(xs)
        dec_inputs = np.asarray(dec_inputs, dtype=np.int64)
        self._check_ids(dec_inputs, self.config.vocab_size)
        h = self.initial_state(enc)
        out, caches = [], []
        for t in range(dec_inputs.shape[1]):
            logp, h, cache = self._step(h, dec_inputs[:, t], enc)
            out.append(logp)
            caches.append(cache)
        logprobs = np.stack(out, axis=1) if out else np.zeros((len(xs), 0, self.config.n_out))
        return logprobs, (enc, dec_inputs, caches)

    def backward(self, tape, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of ``sum(dlogits * logits)`` for every parameter."""
        enc, dec_inputs, caches = tape
        p = self.params
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dstates = np.zeros_like(enc.states)
        dh = np.zeros_like(enc.summary)
        for t in reversed(range(len(caches))):
            gru_cache, att_cache, feat = caches[t]
            dlog = dlogits[:, t].astype(feat.dtype)
            grads["out_W"] += feat.T @ dlog
            grads["out_b"] += dlog.sum(axis=0)
            dfeat = dlog @ p["out_W"].T
            if att_cache is None:
                dh_t = dfeat
            else:
                alpha, hc, _ = att_cache
                H = self.config.hidden_dim
                dpre = dfeat * (1.0 - feat * feat)
                grads["att_W"] += hc.T @ dpre
                grads["att_b"] += dpre.sum(axis=0)
                dhc = dpre @ p["att_W"].T
                dh_t, dctx = dhc[:, :H], dhc[:, H:]
                h = hc[:, :H]
                dalpha = np.einsum("bsh,bh->bs", enc.states, dctx)
                dstates += alpha[:, :, None] * dctx[:, None, :]
                dscores = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
                dh_t = dh_t + np.einsum("bs,bsh->bh", dscores, enc.states)
                dstates += dscores[:, :, None] * h[:, None, :]
            dx, dh = _gru_backward(dh + dh_t, gru_cache, p["dec_Wx"], p["dec_Wh"], grads, "dec_")
            np.add.at(grads["embed"], dec_inputs[:, t], dx)
        for s in reversed(range(len(enc.caches))):
            dh = dh + dstates[:, s]
            m = enc.mask[:, s : s + 1]
            dx, dh_prev = _gru_backward(np.where(m, dh, 0.0), enc.caches[s], p["enc_Wx"], p["enc_Wh"], grads, "enc_")
            np.add.at(grads["embed"], enc.tokens[:, s], np.where(m, dx, 0.0))
            dh = np.where(m, dh_prev, dh)
        return grads

    def loss_and_gradients(self, xs, dec_inputs, target_dists, step_mask):
        """Mean cross-entropy over supervised steps and its exact gradients.

        Args:
          xs: source sequences.
          dec_inputs: ``(B, T)`` decoder inputs (bos followed by the conditioning prefix).
          target_dists: ``(B, T, n_out)`` target distributions, each row summing to one.
          step_mask: ``(B, T)`` flags for supervised steps.

        Returns:
          ``(loss, grads, logprobs)``.
        """
        logprobs, tape = self.forward(xs, dec_inputs)
        mask = np.asarray(step_mask, dtype=np.float64)
        count = mask.sum()
        dist = np.asarray(target_dists, dtype=np.float64)
        per_step = -np.where(dist > 0, dist * logprobs, 0.0).sum(axis=2)
        loss = float((per_step * mask).sum() / count) if count else 0.0
        dlogits = (np.exp(logprobs) - dist) * (mask / max(count, 1.0))[:, :, None]
        return loss, self.backward(tape, dlogits), logprobs


# -- optimizer ----------------------------------------------------------


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "OptimizerState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def adam_step(params, grads, state: OptimizerState, lr, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=5.0):
    """Global-norm clipping followed by a bias-corrected Adam update.

    Returns new ``(params, state)``; the inputs are left untouched.
    """
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {k} {params[k].shape}")
    norm = global_norm(grads)
    scale = clip_norm / norm if clip_norm and norm > clip_norm else 1.0
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k] * scale
        m = beta1 * state.m[k] + (1 - beta1) * g
        v = beta2 * state.v[k] + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        new_params[k] = (p - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)
        new_m[k], new_v[k] = m.astype(p.dtype), v.astype(p.dtype)
    return new_params, OptimizerState(new_m, new_v, t)


# -- checkpoints ----------------------------------------------------------


def _pack(arrays: dict[str, np.ndarray]) -> dict:
    out = {}
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        code = _DTYPE_CODES[a.dtype.name]
        out[name] = {
            "shape": list(a.shape),
            "dtype": code,
            "data": base64.b64encode(a.astype(a.dtype.newbyteorder("<")).tobytes()).decode("ascii"),
        }
    return out


def _unpack(blob: dict) -> dict[str, np.ndarray]:
    codes = {v: k for k, v in _DTYPE_CODES.items()}
    out = {}
    for name, entry in blob.items():
        dtype = np.dtype(codes[entry["dtype"]]).newbyteorder("<")
        data = np.frombuffer(base64.b64decode(entry["data"]), dtype=dtype)
        out[name] = data.reshape(entry["shape"]).astype(codes[entry["dtype"]])
    return out


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, config: ModelConfig, params, opt_state: OptimizerState | None = None, step: int = 0, extra: dict | None = None):
    doc = {"version": CHECKPOINT_VERSION, "config": asdict(config), "params": _pack(params)}
    if opt_state is not None:
        doc["opt_state"] = {"m": _pack(opt_state.m), "v": _pack(opt_state.v), "step": opt_state.step}
    doc["step"] = step
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path):
    """Returns ``(config, params, opt_state or None, step, extra)``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    config = ModelConfig(**doc["config"])
    params = _unpack(doc["params"])
    expected = param_shapes(config)
    for name, shape in expected.items():
        if name not in params or params[name].shape != shape:
            raise CheckpointError(f"parameter {name} missing or not of shape {shape}")
    opt = None
    if "opt_state" in doc:
        o = doc["opt_state"]
        opt = OptimizerState(_unpack(o["m"]), _unpack(o["v"]), o["step"])
    return config, params, opt, doc.get("step", 0), doc.get("extra", {})
