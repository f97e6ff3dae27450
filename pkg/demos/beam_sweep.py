"""Compares greedy decoding with beam search on an untrained toy model.

Wider beams usually find outputs at least as probable as narrower ones,
and on some inputs greedy decoding misses a much better sequence. Beam
width 1 is exactly greedy decoding.

Run with ``python demos/beam_sweep.py``.
"""

import numpy as np

from ocdkit.decode_metrics import beam_search, greedy_decode
from ocdkit.toy_model import ModelConfig, Seq2Seq

model = Seq2Seq(ModelConfig(vocab_size=6, embed_dim=8, hidden_dim=16, use_attention=True, seed=4))
rng = np.random.default_rng(0)
inputs = [rng.integers(0, 4, 5).tolist() for _ in range(5)]

print(f"{'input':<18}" + "".join(f"beam {b:<6}" for b in (1, 2, 4, 8, 16)))
for x in inputs:
    scores = [beam_search(model, x, b, max_len=12).logprob for b in (1, 2, 4, 8, 16)]
    print(f"{str(x):<18}" + "".join(f"{s:<11.3f}" for s in scores))

g = greedy_decode(model, inputs[0], 12)
b1 = beam_search(model, inputs[0], 1, 12)
print()
print("greedy:", g.tokens, f"{g.logprob:.4f}")
print("beam 1:", b1.tokens, f"{b1.logprob:.4f}")
