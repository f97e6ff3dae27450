"""Trains the toy encoder-decoder to reverse strings, with MLE and with OCD.

MLE always conditions on the ground-truth prefix. OCD instead samples a
full output from the current model and, at every step of that sample,
teaches the tokens that keep the final edit distance as small as possible.
No pretraining is needed: OCD starts from random weights.

Run with ``python demos/train_reverse_ocd_vs_mle.py [steps]`` (default 1500;
well under a minute per method).
"""

import sys
import time

from ocdkit.decode_metrics import greedy_decode
from ocdkit.tasks import Vocab, generate_dataset
from ocdkit.toy_model import ModelConfig
from ocdkit.training import TrainConfig, train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 1500

vocab = Vocab.of("abcdefgh")


def encode(records):
    return [(vocab.encode(r.x), vocab.encode(r.y)) for r in records]


train_pairs = encode(generate_dataset("reverse", 2000, (5, 10), vocab, seed=1))
val_pairs = encode(generate_dataset("reverse", 200, (5, 10), vocab, seed=2))
print("example:", generate_dataset("reverse", 1, (5, 10), vocab, seed=1)[0])

for method in ("mle", "ocd"):
    config = TrainConfig(
        method=method,
        steps=steps,
        lr=0.003,
        eval_every=250,
        beam=1,
        model=ModelConfig(vocab_size=vocab.size, use_attention=True, seed=0),
    )
    start = time.perf_counter()
    result = train(config, train_pairs, val_pairs, vocab)
    print(f"\n{method.upper()} ({time.perf_counter() - start:.0f} s)")
    for row in result.rows:
        if row["split"] == "val":
            print(f"  step {row['step']:>5}  val CER {row['cer']:.4f}  train-prefix mismatch {row['prefix_mismatch']:.3f}")

    model = result.model
    x = val_pairs[0][0]
    out = greedy_decode(model, x, 2 * len(x) + 10)
    print(f"  {vocab.decode(x)!r} -> {vocab.decode(out.tokens)!r}")
