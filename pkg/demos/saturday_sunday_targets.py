"""Walks through the optimal next-token sets for a misspelled hypothesis.

The model wrote "SATURDAY" but the reference is "SUNDAY". After every prefix
of the hypothesis we ask: which tokens can still lead to a completion with
the smallest possible edit distance? Those tokens form the training target.

Run with ``python demos/saturday_sunday_targets.py``.
"""

from ocdkit import EOS, policy_targets, q_values
from ocdkit.edit_q import prefix_distance_table
from ocdkit.oracle import oracle_q_suffix

hyp, ref = "SATURDAY", "SUNDAY"

# The prefix distance table: row i compares hyp[:i] with every prefix of ref.
print("prefix edit distances (rows: hypothesis prefixes, columns: reference prefixes)")
print(prefix_distance_table(hyp, ref))
print()

# Each row's minimum m is the best final distance still reachable, and the
# optimal tokens are those that follow the reference prefixes attaining it.
table = q_values(hyp, ref)
print(f"{'prefix':<10}{'m':>3}  optimal")
for i, row in enumerate(table):
    order = [c for c in dict.fromkeys(ref) if c in row.optimal] + ([EOS] if EOS in row.optimal else [])
    print(f"{hyp[:i]:<10}{row.m:>3}  {{{', '.join(order)}}}")
print()

# Cross-check one row by brute force: extend "SA" by each token, then append
# the best reference suffix. Stopping (eos) is not two-valued: its true Q is
# minus the full edit distance, which can fall below -m - 1.
print("brute-force Q('SA', a):", {a: oracle_q_suffix("SA", a, ref) for a in sorted(set(ref)) + [EOS]})
print()

# Hard targets spread probability uniformly over each optimal set.
symbols = sorted(set(hyp + ref)) + [EOS]
ids = {s: i for i, s in enumerate(symbols)}
id_table = q_values([ids[c] for c in hyp], [ids[c] for c in ref], eos=ids[EOS])
probs = policy_targets(id_table, len(symbols)).probs
print("target distribution over", symbols)
for i, p in enumerate(probs):
    print(f"{hyp[:i]:<10}", " ".join(f"{x:.2f}" for x in p))
