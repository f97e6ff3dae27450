"""Command-line entry point: ``ocdkit {qvalues,gen,train,eval,oracle-check}``.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ocdkit import decode_metrics as dm
from ocdkit.edit_q import distance_rows, row_targets
from ocdkit.oracle import oracle_check
from ocdkit.tasks import TASKS, DatasetError, Vocab, generate_dataset, load_dataset, load_vocab, save_dataset, save_vocab
from ocdkit.toy_model import CheckpointError, Seq2Seq, load_checkpoint
from ocdkit.training import ConfigError, TrainConfig, train

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_USAGE


# -- qvalues --------------------------------------------------------------


def _resolve_vocab(source: str | None, fallback: str) -> Vocab:
    if source is None:
        chars = sorted(set(fallback) - {" "})
        return Vocab(tuple(chars) or ("?",), space=" " if " " in fallback else None)
    if Path(source).is_file():
        return load_vocab(source)
    return Vocab(tuple(c for c in source if c != " "), space=" " if " " in source else None)


def qvalue_rows(hyp: str, ref: str, vocab: Vocab) -> list[dict]:
    """One record per prefix of ``hyp``: prefix, row minimum, optimal set and its Q-value."""
    h, r = vocab.encode(hyp), vocab.encode(ref)
    eos = vocab.eos_id
    rows = []
    for i, dist in enumerate(distance_rows(h, r)):
        q = row_targets(dist, r, eos)
        # list in reference order, eos last
        ordered = []
        for j, tok in enumerate(r):
            if dist[j] == q.m and tok not in ordered:
                ordered.append(tok)
        if eos in q.optimal:
            ordered.append(eos)
        rows.append({"prefix": hyp[:i], "m": q.m, "optimal": [vocab.token_name(t) for t in ordered], "q": -q.m})
    return rows


def cmd_qvalues(args) -> int:
    hyp = args.hyp if args.hyp is not None else args.hyp_pos
    ref = args.ref if args.ref is not None else args.ref_pos
    if hyp is None or ref is None:
        return _fail("qvalues needs a hypothesis and a reference")
    try:
        vocab = _resolve_vocab(args.vocab, hyp + ref)
        rows = qvalue_rows(hyp, ref, vocab)
    except DatasetError as e:
        return _fail(str(e))
    if args.format == "json":
        print(json.dumps({"rows": rows}, ensure_ascii=False))
        return EXIT_OK
    width = max(len("prefix"), max(len(r["prefix"]) for r in rows))
    print(f"{'prefix':<{width}}  {'m':>3}  {'Q':>4}  optimal")
    for r in rows:
        print(f"{r['prefix']!s:<{width}}  {r['m']:>3}  {r['q']:>4}  {{{', '.join(r['optimal'])}}}")
    return EXIT_OK


# -- gen ------------------------------------------------------------------


def cmd_gen(args) -> int:
    if not (args.out or args.out_dir):
        return _fail("gen needs --out or --out-dir")
    try:
        vocab = load_vocab(args.vocab) if args.vocab and Path(args.vocab).is_file() else Vocab.of(
            args.vocab or "abcdefgh", space=args.task == "word_reverse" or args.space
        )
        if args.out:
            recs = generate_dataset(args.task, args.n, (args.min_len, args.max_len), vocab, args.seed, args.k)
            save_dataset(recs, args.out)
            return EXIT_OK
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for offset, (name, n) in enumerate((("train", args.n_train), ("val", args.n_val), ("test", args.n_test))):
            recs = generate_dataset(args.task, n, (args.min_len, args.max_len), vocab, args.seed * 1000 + offset, args.k)
            save_dataset(recs, out / f"{name}.jsonl")
        save_vocab(vocab, out / "vocab.json")
    except ValueError as e:
        return _fail(str(e))
    return EXIT_OK


# -- train ----------------------------------------------------------------


TRAIN_OVERRIDES = ("method", "steps", "seed", "lr", "batch_size", "eval_every", "beam", "train_eval_n", "tau", "label_smoothing", "plateau_patience")
PATH_KEYS = ("train_data", "val_data", "vocab", "out_dir")


def load_train_config(path, overrides: dict) -> tuple[TrainConfig, dict]:
    """Reads a JSON config and applies command-line overrides (which win).

    Returns the validated :class:`TrainConfig` and the data/output paths.
    """
    raw = json.loads(Path(path).read_text(encoding="utf-8")) if path else {}
    base = Path(path).parent if path else Path(".")
    paths = {}
    for key in PATH_KEYS:
        if overrides.get(key):
            paths[key] = overrides.pop(key)
        elif raw.get(key):
            paths[key] = str(base / raw[key])
        overrides.pop(key, None)
        raw.pop(key, None)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    missing = [k for k in PATH_KEYS if k not in paths]
    if missing:
        raise ConfigError("invalid config:\n  " + "\n  ".join(f"{k}: required" for k in missing))
    vocab = load_vocab(paths["vocab"])
    model = dict(raw.get("model") or {})
    model.setdefault("vocab_size", vocab.size)
    model.setdefault("seed", raw.get("seed", 0))
    raw["model"] = model
    cfg = TrainConfig.from_json(raw)
    cfg.validate()
    return cfg, paths


def _as_pairs(records, vocab):
    return [(vocab.encode(r.x), vocab.encode(r.y)) for r in records]


def cmd_train(args) -> int:
    overrides = {k: getattr(args, k) for k in TRAIN_OVERRIDES}
    for key in PATH_KEYS:
        if getattr(args, key, None):
            overrides[key] = getattr(args, key)
    try:
        cfg, paths = load_train_config(args.config, overrides)
        vocab = load_vocab(paths["vocab"])
        tr = _as_pairs(load_dataset(paths["train_data"], vocab), vocab)
        va = _as_pairs(load_dataset(paths["val_data"], vocab), vocab)
        if not tr or not va:
            raise ConfigError("invalid config:\n  train_data/val_data: dataset is empty")
    except (ConfigError, DatasetError, OSError, json.JSONDecodeError) as e:
        return _fail(str(e))
    result = train(cfg, tr, va, vocab, paths["out_dir"], log_every=args.log_every)
    print(f"best val CER {result.best_val_cer:.4f} at step {result.best_step}")
    return EXIT_FAIL if result.nonfinite else EXIT_OK


# -- eval -----------------------------------------------------------------


def cmd_eval(args) -> int:
    try:
        config, params, _, step, extra = load_checkpoint(args.ckpt)
        vocab = load_vocab(args.vocab) if args.vocab else Vocab.from_json(extra["vocab"])
        if vocab.size != config.vocab_size:
            raise CheckpointError(f"vocabulary size {vocab.size} does not match checkpoint {config.vocab_size}")
        data = _as_pairs(load_dataset(args.data, vocab), vocab)
        beams = [int(b) for b in args.beam_list.split(",") if b.strip()]
        if not beams or min(beams) < 1:
            raise ValueError("--beam-list needs positive integers")
    except (CheckpointError, DatasetError, KeyError, OSError, ValueError) as e:
        return _fail(str(e))
    if not data:
        return _fail("dataset is empty")
    model = Seq2Seq(config, params)
    rows = dm.evaluate(model, data, beams, space_token=vocab.space_id)
    text = dm.metrics_csv_header(f"checkpoint {args.ckpt}")
    for m in rows:
        text += dm.format_row({"step": step, "split": args.split, "loss": "", "cer": m.cer, "wer": m.wer, "prefix_mismatch": "", "p_sample": "", "beam": m.beam})
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- oracle-check -----------------------------------------------------------


def cmd_oracle_check(args) -> int:
    report = oracle_check(args.trials, args.vocab, args.max_len, args.seed)
    print(report.to_json() if args.json else report.to_text())
    return EXIT_OK if report.ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocdkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("qvalues", help="print optimal extensions for every hypothesis prefix")
    q.add_argument("hyp_pos", nargs="?", metavar="HYP")
    q.add_argument("ref_pos", nargs="?", metavar="REF")
    q.add_argument("--hyp")
    q.add_argument("--ref")
    q.add_argument("--vocab", help="vocabulary JSON file or a string of allowed characters")
    q.add_argument("--format", choices=("table", "json"), default="table")
    q.set_defaults(func=cmd_qvalues)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--task", choices=TASKS, required=True)
    g.add_argument("--out", help="write a single JSONL file with --n records")
    g.add_argument("--out-dir", help="write train/val/test JSONL plus vocab.json")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--n-train", type=int, default=2000)
    g.add_argument("--n-val", type=int, default=200)
    g.add_argument("--n-test", type=int, default=200)
    g.add_argument("--min-len", type=int, default=3)
    g.add_argument("--max-len", type=int, default=12)
    g.add_argument("--vocab", help="vocabulary JSON file or content characters (default abcdefgh)")
    g.add_argument("--space", action="store_true", help="add a space token to the vocabulary")
    g.add_argument("--k", type=int, default=1, help="shift for rot_k")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train the toy model with one method")
    t.add_argument("config", nargs="?", help="JSON training config")
    t.add_argument("--method")
    t.add_argument("--steps", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--eval-every", type=int)
    t.add_argument("--beam", type=int)
    t.add_argument("--train-eval-n", type=int)
    t.add_argument("--tau", type=float)
    t.add_argument("--label-smoothing", type=float)
    t.add_argument("--plateau-patience", type=int)
    t.add_argument("--train-data")
    t.add_argument("--val-data")
    t.add_argument("--vocab")
    t.add_argument("--out-dir")
    t.add_argument("--log-every", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="corpus CER/WER of a checkpoint for several beam widths")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--beam-list", default="16")
    e.add_argument("--vocab")
    e.add_argument("--split", default="eval")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("oracle-check", help="compare the Q-value kernel with brute force")
    o.add_argument("--trials", type=int, default=500)
    o.add_argument("--vocab", type=int, default=4)
    o.add_argument("--max-len", type=int, default=6)
    o.add_argument("--seed", type=int, default=1)
    o.add_argument("--json", action="store_true")
    o.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
