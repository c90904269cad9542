"""Command-line entry point: ``lexcrf <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from .errors import LexCRFError


def _write_jsonl(rows, path):
    if path is None or path == "-":
        for row in rows:
            sys.stdout.write(json.dumps(row, ensure_ascii=False) + "\n")
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def cmd_train(args) -> int:
    from .config import TrainConfig, load_config, parse_config_text
    from .data import load_jsonl
    from .io import save_model
    from .training import train

    config = load_config(args.config) if args.config else TrainConfig()
    if args.set:
        overrides = parse_config_text("\n".join(args.set))
        config = TrainConfig.from_dict({**config.to_dict(), **overrides})
    train_set = load_jsonl(args.train)
    dev_set = load_jsonl(args.dev) if args.dev else []
    ck = train(config, train_set, dev_set, metrics_path=args.metrics)
    save_model(args.out, ck)
    print(json.dumps({"saved": str(args.out), "best_epoch": ck.epoch, "dev_f1": ck.dev_f1}))
    return 0


def cmd_predict(args) -> int:
    from .data import CorpusRecord, load_jsonl
    from .decode import predict
    from .io import load_model

    ck = load_model(args.model)
    if args.decode_penalty is not None:
        ck.config.decode_penalty = args.decode_penalty
        ck.config.validate()
    model = ck.model()
    records = load_jsonl(args.input)
    preds = predict(model, [r.tokens for r in records], args.batch_size)
    _write_jsonl((CorpusRecord(r.tokens, p.entities).to_json() for r, p in zip(records, preds)),
                 args.output)
    return 0


def cmd_evaluate(args) -> int:
    from .data import load_jsonl
    from .evaluate import metrics_f1

    gold, pred = load_jsonl(args.gold), load_jsonl(args.pred)
    report = metrics_f1(pred, gold)
    print(json.dumps(report.to_dict(), indent=None if args.compact else 2))
    return 0


def cmd_inspect(args) -> int:
    from .chart import inside_eisner_satta
    from .decode import viterbi_lexicalized
    from .marginals import backward_marginals
    from .types import ScoreSet

    if args.model:
        from .io import load_model

        if not args.tokens:
            raise LexCRFError("inspect --model needs --tokens")
        model = load_model(args.model).model()
        tokens = args.tokens.split()
        with torch.no_grad():
            span, arc, _ = model.scores(model.encode([tokens]))
        scores = ScoreSet(span[0], arc[0])
        scheme = model.config.scheme
    else:
        rng = np.random.default_rng(args.seed)
        scores = ScoreSet.random(args.random, rng)
        tokens = [f"w{k}" for k in range(args.random)]
        scheme = "01"
    n = scores.n
    log_z, chart = inside_eisner_satta(scores, "free", scheme=scheme)
    marg = backward_marginals(chart)
    tree = viterbi_lexicalized(scores, scheme=scheme)
    spans = []
    for i in range(n):
        for j in range(i, n):
            spans.append({
                "span": [i, j], "text": " ".join(tokens[i:j + 1]),
                "occurrence": round(float(marg.span_occurrence[i, j]), 6),
                "label_marginals": [round(float(x), 6) for x in marg.span_mu[i, j]],
                "alpha": [round(float(x), 6) for x in marg.alpha(i, j)] if marg.span_occurrence[i, j] > 0 else None,
            })
    out = {
        "tokens": tokens,
        "log_z": float(log_z.detach()),
        "spans": spans,
        "viterbi": {
            "score": tree.score,
            "constituents": [{"span": [c.i, c.j], "label": c.label, "head": c.head, "role": c.role}
                             for c in tree.constituents],
            "arcs": sorted([p, ch] for p, ch in tree.arcs),
        },
    }
    print(json.dumps(out, indent=2))
    return 0


def cmd_synth(args) -> int:
    from .data import dump_jsonl
    from .synth import generate_synthetic_corpus, synthetic_splits

    if args.out_dir:
        tr, dev, te = synthetic_splits(args.seed, args.train_size, args.dev_size, args.test_size)
        out = Path(args.out_dir)
        for name, recs in (("train", tr), ("dev", dev), ("test", te)):
            dump_jsonl(recs, out / f"{name}.jsonl")
        return 0
    recs = generate_synthetic_corpus(args.seed, args.size)
    _write_jsonl((r.to_json() for r in recs), args.out)
    return 0


def cmd_oracle_check(args) -> int:
    from .checks import run_oracle_checks

    results = run_oracle_checks(args.trials, args.n_min, args.n_max, args.seed)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("all checks passed" if ok else "some checks FAILED")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lexcrf", description="Nested NER as lexicalized constituency parsing.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from JSONL corpora")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--metrics", help="per-epoch JSONL metrics file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="tag sentences from a JSONL file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="output JSONL (default: stdout)")
    p.add_argument("--decode-penalty", type=float, help="head-sharing penalty applied at decode time")
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--compact", action="store_true", help="single-line JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="print log Z, marginals, alpha and the Viterbi tree")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--random", type=int, metavar="N", help="random scores for an N-token sentence")
    p.add_argument("--tokens", help="whitespace-separated sentence (with --model)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("synth", help="write a synthetic nested-NER corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=100)
    p.add_argument("--out", help="output JSONL (default: stdout)")
    p.add_argument("--out-dir", help="write train/dev/test splits here instead")
    p.add_argument("--train-size", type=int, default=2000)
    p.add_argument("--dev-size", type=int, default=200)
    p.add_argument("--test-size", type=int, default=200)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("oracle-check", help="compare the chart against brute force on random fixtures")
    p.add_argument("--n-min", type=int, default=2)
    p.add_argument("--n-max", type=int, default=5)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (LexCRFError, OSError, ValueError) as exc:
        print(f"lexcrf {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
