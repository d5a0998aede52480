"""Command-line entry point: ``metaforge <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .corpus import chunk_document, load_manifest
from .evaluation import load_ground_truth
from .pipeline import (ConfigError, Resources, RunConfig, dump_json, make_client, run_eval,
                       run_extract, run_grade, run_report, run_train, select_context, table_row)
from .reranker import Hyperparams
from .template import load_template

log = logging.getLogger("metaforge")


def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="run configuration (JSON)")
    p.add_argument("--strategy", choices=("baseline", "ner_borda", "reranker", "oracle"))
    p.add_argument("--budget", type=int, help="context budget in tokens")
    p.add_argument("--mode", choices=("plain", "cot"))
    p.add_argument("--tool-use", type=_bool, metavar="BOOL")
    p.add_argument("--max-retries", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--model", dest="model_path", help="re-ranker model file")
    p.add_argument("--grading", type=_bool, metavar="BOOL")
    p.add_argument("--workers", type=int)
    p.add_argument("--adopt-corrections", action="store_true", default=None,
                   help="replace agent values with the judge's corrections")


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    overrides = {
        "strategy": args.strategy, "budget_tokens": args.budget, "mode": args.mode,
        "tool_use": args.tool_use, "max_retries": args.max_retries, "seed": args.seed,
        "out": args.out, "model_path": args.model_path, "grading": args.grading,
        "workers": args.workers, "adopt_corrections": args.adopt_corrections,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def cmd_chunk(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "chunks.jsonl", "w", encoding="utf-8") as fh:
        for doc in load_manifest(cfg.corpus):
            for chunk in chunk_document(doc, cfg.chunk_tokens, cfg.overlap_tokens):
                fh.write(json.dumps(chunk.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    print(out / "chunks.jsonl")
    return 0


def cmd_select(args) -> int:
    cfg = _config(args)
    cfg.validate()
    res = Resources.load(cfg)
    out = Path(cfg.out)
    for doc in res.documents:
        _, scores, context = select_context(doc, res)
        dump_json(out / "contexts" / f"{doc.id}.json", context.to_dict())
        dump_json(out / "scores" / f"{doc.id}.json", scores.to_dict())
    dump_json(out / "config.resolved.json", dict(cfg.to_dict(), template_resolved=res.template.to_dict()))
    print(out)
    return 0


def cmd_extract(args) -> int:
    cfg = _config(args)
    summary = run_extract(cfg)
    for doc_id in summary.failures:
        print(f"failed: {doc_id}", file=sys.stderr)
    print(summary.out_dir)
    return summary.exit_code


def cmd_eval(args) -> int:
    truth = load_ground_truth(args.truth)
    template = load_template(args.template) if args.template else None
    summary = run_eval(args.run, truth, template, args.out)
    print(table_row(summary))
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    hp = Hyperparams(learning_rate=args.learning_rate, epochs=args.epochs,
                     batch_size=args.batch_size, seed=cfg.seed,
                     class_weight=None if args.class_weight == "none" else args.class_weight)
    metrics = run_train(cfg, hp, train_fraction=args.train_fraction,
                        test_fraction=args.test_fraction, save_pairs=args.save_pairs)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def cmd_grade(args) -> int:
    cfg = _config(args)
    truth = load_ground_truth(cfg.ground_truth) if cfg.ground_truth else None
    judge = make_client(cfg.judge, truth, judge=True)
    template = load_template(args.template) if args.template else None
    reports = run_grade(args.run, judge, template, cfg.judge.get("model", ""))
    print(f"graded {len(reports)} document(s)")
    return 0


def cmd_report(args) -> int:
    template = load_template(args.template) if args.template else None
    report = run_report(args.run, template, args.out)
    print(report.to_json())
    return 0


def cmd_convert_cuad(args) -> int:
    from .cuad import convert_cuad_file
    print(convert_cuad_file(args.input, args.out))
    return 0


def cmd_synth(args) -> int:
    from .synthetic import write_synthetic
    print(write_synthetic(args.out, args.n_docs, args.seed))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metaforge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (
        ("chunk", cmd_chunk, "write chunks.jsonl for the corpus"),
        ("select", cmd_select, "write selected contexts and score matrices"),
        ("extract", cmd_extract, "select, extract and optionally grade every document"),
    ):
        p = sub.add_parser(name, help=helptext)
        _run_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("eval", help="score a run directory against ground truth")
    p.add_argument("--run", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--template")
    p.add_argument("--out", help="defaults to the run directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="train the chunk re-ranker")
    _run_flags(p)
    p.add_argument("--epochs", type=int, default=Hyperparams.epochs)
    p.add_argument("--learning-rate", type=float, default=Hyperparams.learning_rate)
    p.add_argument("--batch-size", type=int, default=Hyperparams.batch_size)
    p.add_argument("--class-weight", choices=("balanced", "none"), default="balanced")
    p.add_argument("--train-fraction", type=float, default=0.10)
    p.add_argument("--test-fraction", type=float, default=0.05)
    p.add_argument("--save-pairs", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grade", help="grade an existing run with the configured judge")
    _run_flags(p)
    p.add_argument("--run", required=True)
    p.add_argument("--template")
    p.set_defaults(func=cmd_grade)

    p = sub.add_parser("report", help="aggregate monitoring report (JSON and CSV)")
    p.add_argument("--run", required=True)
    p.add_argument("--template")
    p.add_argument("--out", help="defaults to the run directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("convert-cuad", help="convert CUAD annotations to manifest + ground truth")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert_cuad)

    p = sub.add_parser("synth", help="write a synthetic contract corpus with a mock-client config")
    p.add_argument("--out", required=True)
    p.add_argument("--n-docs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
