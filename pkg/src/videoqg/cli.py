"""``videoqg`` command line.

Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
3 data error, 4 numeric failure. Failures print one line to stderr,
``error: <ErrorClass>: <message>``.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError, ScenarioError

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _config(args):
    from .config import load_config

    return load_config(getattr(args, "config", None) or getattr(args, "spec", None), args.set)


def cmd_gen_data(args) -> int:
    from .data import generate_synthetic, write_dataset

    spec = _config(args).data
    dataset = generate_synthetic(spec)
    write_dataset(dataset, args.out)
    counts = {s: len(dataset.indices(s)) for s in ("train", "val", "test")}
    print(f"wrote {len(dataset)} clips to {args.out} ({', '.join(f'{k} {v}' for k, v in counts.items())})")
    return EXIT_OK


def cmd_train(args) -> int:
    from dataclasses import replace

    from .checkpoint import capture, save_checkpoint
    from .data import read_dataset
    from .models import build_model
    from .training import make_optimizer, train

    cfg = _config(args)
    settings = replace(cfg.model, kind=args.model) if args.model else cfg.model
    settings.validate()
    dataset = read_dataset(args.data)
    model = build_model(settings.spec_for(dataset))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.train.rng_seed)
    optimizer = make_optimizer(model, cfg.train)
    with open(out / "metrics.jsonl", "w", encoding="utf-8") as log:
        result = train(model, dataset.split("train"), cfg.train, dataset.split("val"), log, optimizer, rng)
    save_checkpoint(capture(model, optimizer, result.steps, rng), out / "model.ckpt")
    summary = {
        "model": settings.kind,
        "steps": result.steps,
        "best_step": result.best_step,
        "best_val_loss": result.best_val_loss,
        "final_train_loss": result.final_train_loss,
        "stopped_early": result.stopped_early,
    }
    _dump(out / "summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_generate(args) -> int:
    from .checkpoint import load_checkpoint
    from .data import read_dataset

    dataset = read_dataset(args.data)
    model = load_checkpoint(args.checkpoint).model()
    idx = dataset.indices(args.split)
    clips = [dataset.clips[i] for i in idx]
    generated = []
    for start in range(0, len(clips), 64):
        generated += model.generate(clips[start:start + 64], args.beam, args.max_len, args.alpha)
    lines = [" ".join(dataset.question_vocab.decode(g)) for g in generated]
    Path(args.out).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    if args.refs:
        refs = [" ".join(dataset.question_vocab.decode(dataset.clips[i].question)) for i in idx]
        Path(args.refs).write_text("".join(r + "\n" for r in refs), encoding="utf-8")
    print(f"generated {len(lines)} questions for split {args.split} -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .metrics.correctness import evaluate, read_corpus

    shown = evaluate(read_corpus(args.hyp, args.ref)).display()
    labels = {"bleu1": "BLEU", "bleu4": "BLEU-4", "rouge_l": "ROUGE-L", "cider": "CIDEr", "meteor": "METEOR"}
    for key, label in labels.items():
        print(f"{label:8s}{shown[key]:8.2f}")
    if args.out:
        _dump(Path(args.out), shown)
    return EXIT_OK


def cmd_diversity(args) -> int:
    from .metrics.diversity import build_stats, coverage_grid, format_grid, parse_tagged
    from .metrics.text import tokenize

    def load(path):
        lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
        if args.tagged:
            parsed = [parse_tagged(line) for line in lines]
            return build_stats([t for t, _ in parsed], tags=[g for _, g in parsed])
        return build_stats([tokenize(line) for line in lines])

    stats = load(args.input)
    reference = load(args.reference) if args.reference else None
    grid = coverage_grid(stats, args.percent, reference)
    print(format_grid(grid, Path(args.input).name))
    if args.out:
        _dump(Path(args.out), {cat: [[p, v] for p, v in row.items()] for cat, row in grid.items()})
    return EXIT_OK


def cmd_grad_check(args) -> int:
    from .config import ModelSettings
    from .data import SyntheticTaskSpec, generate_synthetic
    from .decoder import DecoderConfig
    from .encoder import EncoderConfig
    from .features import make_batch
    from .gradcheck import check_model, check_ops
    from .models import BaselineConfig, build_model

    results = check_ops(args.seed)
    dataset = generate_synthetic(SyntheticTaskSpec(n_examples=8, frame_dim=12, rng_seed=args.seed))
    settings = ModelSettings(
        kind=args.model, d_embed=8, init_seed=args.seed,
        encoder=EncoderConfig(d_model=16, n_heads=2, n_layers=1, ffn_dim=24),
        decoder=DecoderConfig(d_word=8, d_dec=16, n_layers=1),
        baseline=BaselineConfig(d_hidden=16, n_layers=1),
    )
    settings.validate()
    model = build_model(settings.spec_for(dataset))
    results += check_model(model, make_batch(dataset.clips[:3]), n_params=args.params, seed=args.seed)
    failed = [r for r in results if not r.ok]
    for r in results:
        print(f"{'ok  ' if r.ok else 'FAIL'} {r.name:48s} rel_err={r.error:.3e} tol={r.tolerance:g}")
    if failed:
        raise NumericError(f"{len(failed)} gradient check(s) failed, first: {failed[0].name}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .ablation import run_ablation
    from .data import generate_synthetic, read_dataset

    cfg = _config(args)
    dataset = read_dataset(args.data) if args.data else generate_synthetic(cfg.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(r):
        print(f"  {r['config']} seed {r['seed']}: entity_em={100 * r['entity_em']:.1f} "
              f"action_em={100 * r['action_em']:.1f} bleu4={100 * r['bleu4']:.2f}", file=sys.stderr)

    report = run_ablation(dataset, cfg.ablate.configs, cfg.ablate.seeds, cfg.model, cfg.train, cfg.eval, progress)
    (out / "report.jsonl").write_text(report.to_jsonl(), encoding="utf-8")
    text = report.render()
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_report(args) -> int:
    from .ablation import AblationReport

    print(AblationReport.from_jsonl(Path(args.input).read_text(encoding="utf-8")).render(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="videoqg", description="Video question generation on synthetic data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p, flag="--config"):
        p.add_argument(flag, help="INI config file with [data] [model] [train] [eval] [ablate] sections")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value; repeatable, wins over the file")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    with_config(p, "--spec")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model")
    with_config(p)
    p.add_argument("--model", choices=("srcmsa", "s2vt", "imgd"))
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode questions with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--max-len", type=int, default=20)
    p.add_argument("--alpha", type=float, default=0.0, help="length normalisation exponent")
    p.add_argument("--out", required=True)
    p.add_argument("--refs", help="also write the gold questions here")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="BLEU, BLEU-4, ROUGE-L, CIDEr, METEOR of a hypothesis file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True, help="one line per hypothesis; tab-separated references")
    p.add_argument("--out", help="write the scores as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diversity", help="frequent word coverage grid")
    p.add_argument("--input", required=True)
    p.add_argument("--percent", type=float, nargs="+", default=[0.1, 1.0, 10.0])
    p.add_argument("--tagged", action="store_true", help="input tokens are written token/TAG")
    p.add_argument("--reference", help="rank frequent types in this corpus instead of the input")
    p.add_argument("--out", help="write the grid as JSON")
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("grad-check", help="finite-difference check of every op and a fresh model")
    p.add_argument("--model", default="srcmsa", choices=("srcmsa", "s2vt", "imgd"))
    p.add_argument("--params", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("ablate", help="train and compare the baseline and ablation configurations")
    with_config(p)
    p.add_argument("--data", help="use this dataset instead of generating one from [data]")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="re-render an ablation report from its report.jsonl")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def exit_code(exc: BaseException) -> int:
    from .data import DatasetFormatError

    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, (DatasetFormatError, ScenarioError, OSError, UnicodeDecodeError, ValueError, KeyError, IndexError)):
        return EXIT_DATA
    return EXIT_OTHER


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one parseable line
        message = str(exc).splitlines()[0] if str(exc) else ""
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
