"""Command-line entry points: prepare, train, eval, matrix, synth.

Every command is reproducible: the same inputs and seed produce
checksum-identical outputs, so no artifact ever carries a wall-clock
timestamp. Output trees follow a fixed layout under the run's
output_dir: manifests/, checkpoints/, records/, reports/. The
XFERLAB_OUT environment variable overrides output_dir everywhere.

Exit codes: 0 success, 1 validation failure, 2 runtime failure,
3 matrix completed with failed cells.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import corpus, evaluation, model, synth
from .config import OUTPUT_DIR_ENV, ExperimentConfig
from .errors import ValidationError, XferError
from .featurize import FrozenEmbeddingEncoder, HashedNgramEncoder, load_embedding_file
from .trainer import run_baseline_wld_only, run_two_stage

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3


def _out_dir(flag_value: str | None, default: str = "out") -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV) or flag_value or default)


def cmd_prepare(args: argparse.Namespace) -> int:
    reviews = corpus.load_corpus(args.input, args.format)
    name = args.name or Path(args.input).stem
    out = _out_dir(args.out)
    manifest_dir = out / "manifests"

    if args.kind == "wld":
        if args.train_fraction is not None:
            raise ValidationError("WLDs are not split; drop --train-fraction")
        ds = corpus.build_wld(reviews, args.domain, name=name)
        corpus.save_manifest(ds, manifest_dir / f"{name}.jsonl", seed=args.seed)
        written = [manifest_dir / f"{name}.jsonl"]
        stats_of = {"all": corpus.stats(ds)}
    else:
        fraction = 0.85 if args.train_fraction is None else args.train_fraction
        ds = corpus.build_fld(reviews, args.domain, name=name)
        train, test = corpus.split(ds, fraction, args.seed)
        corpus.save_manifest(
            train, manifest_dir / f"{name}_train.jsonl", seed=args.seed, train_fraction=fraction
        )
        corpus.save_manifest(
            test, manifest_dir / f"{name}_test.jsonl", seed=args.seed, train_fraction=fraction
        )
        written = [manifest_dir / f"{name}_train.jsonl", manifest_dir / f"{name}_test.jsonl"]
        stats_of = {"train": corpus.stats(train), "test": corpus.stats(test)}

    stats_path = manifest_dir / f"{name}_stats.json"
    with open(stats_path, "w", encoding="utf-8") as fh:
        json.dump({k: corpus.stats_to_json(v) for k, v in stats_of.items()}, fh, indent=2)
        fh.write("\n")
    for p in [*written, stats_path]:
        print(f"wrote {p}")
    return EXIT_OK


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    if not args.config:
        raise ValidationError("--config is required")
    return ExperimentConfig.from_file(args.config, seed_override=args.seed)


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    encoder = cfg.build_encoder()
    ckpt_dir = cfg.output_dir / "checkpoints"
    rec_dir = cfg.output_dir / "records"

    wld = corpus.load_manifest(cfg.wld_path) if cfg.wld_path else None
    fld = corpus.load_manifest(cfg.fld_path) if cfg.fld_path else None
    if wld is None and fld is None:
        raise ValidationError("config needs source.wld and/or source.fld")

    initial = None
    plan = cfg.plan
    if args.resume:
        if fld is None:
            raise ValidationError("--resume only applies to runs with a source.fld")
        loaded, header = model.load_checkpoint(args.resume)
        if header.get("stage") != "pretrain":
            raise ValidationError(
                f"--resume expects a pretrain-stage checkpoint, got {header.get('stage')!r}"
            )
        if header["encoder"] != encoder.describe():
            raise ValidationError(
                f"checkpoint encoder {header['encoder']} != config encoder {encoder.describe()}"
            )
        initial = loaded
        plan = replace(plan, pretrain=None)

    if fld is None:
        params, record = run_baseline_wld_only(
            wld, plan.train, encoder, cfg.seed,
            convergence=plan.convergence,
            hidden_dims=cfg.hidden_dims, optimizer=cfg.optimizer,
        )
    else:
        def save_pretrain(stage_params):
            path = ckpt_dir / f"{cfg.name}.pretrain.ckpt"
            model.save_checkpoint(stage_params, path, encoder.describe(), cfg.seed, "pretrain")
            print(f"wrote {path}")

        params, record = run_two_stage(
            plan, wld, fld, encoder, cfg.seed,
            hidden_dims=cfg.hidden_dims, optimizer=cfg.optimizer,
            initial_params=initial, on_pretrain_end=save_pretrain,
        )

    final_path = ckpt_dir / f"{cfg.name}.ckpt"
    model.save_checkpoint(params, final_path, encoder.describe(), cfg.seed, "train")
    record_path = rec_dir / f"{cfg.name}.record.json"
    record.save(record_path)
    print(f"wrote {final_path}")
    print(f"wrote {record_path}")
    return EXIT_OK


def _encoder_for_checkpoint(header: dict, embeddings: str | None):
    spec = header.get("encoder", {})
    kind = spec.get("kind")
    if kind == "hashed":
        return HashedNgramEncoder(int(spec["dim"]), int(spec["ngram_max"]))
    if kind == "frozen":
        if not embeddings:
            raise ValidationError(
                "checkpoint was trained on frozen embeddings; pass --embeddings"
            )
        table = load_embedding_file(embeddings)
        if table.dim != int(spec["dim"]):
            raise ValidationError(
                f"embedding file dim {table.dim} != checkpoint encoder dim {spec['dim']}"
            )
        return FrozenEmbeddingEncoder(table)
    raise ValidationError(f"checkpoint has unknown encoder kind {kind!r}")


def cmd_eval(args: argparse.Namespace) -> int:
    params, header = model.load_checkpoint(args.checkpoint)
    encoder = _encoder_for_checkpoint(header, args.embeddings)
    test = corpus.load_manifest(args.target)
    counts, pair = evaluation.evaluate(params, encoder, test)
    payload = {
        "accuracy": pair.accuracy,
        "f1": pair.f1,
        "f1_macro": evaluation.macro_f1(counts),
        "confusion": {"tp": counts.tp, "fp": counts.fp, "tn": counts.tn, "fn": counts.fn},
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_matrix(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if not cfg.runs:
        raise ValidationError("matrix config needs at least one runs.<label> entry")
    if not cfg.targets:
        raise ValidationError("matrix config needs at least one targets.<label> entry")
    encoder = cfg.build_encoder()
    runs = []
    for label, ckpt_path in cfg.runs:
        params, header = model.load_checkpoint(ckpt_path)
        if header.get("encoder") != encoder.describe():
            raise ValidationError(
                f"run {label!r}: checkpoint encoder {header.get('encoder')} "
                f"!= config encoder {encoder.describe()}"
            )
        runs.append((label, params))
    targets = [(label, corpus.load_manifest(p)) for label, p in cfg.targets]

    report = evaluation.transfer_matrix(
        runs,
        targets,
        encoder,
        metadata={"seed": cfg.seed, "encoder": encoder.describe()},
        jobs=args.jobs,
    )
    report_dir = cfg.output_dir / "reports"
    report_dir.mkdir(parents=True, exist_ok=True)
    formats = ["csv", "markdown"] if args.format == "both" else [args.format]
    for fmt in formats:
        suffix = "csv" if fmt == "csv" else "md"
        path = report_dir / f"{cfg.name}.{suffix}"
        path.write_text(evaluation.render_report(report, fmt), encoding="utf-8")
        print(f"wrote {path}")
    if report.any_failed:
        failed = [st for st, cell in report.cells.items() if cell.failed]
        print(f"{len(failed)} cell(s) failed: {failed}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = synth.SynthSpec(
        seed=args.seed,
        wld_size=args.wld_size,
        fld_pool_size=args.fld_pool_size,
        fld_train_fraction=args.fld_train_fraction,
        target_test_size=args.target_test_size,
        noise_rate=args.noise_rate,
    )
    paths = synth.write_fixture(spec, _out_dir(args.out))
    for p in paths.values():
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xferlab",
        description="Train sentiment classifiers on weak star-rating labels plus a "
        "small labeled corpus, and score how they transfer across domains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build dataset manifests from a raw corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.add_argument("--kind", choices=["wld", "fld"], required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--train-fraction", type=float, default=None)
    p.add_argument("--out", default=None, help="output dir (default ./out)")
    p.add_argument("--name", default=None, help="manifest base name (default input stem)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="run two-stage training or a baseline from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--resume", default=None, help="pretrain-stage checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on one test manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--embeddings", default=None, help="WSEB file for frozen-encoder checkpoints")
    p.add_argument("--out", default=None, help="also write the metrics JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("matrix", help="evaluate every run on every target split")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--format", choices=["csv", "markdown", "both"], default="both")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("synth", help="emit the synthetic two-domain fixture")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--wld-size", type=int, default=5000)
    p.add_argument("--fld-pool-size", type=int, default=800)
    p.add_argument("--fld-train-fraction", type=float, default=0.375)
    p.add_argument("--target-test-size", type=int, default=500)
    p.add_argument("--noise-rate", type=float, default=0.20)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except XferError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
