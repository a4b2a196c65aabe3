#!/usr/bin/env python3
"""End-to-end demo on the synthetic two-domain fixture.

Generates the fixture, trains the three run variants (two-stage,
clean-labels-only, weak-labels-only), assembles the transfer matrix over
both domains' test splits, and prints the markdown report. Everything
goes through the CLI, so the artifacts land in <workdir>/out/ exactly as
a manual run would produce them.

Usage: python scripts/run_synth_transfer.py [--workdir DIR] [--seed N] [--full]

By default a reduced fixture is used (~30 s). --full switches to the
5000/300/500 corpus used by the acceptance suite.
"""

import argparse
import sys
import tempfile
from pathlib import Path

from xferlab.cli import main as xferlab

TRAIN_COMMON = """\
seed = {seed}
output_dir = out
encoder.kind = hashed
encoder.dim = {dim}
encoder.ngram_max = 2
plan.train.lr = 3e-3
plan.train.max_epochs = 200
"""

RUNS = {
    "two_stage": (
        "source.wld = manifests/a_wld.jsonl\n"
        "source.fld = manifests/a_fld_train.jsonl\n"
        "plan.pretrain.lr = 2e-3\n"
        "plan.pretrain.epochs = 4\n"
    ),
    "fld_only": "source.fld = manifests/a_fld_train.jsonl\n",
    "wld_only": "source.wld = manifests/a_wld.jsonl\n",
}


def run(workdir: Path, seed: int, full: bool) -> int:
    synth_args = ["synth", "--out", str(workdir), "--seed", str(seed)]
    dim = 2**14
    if not full:
        synth_args += [
            "--wld-size", "2500",
            "--fld-pool-size", "600",
            "--fld-train-fraction", "0.5",
            "--target-test-size", "300",
        ]
        dim = 2**13
    if xferlab(synth_args) != 0:
        return 1

    for name, source_lines in RUNS.items():
        cfg = workdir / f"{name}.cfg"
        cfg.write_text(
            TRAIN_COMMON.format(seed=seed, dim=dim) + f"name = {name}\n" + source_lines
        )
        print(f"== training {name}")
        if xferlab(["train", "--config", str(cfg)]) != 0:
            return 1

    grid = workdir / "grid.cfg"
    grid.write_text(
        f"name = grid\nseed = {seed}\noutput_dir = out\n"
        f"encoder.kind = hashed\nencoder.dim = {dim}\nencoder.ngram_max = 2\n"
        + "".join(f"runs.{name} = out/checkpoints/{name}.ckpt\n" for name in RUNS)
        + "targets.a_test = manifests/a_fld_test.jsonl\n"
        + "targets.b_test = manifests/b_fld_test.jsonl\n"
    )
    print("== transfer matrix")
    rc = xferlab(["matrix", "--config", str(grid)])
    if rc != 0:
        return rc

    print()
    print((workdir / "out" / "reports" / "grid.md").read_text())
    print(f"artifacts under {workdir / 'out'}")
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default=None, help="default: a fresh temp dir")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--full", action="store_true", help="acceptance-scale fixture")
    args = parser.parse_args()
    workdir = Path(args.workdir) if args.workdir else Path(tempfile.mkdtemp(prefix="xferlab_"))
    workdir.mkdir(parents=True, exist_ok=True)
    sys.exit(run(workdir, args.seed, args.full))
