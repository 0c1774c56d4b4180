#!/usr/bin/env python3
"""End-to-end demo on synthetic data.

Trains a small MLP, exports its feature bundle, retrains the lifted head and
evaluates both heads, all through the CLI so every artifact and manifest
lands in the output directory.
"""

import argparse
import sys
from pathlib import Path

from redense.cli import main as cli


def run(argv):
    code = cli(argv)
    if code != 0:
        sys.exit(code)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/pipeline")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--loss", default="ce")
    args = parser.parse_args()

    out = Path(args.out_dir)
    data = ["--synthetic", "blobs", "--samples", "600", "--classes", "3",
            "--noise", "0.5", "--seed", str(args.seed)]

    print("== train base model ==")
    run(["train", *data, "--hidden", "16", "--loss", args.loss,
         "--lr", "5e-3", "--epochs", "60", "--out-dir", str(out)])

    print("== export feature bundle ==")
    bundle = out / "features.rdfb"
    run(["features", "--model", str(out / "model.rdnm"), *data, "--out", str(bundle)])

    print("== retrain lifted head ==")
    run(["redense", "--bundle", str(bundle), "--model", str(out / "model.rdnm"),
         "--lr", "1e-2", "--epochs", "150", "--seed", str(args.seed),
         "--out-dir", str(out)])

    print("== evaluate with and without the lifted head ==")
    run(["eval", "--model", str(out / "model_with_redense.rdnm"), *data,
         "--out-dir", str(out)])


if __name__ == "__main__":
    main()
