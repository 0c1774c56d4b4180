#!/usr/bin/env python3
"""Desk-scale digit-image experiment through the IDX pathway.

Uses real MNIST IDX files when REDENSE_MNIST_DIR points at them, otherwise
writes a generated digit-image corpus at the same scale, then runs
train -> features -> redense -> eval end to end.
"""

import argparse
import os
from pathlib import Path

from redense.cli import main as cli
from redense.data import gen_digit_images, write_idx


def idx_files(out):
    mnist_dir = os.environ.get("REDENSE_MNIST_DIR")
    if mnist_dir:
        base = Path(mnist_dir)
        return (base / "train-images-idx3-ubyte", base / "train-labels-idx1-ubyte",
                base / "t10k-images-idx3-ubyte", base / "t10k-labels-idx1-ubyte")
    out.mkdir(parents=True, exist_ok=True)
    paths = (out / "train-images", out / "train-labels",
             out / "test-images", out / "test-labels")
    if not all(p.exists() for p in paths):
        images, labels = gen_digit_images(12_000, seed=2024)
        write_idx(paths[0], paths[1], images[:10_000], labels[:10_000])
        write_idx(paths[2], paths[3], images[10_000:], labels[10_000:])
    return paths


def run(argv):
    code = cli(argv)
    assert code == 0, f"command failed with exit {code}: {argv}"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/digits")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--redense-epochs", type=int, default=200)
    parser.add_argument("--redense-lr", type=float, default=1e-5)
    args = parser.parse_args()

    out = Path(args.out_dir)
    tri, trl, tei, tel = idx_files(out / "data")

    print("== train base model ==")
    run(["train", "--images", str(tri), "--labels", str(trl),
         "--test-images", str(tei), "--test-labels", str(tel),
         "--hidden", "64", "--loss", "ce", "--lr", "1e-3",
         "--epochs", str(args.epochs), "--batch-size", "128",
         "--seed", str(args.seed), "--out-dir", str(out)])

    print("== export bundles ==")
    train_bundle = out / "train.rdfb"
    test_bundle = out / "test.rdfb"
    run(["features", "--model", str(out / "model.rdnm"), "--images", str(tri),
         "--labels", str(trl), "--no-split", "--out", str(train_bundle)])
    run(["features", "--model", str(out / "model.rdnm"), "--images", str(tei),
         "--labels", str(tel), "--no-split", "--out", str(test_bundle)])

    print("== retrain lifted head ==")
    run(["redense", "--bundle", str(train_bundle), "--eval-bundle", str(test_bundle),
         "--model", str(out / "model.rdnm"), "--lr", str(args.redense_lr),
         "--epochs", str(args.redense_epochs), "--seed", str(args.seed),
         "--out-dir", str(out)])

    print("== compare heads on the test set ==")
    run(["eval", "--model", str(out / "model_with_redense.rdnm"),
         "--images", str(tei), "--labels", str(tel), "--out-dir", str(out)])


if __name__ == "__main__":
    main()
