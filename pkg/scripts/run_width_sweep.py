#!/usr/bin/env python3
"""Projection-width experiment.

Sweeps the random projection width m over multiples of the feature width n
and reports how the constraint radius and the retrained losses move. Wider
projections shrink the radius (the pseudo-inverse of a taller Gaussian
matrix is smaller), which tightens the head against overfitting.
"""

import argparse
from collections import defaultdict
from pathlib import Path

import numpy as np

from redense.cli import main as cli


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/width_sweep")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--multiples", default="1,2,3,4")
    args = parser.parse_args()

    out = Path(args.out_dir)
    data = ["--synthetic", "blobs", "--samples", "400", "--classes", "4",
            "--noise", "0.6", "--seed", str(args.seed)]
    assert cli(["train", *data, "--hidden", "16", "--lr", "5e-3", "--epochs", "60",
                "--out-dir", str(out)]) == 0
    bundle = out / "features.rdfb"
    assert cli(["features", "--model", str(out / "model.rdnm"), *data,
                "--out", str(bundle)]) == 0

    n = 16
    m_values = ",".join(str(n * int(k)) for k in args.multiples.split(","))
    assert cli(["sweep-m", "--bundle", str(bundle), "--m-values", m_values,
                "--seeds", str(args.seeds), "--lr", "1e-3", "--epochs", "50",
                "--seed", str(args.seed), "--out-dir", str(out)]) == 0

    by_m = defaultdict(lambda: defaultdict(list))
    for line in (out / "sweep.csv").read_text().strip().splitlines()[1:]:
        m, _seed, eps, final_loss, acc = line.split(",")
        by_m[int(m)]["eps"].append(float(eps))
        by_m[int(m)]["loss"].append(float(final_loss))
        by_m[int(m)]["acc"].append(float(acc))

    print(f"\n{'m':>6} {'mean eps':>12} {'mean final loss':>16} {'mean accuracy':>14}")
    for m in sorted(by_m):
        stats = by_m[m]
        print(f"{m:>6} {np.mean(stats['eps']):>12.4f} "
              f"{np.mean(stats['loss']):>16.4f} {np.mean(stats['acc']):>14.4f}")


if __name__ == "__main__":
    main()
