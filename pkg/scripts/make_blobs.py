#!/usr/bin/env python3
"""Generate synthetic Gaussian-blob datasets in the CSV ingestion format.

Example:
    python scripts/make_blobs.py --out-dir data --n-train 1000 --n-test 500 \
        --classes 2 --dim 2 --separation 8 --seed 100
"""

import argparse
from pathlib import Path

from llp_forge.bagging import gen_blobs, write_csv
from llp_forge.core import derive_seed


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="data")
    ap.add_argument("--n-train", type=int, default=1000, help="instances per class")
    ap.add_argument("--n-val", type=int, default=200)
    ap.add_argument("--n-test", type=int, default=500)
    ap.add_argument("--classes", type=int, default=2)
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--separation", type=float, default=8.0)
    ap.add_argument("--seed", type=int, default=100)
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = [("train", args.n_train), ("val", args.n_val), ("test", args.n_test)]
    for name, n in splits:
        if n <= 0:
            continue
        ds = gen_blobs(
            n, args.classes, args.dim, args.separation, seed=derive_seed(args.seed, name)
        )
        path = out / f"{name}.csv"
        write_csv(ds, path)
        print(f"wrote {path} ({ds.n} x {ds.dim}, {ds.num_classes} classes)")


if __name__ == "__main__":
    main()
