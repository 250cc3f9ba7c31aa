#!/usr/bin/env python3
"""Bag-size degradation study: tvstar vs dllp across growing bag sizes.

Produces the data behind a "metrics vs bag size" plot: one CSV row per
(loss, bag size, seed). Performance drops as bags grow because each epoch
carries both fewer optimizer steps and weaker proportion supervision.

Example:
    python scripts/bag_size_study.py --out bag_size_study.csv --seeds 5
"""

import argparse

import numpy as np

from llp_forge.bagging import gen_blobs
from llp_forge.trainer import TrainConfig, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="bag_size_study.csv")
    ap.add_argument("--values", default="2,4,8,16,32,64")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--n-per-class", type=int, default=256)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--separation", type=float, default=2.0)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--lr", type=float, default=0.05)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    values = [int(v) for v in args.values.split(",")]
    dtrain = gen_blobs(args.n_per_class, 2, args.dim, args.separation, seed=11)
    dtest = gen_blobs(1000, 2, args.dim, args.separation, seed=22)

    lines = ["loss,value,seed,w_p,w_r,w_f1"]
    summary = {}
    for kind in ("tvstar", "dllp"):
        base = TrainConfig(
            epochs=args.epochs, learning_rate=args.lr, alpha=1.0,
            optimizer="adaptive", loss_kind=kind, arch="linear",
        )
        rows = sweep(
            dtrain, None, dtest, base, "bag_size", values,
            seeds=range(args.seeds), jobs=args.jobs,
        )
        for r in rows:
            lines.append(
                f"{kind},{int(r.value)},{r.seed},{r.w_precision!r},{r.w_recall!r},{r.w_f1!r}"
            )
        summary[kind] = {
            v: float(np.mean([r.w_f1 for r in rows if r.value == v])) for v in values
        }

    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {args.out}")
    print("mean W-F1 by bag size:")
    print("  bag   tvstar   dllp")
    for v in values:
        print(f"  {v:4d}  {summary['tvstar'][v]:.4f}  {summary['dllp'][v]:.4f}")


if __name__ == "__main__":
    main()
