#!/usr/bin/env python3
"""Hyperparameter variation study: sweep the loss exponent or the auxiliary weight.

Emits one CSV row per (value, seed); the alpha axis uses the bounded
proportion loss alone, the lambda axis uses the combined objective on the
mlp so the contrastive term actually reaches trainable parameters.

Examples:
    python scripts/hparam_study.py --axis alpha --values 0.33,0.5,1,2,2.5,3.5
    python scripts/hparam_study.py --axis lambda --values 0,1e-4,1e-2,0.1,1
"""

import argparse

from llp_forge.bagging import gen_blobs
from llp_forge.trainer import TrainConfig, sweep, sweep_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--axis", choices=["alpha", "lambda"], default="alpha")
    ap.add_argument("--values", default="0.33,0.5,1,2,2.5,3.5")
    ap.add_argument("--out", default=None)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--n-per-class", type=int, default=256)
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--separation", type=float, default=2.0)
    ap.add_argument("--bag-size", type=int, default=8)
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--lr", type=float, default=0.05)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    values = [float(v) for v in args.values.split(",")]
    dtrain = gen_blobs(args.n_per_class, 2, args.dim, args.separation, seed=33)
    dtest = gen_blobs(1000, 2, args.dim, args.separation, seed=44)

    if args.axis == "alpha":
        base = TrainConfig(
            bag_size=args.bag_size, epochs=args.epochs, learning_rate=args.lr,
            loss_kind="tvstar", arch="linear",
        )
    else:
        base = TrainConfig(
            bag_size=args.bag_size, epochs=args.epochs, learning_rate=args.lr,
            alpha=1.0, loss_kind="combined", arch="mlp1", hidden_dim=16,
        )
    rows = sweep(
        dtrain, None, dtest, base, args.axis, values,
        seeds=range(args.seeds), jobs=args.jobs,
    )
    out = args.out or f"{args.axis}_study.csv"
    sweep_csv(rows, out)
    print(f"wrote {out} ({len(rows)} rows)")


if __name__ == "__main__":
    main()
