"""Command-line interface: train, eval, sweep, and check subcommands.

Exit-code contract: 0 success, 1 configuration error, 2 data error,
3 diverged training, 4 audit failure. Every run writes a manifest before
doing work and finalizes it on success, so shell harnesses can assert both
failure modes and output locations. Commands emit plot-ready CSV/JSON only;
no figures are rendered here.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, theory
from .bagging import load_csv, load_jsonl
from .core import DivergedLoss, InvalidArguments, LLPError
from .losses import kl_proportion_loss, tv_star_loss
from .metrics import confusion, metrics_csv_row, metrics_json
from .model import load_checkpoint, predict_batch, save_checkpoint
from .trainer import (
    SWEEP_AXES,
    TrainConfig,
    history_to_csv,
    read_config_file,
    sweep,
    sweep_csv,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3
EXIT_AUDIT = 4

OUT_ENV_VAR = "LLP_FORGE_OUT"


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _version_string() -> str:
    return f"llp-forge-v{__version__}"


def _load_dataset(path: str):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(path)
    if p.suffix == ".jsonl":
        return load_jsonl(p)
    return load_csv(p)


def _out_dir(args, command: str, seed: int | None = None) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        root = Path(os.environ.get(OUT_ENV_VAR, "runs"))
        name = command if seed is None else f"{command}-seed{seed}"
        out = root / name
    out.mkdir(parents=True, exist_ok=True)
    return out


class _Manifest:
    """Run manifest written before work starts and finalized afterwards."""

    def __init__(self, out_dir: Path, command: str, config: dict):
        self.path = out_dir / "manifest.json"
        self.started = time.time()
        self.doc = {
            "command": command,
            "config": config,
            "seed": config.get("seed"),
            "version": _version_string(),
            "status": "running",
            "outputs": [],
            "wall_clock_seconds": None,
        }
        self._write()

    def _write(self):
        self.path.write_text(json.dumps(self.doc, indent=2, sort_keys=True) + "\n")

    def finalize(self, outputs):
        self.doc["status"] = "ok"
        self.doc["outputs"] = [str(p) for p in outputs]
        self.doc["wall_clock_seconds"] = time.time() - self.started
        self._write()


_CONFIG_FLAGS = {
    "bag_size": int,
    "epochs": int,
    "learning_rate": float,
    "alpha": float,
    "lambda_": float,
    "optimizer": str,
    "seed": int,
    "loss_kind": str,
    "arch": str,
    "hidden_dim": int,
    "grad_clip": float,
}


def _resolve_config(args) -> TrainConfig:
    """Built-in defaults < config file < explicit command-line flags."""
    merged: dict = {}
    if args.config:
        if not Path(args.config).exists():
            raise FileNotFoundError(args.config)
        merged.update(read_config_file(args.config))
    for key in _CONFIG_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return TrainConfig(**merged)


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--bag-size", dest="bag_size", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", dest="learning_rate", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--lambda", dest="lambda_", type=float)
    parser.add_argument("--optimizer", choices=["sgd", "adaptive"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--loss", dest="loss_kind", choices=["dllp", "tvstar", "combined"])
    parser.add_argument("--arch", choices=["linear", "mlp1"])
    parser.add_argument("--hidden", dest="hidden_dim", type=int)
    parser.add_argument("--grad-clip", dest="grad_clip", type=float)
    parser.add_argument("--out", help=f"output directory (default ${OUT_ENV_VAR}/<run>)")


def cmd_train(args) -> int:
    try:
        config = _resolve_config(args)
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, f"config file not found: {exc}")
    except LLPError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        dataset = _load_dataset(args.data)
        val = _load_dataset(args.val) if args.val else None
    except FileNotFoundError as exc:
        return _fail(EXIT_DATA, f"no such data file: {exc}")
    except LLPError as exc:
        return _fail(EXIT_DATA, str(exc))

    out = _out_dir(args, "train", seed=config.seed)
    manifest = _Manifest(out, "train", config.to_dict())
    try:
        params, history = train(dataset, val, config)
    except DivergedLoss as exc:
        return _fail(EXIT_DIVERGED, f"training diverged: {exc}")
    except LLPError as exc:
        return _fail(EXIT_DATA, str(exc))
    checkpoint = out / "checkpoint.json"
    history_csv = out / "history.csv"
    save_checkpoint(params, checkpoint, config.to_dict())
    history_to_csv(history, history_csv)
    manifest.finalize([checkpoint, history_csv])
    print(json.dumps({
        "checkpoint": str(checkpoint),
        "history": str(history_csv),
        "final_train_loss": history.train_loss[-1],
    }))
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        if not Path(args.checkpoint).exists():
            raise FileNotFoundError(args.checkpoint)
        params, _ = load_checkpoint(args.checkpoint)
    except FileNotFoundError as exc:
        return _fail(EXIT_DATA, f"no such checkpoint: {exc}")
    except (LLPError, json.JSONDecodeError, KeyError) as exc:
        return _fail(EXIT_DATA, f"bad checkpoint {args.checkpoint}: {exc}")
    try:
        test = _load_dataset(args.test)
    except FileNotFoundError as exc:
        return _fail(EXIT_DATA, f"no such data file: {exc}")
    except LLPError as exc:
        return _fail(EXIT_DATA, str(exc))
    if test.dim != params.in_dim or test.num_classes != params.num_classes:
        return _fail(
            EXIT_DATA,
            f"checkpoint expects {params.in_dim} features / {params.num_classes} classes, "
            f"data has {test.dim} / {test.num_classes}",
        )
    out = _out_dir(args, "eval")
    manifest = _Manifest(out, "eval", {"checkpoint": args.checkpoint, "test": args.test, "seed": None})
    preds = predict_batch(params, test.features)
    cm = confusion(test.labels, preds, test.num_classes)
    payload = metrics_json(cm)
    (out / "metrics.json").write_text(payload + "\n")
    (out / "metrics.csv").write_text("w_p,w_r,w_f1\n" + metrics_csv_row(cm) + "\n")
    manifest.finalize([out / "metrics.json", out / "metrics.csv"])
    print(payload)
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        config = _resolve_config(args)
        axis = args.axis.replace("-", "_")
        if axis not in SWEEP_AXES:
            raise InvalidArguments(f"axis must be one of bag-size, alpha, lambda")
        values = [float(v) for v in args.values.split(",") if v != ""]
        if not values:
            raise InvalidArguments("--values must list at least one number")
        if args.seeds < 1:
            raise InvalidArguments("--seeds must be >= 1")
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, f"config file not found: {exc}")
    except (LLPError, ValueError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        dataset = _load_dataset(args.data)
        val = _load_dataset(args.val) if args.val else None
        test = _load_dataset(args.test)
    except FileNotFoundError as exc:
        return _fail(EXIT_DATA, f"no such data file: {exc}")
    except LLPError as exc:
        return _fail(EXIT_DATA, str(exc))
    out = _out_dir(args, "sweep", seed=config.seed)
    manifest = _Manifest(
        out, "sweep",
        {**config.to_dict(), "axis": axis, "values": values, "seeds": args.seeds},
    )
    try:
        rows = sweep(
            dataset, val, test, config, axis, values,
            seeds=range(args.seeds), jobs=args.jobs,
        )
    except DivergedLoss as exc:
        return _fail(EXIT_DIVERGED, f"a sweep trial diverged: {exc}")
    except LLPError as exc:
        return _fail(EXIT_DATA, str(exc))
    path = out / "sweep.csv"
    sweep_csv(rows, path)
    manifest.finalize([path])
    print(json.dumps({"sweep": str(path), "rows": len(rows)}))
    return EXIT_OK


AUDIT_NAMES = (
    "pinsker", "bounds", "symmetry", "monotonicity", "lipschitz", "gradcheck", "theorem",
)


def _audit_pinsker(args, rng_seed=0):
    report = {}
    ok = True
    for c in (2, 3):
        v = theory.pinsker_audit(args.pairs, num_classes=c, seed=rng_seed + c)
        report[f"violations_C{c}"] = v
        ok = ok and v == 0
    report["pairs_per_class_count"] = args.pairs
    return report, ok


def _audit_bounds(args, rng_seed=1):
    rng = np.random.default_rng(rng_seed)
    report, ok = {}, True
    for alpha in (1.0, 2.0, 3.5):
        worst = 0.0
        remaining = args.bound_pairs
        while remaining > 0:
            n = min(200_000, remaining)
            p = rng.dirichlet(np.ones(3), size=n)
            q = rng.dirichlet(np.ones(3), size=n)
            worst = max(worst, float(np.max(tv_star_loss(p, q, alpha))))
            remaining -= n
        report[f"max_loss_alpha_{alpha}"] = worst
        ok = ok and worst <= 2.0 + 1e-12
    return report, ok


def _audit_symmetry(args, rng_seed=2):
    rng = np.random.default_rng(rng_seed)
    p = rng.dirichlet(np.ones(4), size=args.pairs)
    q = rng.dirichlet(np.ones(4), size=args.pairs)
    ok = True
    for alpha in (0.5, 1.0, 2.0, 3.5):
        ok = ok and bool(
            np.array_equal(tv_star_loss(p, q, alpha), tv_star_loss(q, p, alpha))
        )
    kl_ab = kl_proportion_loss([0.9, 0.1], [0.2, 0.8])
    kl_ba = kl_proportion_loss([0.2, 0.8], [0.9, 0.1])
    return {"tv_star_bit_exact": ok, "kl_asymmetric": kl_ab != kl_ba}, ok and kl_ab != kl_ba


def _audit_monotonicity(args, rng_seed=3):
    rng = np.random.default_rng(rng_seed)
    p = rng.dirichlet(np.ones(3), size=args.pairs)
    q = rng.dirichlet(np.ones(3), size=args.pairs)
    alphas = (0.33, 0.5, 1.0, 2.0, 3.5)
    prev = tv_star_loss(p, q, alphas[0])
    ok = True
    for alpha in alphas[1:]:
        cur = tv_star_loss(p, q, alpha)
        ok = ok and bool(np.all(prev >= cur - 1e-12))
        prev = cur
    return {"alphas": list(alphas), "non_increasing": ok}, ok


def _audit_lipschitz(args, rng_seed=4):
    report, ok = {}, True
    for alpha in (1.0, 2.0, 3.5):
        vmax, gmax = theory.lipschitz_probe(alpha, n_pairs=20_000, seed=rng_seed)
        report[f"alpha_{alpha}"] = {"value_slope": vmax, "gradient_slope": gmax}
        ok = ok and np.isfinite(vmax) and np.isfinite(gmax)
    kl_slopes = theory.kl_slope_sequence()
    report["kl_slopes"] = kl_slopes
    ok = ok and kl_slopes == sorted(kl_slopes) and max(kl_slopes) > 100.0
    return report, ok


def _audit_gradcheck(args):
    rep = theory.gradient_check(seed=5)
    ok = rep["tv_star"] <= 1e-5 and rep["ssc"] <= 1e-5 and rep["backward"] <= 1e-4
    return rep, ok


def _audit_theorem(args):
    report, ok = {}, True
    for alpha in args.theorem_alphas:
        log = None
        if args.check_out is not None:
            log = args.check_out / f"theorem_trials_alpha{alpha}.csv"
        br = theory.theorem_mc_audit(
            args.m, args.delta, alpha, args.hypotheses, args.trials, seed=6,
            trial_log=log,
        )
        report[f"alpha_{alpha}"] = br.to_dict()
        if log is not None:
            report[f"trial_log_alpha_{alpha}"] = str(log)
        ok = ok and br.violation_fraction <= args.delta
    return report, ok


def cmd_check(args) -> int:
    try:
        if args.theorem:
            selected = ["theorem"]
        elif args.only:
            selected = []
            for name in args.only:
                if name not in AUDIT_NAMES:
                    raise InvalidArguments(
                        f"unknown audit {name!r}; choose from {', '.join(AUDIT_NAMES)}"
                    )
                selected.append(name)
        else:
            selected = list(AUDIT_NAMES)
        args.theorem_alphas = [float(a) for a in args.alphas.split(",")]
    except (LLPError, ValueError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    args.check_out = _out_dir(args, "check") if args.out else None

    runners = {
        "pinsker": _audit_pinsker,
        "bounds": _audit_bounds,
        "symmetry": _audit_symmetry,
        "monotonicity": _audit_monotonicity,
        "lipschitz": _audit_lipschitz,
        "gradcheck": _audit_gradcheck,
        "theorem": _audit_theorem,
    }
    report, failed = {}, []
    for name in selected:
        sub, ok = runners[name](args)
        report[name] = {"ok": ok, **sub}
        if not ok:
            failed.append(name)
    payload = json.dumps(report, indent=2, sort_keys=True)
    print(payload)
    if args.check_out is not None:
        (args.check_out / "check_report.json").write_text(payload + "\n")
    if failed:
        return _fail(EXIT_AUDIT, f"audit failed: {', '.join(failed)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llp-forge",
        description="Train, evaluate, and audit classifiers supervised by bag label proportions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a classifier from bag proportions")
    p_train.add_argument("--data", required=True, help="training set (.csv or .jsonl)")
    p_train.add_argument("--val", help="optional validation set")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="instance-level test evaluation of a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--test", required=True, help="labeled test set")
    p_eval.add_argument("--out")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="metric rows over a hyperparameter axis")
    p_sweep.add_argument("--axis", required=True, choices=["bag-size", "alpha", "lambda"])
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")
    p_sweep.add_argument("--seeds", type=int, default=1, help="number of seeds (0..N-1)")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel trial processes")
    p_sweep.add_argument("--data", required=True)
    p_sweep.add_argument("--val")
    p_sweep.add_argument("--test", required=True)
    _add_config_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_check = sub.add_parser("check", help="run the invariant and bound audit suite")
    p_check.add_argument("--only", action="append", help="run a single audit (repeatable)")
    p_check.add_argument("--theorem", action="store_true", help="run only the bound audit")
    p_check.add_argument("--m", type=int, default=1000, help="sample size per trial")
    p_check.add_argument("--delta", type=float, default=0.05)
    p_check.add_argument("--alphas", default="1,2", help="alpha grid for the bound audit")
    p_check.add_argument("--trials", type=int, default=1000)
    p_check.add_argument("--hypotheses", type=int, default=200)
    p_check.add_argument("--pairs", type=int, default=100_000, help="sampled pairs per audit")
    p_check.add_argument("--bound-pairs", dest="bound_pairs", type=int, default=1_000_000)
    p_check.add_argument("--out")
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
