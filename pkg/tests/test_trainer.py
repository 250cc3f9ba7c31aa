import json

import numpy as np
import pytest

from llp_forge.bagging import gen_blobs
from llp_forge.core import DivergedLoss, InvalidArguments, KTooLarge, LabeledDataset
from llp_forge.metrics import confusion, weighted_prf
from llp_forge.model import forward_batch, predict_batch, save_checkpoint
from llp_forge.trainer import (
    TrainConfig,
    TrainHistory,
    history_to_csv,
    read_config_file,
    sweep,
    sweep_csv,
    train,
    validation_score,
)


def small_blobs(seed=1, n=128, sep=8.0, dim=2):
    return gen_blobs(n, 2, dim, sep, seed=seed)


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(InvalidArguments):
            TrainConfig(epochs=0)
        with pytest.raises(InvalidArguments):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(InvalidArguments):
            TrainConfig(alpha=0.0)
        with pytest.raises(InvalidArguments):
            TrainConfig(lambda_=-1.0)
        with pytest.raises(InvalidArguments):
            TrainConfig(optimizer="adamw")

    def test_clip_defaults(self):
        assert TrainConfig(loss_kind="dllp").resolved_grad_clip == 10.0
        assert TrainConfig(loss_kind="tvstar").resolved_grad_clip is None
        assert TrainConfig(loss_kind="tvstar", grad_clip=5.0).resolved_grad_clip == 5.0


class TestTrain:
    def test_deterministic_given_seed(self, tmp_path):
        ds = small_blobs()
        val = small_blobs(seed=2, n=32)
        cfg = TrainConfig(bag_size=8, epochs=4, learning_rate=0.05, seed=11)
        p1, h1 = train(ds, val, cfg)
        p2, h2 = train(ds, val, cfg)
        assert h1.train_loss == h2.train_loss
        assert h1.val_loss == h2.val_loss
        c1, c2 = tmp_path / "a.json", tmp_path / "b.json"
        save_checkpoint(p1, c1, cfg.to_dict())
        save_checkpoint(p2, c2, cfg.to_dict())
        assert c1.read_bytes() == c2.read_bytes()

    def test_history_lengths_match_epochs(self):
        ds = small_blobs()
        _, h = train(ds, None, TrainConfig(bag_size=16, epochs=3))
        assert h.epochs == 3
        assert len(h.val_loss) == len(h.seconds) == 3
        assert all(np.isnan(v) for v in h.val_loss)

    def test_validation_curve_recorded(self):
        ds = small_blobs()
        val = small_blobs(seed=3, n=64)
        _, h = train(ds, val, TrainConfig(bag_size=8, epochs=3))
        assert all(np.isfinite(v) for v in h.val_loss)

    def test_single_global_bag_matches_global_proportion(self):
        ds = gen_blobs(64, 2, 2, 1.0, seed=5)
        cfg = TrainConfig(bag_size=ds.n, epochs=60, learning_rate=0.1, seed=1)
        params, _ = train(ds, None, cfg)
        _, probs = forward_batch(params, ds.features)
        rho_tilde = probs.mean(axis=0)
        rho = np.bincount(ds.labels, minlength=2) / ds.n
        assert np.all(np.abs(rho_tilde - rho) < 0.05)

    def test_tvstar_bag_losses_bounded(self):
        ds = small_blobs(sep=1.0)
        for alpha in (1.0, 2.0):
            cfg = TrainConfig(bag_size=4, epochs=3, alpha=alpha, loss_kind="tvstar")
            _, h = train(ds, None, cfg)
            for epoch_losses in h.bag_losses:
                assert all(0.0 <= v <= 2.0 for v in epoch_losses)

    def test_dllp_blowup_vs_tvstar_on_identical_bags(self):
        # identical features and heavy class imbalance: the predictor is pushed
        # to the majority vertex, then a minority singleton bag arrives
        feats = np.ones((64, 2))
        labels = np.array([0] * 4 + [1] * 60)
        ds = LabeledDataset(feats, labels, 2)
        kw = dict(bag_size=1, epochs=5, learning_rate=1.0, optimizer="adaptive", seed=13)
        _, h_dllp = train(ds, None, TrainConfig(loss_kind="dllp", **kw))
        _, h_tv = train(ds, None, TrainConfig(loss_kind="tvstar", alpha=1.0, **kw))
        assert max(max(ep) for ep in h_dllp.bag_losses) > 10.0
        assert max(max(ep) for ep in h_tv.bag_losses) <= 2.0

    def test_diverged_loss_raised(self):
        ds = small_blobs()
        cfg = TrainConfig(
            bag_size=4, epochs=3, learning_rate=1e6, optimizer="sgd", loss_kind="dllp"
        )
        with pytest.raises(DivergedLoss):
            train(ds, None, cfg)

    def test_convergence_on_separable_blobs(self):
        ds = small_blobs(n=256)
        cfg = TrainConfig(bag_size=8, epochs=15, learning_rate=0.05, alpha=1.0, seed=3)
        params, h = train(ds, None, cfg)
        assert h.train_loss[-1] < 0.01
        test = small_blobs(seed=9, n=128)
        preds = predict_batch(params, test.features)
        assert weighted_prf(confusion(test.labels, preds, 2))[2] > 0.95

    def test_mlp_combined_trains(self):
        ds = small_blobs(n=96, sep=3.0)
        cfg = TrainConfig(
            bag_size=8, epochs=8, learning_rate=0.05, alpha=1.0, lambda_=0.5,
            loss_kind="combined", arch="mlp1", hidden_dim=8, seed=4,
        )
        params, h = train(ds, None, cfg)
        assert h.train_loss[-1] < h.train_loss[0]
        assert np.isfinite(h.train_loss).all()


class TestValidationScore:
    def _history(self, tr, vl):
        n = len(tr)
        return TrainHistory(tuple(tr), tuple(vl), tuple([0.0] * n))

    def test_constant_history(self):
        h = self._history([0.7] * 4, [0.7] * 4)
        assert validation_score(h, 2) == pytest.approx(1.4, abs=1e-12)

    def test_last_one(self):
        h = self._history([1.0, 0.5], [0.8, 0.4])
        assert validation_score(h, 1) == pytest.approx(0.9, abs=1e-12)

    def test_arithmetic(self):
        h = self._history([1.0, 0.5], [0.8, 0.4])
        assert validation_score(h, 2) == pytest.approx(1.35, abs=1e-12)

    def test_k_too_large(self):
        h = self._history([1.0], [0.5])
        with pytest.raises(KTooLarge):
            validation_score(h, 2)
        with pytest.raises(InvalidArguments):
            validation_score(h, 0)


class TestSweep:
    def test_row_cardinality_and_order(self):
        ds = small_blobs(n=64)
        test = small_blobs(seed=7, n=64)
        base = TrainConfig(bag_size=8, epochs=2, learning_rate=0.05)
        rows = sweep(ds, None, test, base, "bag_size", [2, 4], seeds=range(3))
        assert len(rows) == 6
        assert [(r.value, r.seed) for r in rows] == [
            (2.0, 0), (2.0, 1), (2.0, 2), (4.0, 0), (4.0, 1), (4.0, 2),
        ]
        assert all(0.0 <= r.w_f1 <= 1.0 for r in rows)

    def test_lambda_inert_for_linear(self):
        ds = small_blobs(n=64)
        test = small_blobs(seed=7, n=64)
        base = TrainConfig(
            bag_size=8, epochs=2, learning_rate=0.05, loss_kind="combined", arch="linear"
        )
        rows = sweep(ds, None, test, base, "lambda", [0.0, 0.5, 1.0], seeds=range(2))
        by_seed = {}
        for r in rows:
            by_seed.setdefault(r.seed, []).append((r.w_precision, r.w_recall, r.w_f1))
        for metrics in by_seed.values():
            assert all(m == metrics[0] for m in metrics)

    def test_alpha_axis_metrics_in_range(self):
        ds = small_blobs(n=64, sep=2.0)
        test = small_blobs(seed=7, n=64, sep=2.0)
        base = TrainConfig(bag_size=8, epochs=3, learning_rate=0.05)
        rows = sweep(ds, None, test, base, "alpha", [0.33, 0.5, 1, 2, 3.5], seeds=(0,))
        assert len(rows) == 5
        for r in rows:
            for v in (r.w_precision, r.w_recall, r.w_f1):
                assert 0.0 <= v <= 1.0

    def test_parallel_matches_sequential(self):
        ds = small_blobs(n=48)
        test = small_blobs(seed=7, n=48)
        base = TrainConfig(bag_size=8, epochs=2, learning_rate=0.05)
        seq = sweep(ds, None, test, base, "alpha", [0.5, 2.0], seeds=range(2), jobs=1)
        par = sweep(ds, None, test, base, "alpha", [0.5, 2.0], seeds=range(2), jobs=2)
        assert seq == par

    def test_csv_output(self, tmp_path):
        ds = small_blobs(n=48)
        test = small_blobs(seed=7, n=48)
        base = TrainConfig(bag_size=8, epochs=2)
        rows = sweep(ds, None, test, base, "alpha", [1.0], seeds=range(2))
        path = tmp_path / "sweep.csv"
        sweep_csv(rows, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "value,seed,w_p,w_r,w_f1"
        assert len(lines) == 3


class TestHistoryCsv:
    def test_format(self, tmp_path):
        h = TrainHistory((0.5, 0.25), (float("nan"), float("nan")), (0.01, 0.02))
        path = tmp_path / "h.csv"
        history_to_csv(h, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,seconds"
        assert lines[1].startswith("0,0.5,nan,")
        # every numeric field parses as float
        for line in lines[1:]:
            epoch, tr, vl, sec = line.split(",")
            int(epoch), float(tr), float(vl), float(sec)


class TestConfigFile:
    def test_parse(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# comment\n"
            "bag_size = 4\n"
            "epochs = 2\n"
            "lambda = 0.25  # inline comment\n"
            "loss_kind = combined\n"
        )
        cfg = read_config_file(path)
        assert cfg == {
            "bag_size": 4,
            "epochs": 2,
            "lambda_": 0.25,
            "loss_kind": "combined",
        }
        TrainConfig(**cfg)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("momentum = 0.9\n")
        with pytest.raises(InvalidArguments):
            read_config_file(path)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("epochs = soon\n")
        with pytest.raises(InvalidArguments):
            read_config_file(path)
