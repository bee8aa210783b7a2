"""Training-loop behavior on a small synthetic dataset.

The slow multi-seed trend check lives in test_acceptance.py; these cover
the loop mechanics: logging, checkpointing, export, failure modes.
"""

import os

import numpy as np
import pytest
import torch

from gridforge_trainer.data import UnpairedGridDataset, load_grid_tensor
from gridforge_trainer.train import TrainConfig, Trainer, train


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    gridforge = pytest.importorskip("gridforge")
    from gridforge.errorsim import generate_dataset

    out = str(tmp_path_factory.mktemp("ds"))
    generate_dataset(6, out, master_seed=91, size=64)
    return out


class TestData:
    def test_value_mapping(self, small_dataset):
        names = [n for n in os.listdir(small_dataset) if n.endswith("_clean.png")]
        t = load_grid_tensor(os.path.join(small_dataset, names[0]), image_size=64)
        assert t.shape == (1, 64, 64)
        vals = np.unique(t.numpy())
        anchors = np.array([-1.0, 0.6, 1.0], dtype=np.float32)
        assert all(np.isclose(v, anchors, atol=1e-6).any() for v in vals)

    def test_resize_to_model_size(self, small_dataset):
        names = [n for n in os.listdir(small_dataset) if n.endswith("_err.png")]
        t = load_grid_tensor(os.path.join(small_dataset, names[0]), image_size=32)
        assert t.shape == (1, 32, 32)

    def test_epoch_serves_both_domains(self, small_dataset):
        ds = UnpairedGridDataset(small_dataset, image_size=64)
        rng = np.random.default_rng(0)
        batches = list(ds.epoch(rng))
        assert len(batches) == len(ds) == 6
        x, y = batches[0]
        assert x.shape == y.shape == (1, 1, 64, 64)

    def test_missing_dataset_raises(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(FileNotFoundError):
            UnpairedGridDataset(str(empty))


class TestLoop:
    def test_two_epochs_log_checkpoint_export(self, small_dataset, tmp_path):
        out = str(tmp_path / "run")
        config = TrainConfig(epochs=2, image_size=64, disc_base=8, n_patches=16,
                             seed=3, preset="tiny")
        history = train(config, small_dataset, out)
        assert len(history) == 2
        assert os.path.isfile(os.path.join(out, "training_log.csv"))
        assert os.path.isfile(os.path.join(out, "generator.gsm"))
        assert os.path.isfile(os.path.join(out, "checkpoint_0001.pt"))
        log = open(os.path.join(out, "training_log.csv")).read().splitlines()
        assert log[0].startswith("epoch,g_total")
        assert len(log) == 3

    def test_nonfinite_loss_aborts_with_location(self, small_dataset):
        config = TrainConfig(epochs=1, image_size=64, disc_base=8, n_patches=16, seed=4)
        trainer = Trainer(config)
        with torch.no_grad():  # poison one weight; the loop must notice and name the step
            trainer.gen.parameterized[0][1].weight[0, 0, 0, 0] = float("nan")
        ds = UnpairedGridDataset(small_dataset, image_size=64)
        rng = np.random.default_rng(0)
        with pytest.raises(FloatingPointError, match="epoch 0 step 0"):
            trainer.train_epoch(ds, 0, rng)

    def test_lr_decays_linearly_to_zero(self):
        config = TrainConfig(epochs=4, image_size=64, disc_base=8, n_patches=16)
        trainer = Trainer(config)
        rates = [trainer._set_lr(e) for e in range(4)]
        assert rates == pytest.approx([2e-4, 1.5e-4, 1e-4, 0.5e-4])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(tau=0.0)
        with pytest.raises(ValueError):
            TrainConfig(n_patches=1)
