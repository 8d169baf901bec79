"""
Desk-scale training runs on synthetic data.

These take minutes; set STNET_RUN_SLOW=1 to run them.
"""
import os
import unittest

import numpy as np

from src.data.dataset import split
from src.data.synthetic import gen_synthetic
from src.evaluation.metrics import binarize, uniform_patch_fraction
from src.main import evaluate_model, train_model
from src.training.checkpoint import encode_checkpoint
from src.training.inference import predict_image
from src.utils.config import RunConfig

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")
RUN_SLOW = os.getenv("STNET_RUN_SLOW") == "1"


def load_config(name, **overrides):
    path = os.path.join(CONFIG_DIR, name)
    return RunConfig(path, env_file=os.devnull, overrides=dict(threads=1, **overrides)).validate()


def boundary_uniformity(model, samples, normalize=True):
    """Mean uniform fraction over patches that straddle an object boundary."""
    fractions = [
        uniform_patch_fraction(
            binarize(predict_image(model, s.image, normalize=normalize)), model.K, model.dims, reference=s.mask,
        )
        for s in samples
    ]
    return float(np.nanmean(fractions))


@unittest.skipUnless(RUN_SLOW, "set STNET_RUN_SLOW=1 to run desk-scale training")
class TestSyntheticBlobs2D(unittest.TestCase):
    """200 blob images of 64 x 64, K=8, bond dimension 8."""

    @classmethod
    def setUpClass(cls):
        cls.config = load_config("acceptance.json")
        cls.samples = gen_synthetic(200, 64, seed=42)
        _, val_set, _ = split(cls.samples, cls.config.split, cls.config.seed)
        cls.first_epoch = {}

        def callback(epoch, model, state):
            if epoch == 1:
                cls.first_epoch["uniformity"] = boundary_uniformity(model, val_set)

        cls.trainer, cls.best, cls.history, cls.test_set = train_model(cls.config, cls.samples, callback=callback)
        cls.val_set = val_set

    def test_validation_dice(self):
        self.assertGreaterEqual(self.trainer.state.best_val_dice, 0.90)
        self.assertLessEqual(self.trainer.state.epoch, 100)

    def test_test_dice(self):
        report, _ = evaluate_model(self.best, self.test_set, threads=1)
        self.assertGreaterEqual(report.mean_dice, 0.88)

    def test_train_loss_decreases(self):
        losses = self.history["train_loss"].to_numpy()
        self.assertLess(losses[-1], losses[0])
        self.assertTrue(np.all(np.isfinite(self.history[["train_loss", "val_loss"]].to_numpy())))
        self.assertTrue(self.best.is_finite())

    def test_predictions_refine_from_patches_to_pixels(self):
        self.assertGreaterEqual(self.first_epoch["uniformity"], 0.5)
        self.assertLess(boundary_uniformity(self.best, self.val_set), 0.5)


@unittest.skipUnless(RUN_SLOW, "set STNET_RUN_SLOW=1 to run desk-scale training")
class TestSyntheticBlobs3D(unittest.TestCase):
    """Volumes of 32^3 with K=4 and bond dimension 4."""

    def test_volume_training(self):
        config = load_config("volumes_3d.json")
        samples = gen_synthetic(40, 32, seed=42, dims=3)
        _, best, history, test_set = train_model(config, samples)
        self.assertLessEqual(len(history), 50)
        self.assertTrue(best.is_finite())
        report, _ = evaluate_model(best, test_set, threads=1)
        self.assertGreaterEqual(report.mean_dice, 0.75)


@unittest.skipUnless(RUN_SLOW, "set STNET_RUN_SLOW=1 to run desk-scale training")
class TestReproducibleTraining(unittest.TestCase):
    """Identical runs write identical checkpoints."""

    def test_checkpoints_are_identical(self):
        samples = gen_synthetic(30, 32, seed=42)
        encoded = []
        for _ in range(2):
            config = load_config("acceptance.json", max_epochs=5, patience=5)
            trainer, best, _, _ = train_model(config, samples)
            metadata = {"config": config.to_dict(), "training": trainer.summary()}
            encoded.append(encode_checkpoint(best, metadata))
        self.assertEqual(encoded[0], encoded[1])


if __name__ == '__main__':
    unittest.main()
