"""
Epoch loop: seeded shuffling, minibatches of images, patch-parallel
forward/backward, Adam updates, validation Dice early stopping.
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from src.data.dataset import augment, check_samples
from src.data.images import normalize_image
from src.evaluation.metrics import DEFAULT_THRESHOLD, dice
from src.features.featuremaps import LocalFeatureMap
from src.features.patching import PatchGrid, ravel, unravel
from src.training.inference import (
    chunk_slices, foreground, parallel_map, patch_features, predict_logits,
)
from src.training.losses import CROSS_ENTROPY, LOSSES, get_loss, sigmoid
from src.training.optimizer import AdamState, adam_step
from src.utils.errors import ConfigurationError, NumericError

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "val_dice"]

# Separate random stream for shuffling/augmentation so it never aliases the
# initialization stream of the same seed
SHUFFLE_STREAM = 1


@dataclass
class TrainConfig:
    """
    Optimization settings.

    Args:
        lr (float): Adam learning rate
        batch_size (int): Images per minibatch
        max_epochs (int): Epoch limit
        patience (int): Stop after this many epochs without val Dice improvement
        loss (str): "cross-entropy" or "dice"
        seed (int): Shuffle/augmentation seed
        deterministic (bool): Fixed patch chunking and ordered reductions
        clip_norm (float or None): Global gradient norm limit
        augment (bool): Random flips/rotations with p=0.5
        threads (int): Worker threads for patch evaluation
        normalize (bool): Min-max normalize every image
    """

    lr: float = 5e-4
    batch_size: int = 4
    max_epochs: int = 300
    patience: int = 10
    loss: str = CROSS_ENTROPY
    seed: int = 0
    deterministic: bool = True
    clip_norm: float = 1.0
    augment: bool = False
    threads: int = 1
    normalize: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.lr > 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigurationError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 0 <= self.patience <= self.max_epochs:
            raise ConfigurationError(
                f"patience must be in [0, max_epochs={self.max_epochs}], got {self.patience}"
            )
        if self.loss not in LOSSES:
            raise ConfigurationError(f"Unknown loss '{self.loss}'; expected one of {', '.join(LOSSES)}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ConfigurationError(f"clip_norm must be positive or null, got {self.clip_norm}")
        if self.threads is not None and self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")


@dataclass
class TrainState:
    """Mutable training progress."""

    adam: AdamState = field(default_factory=AdamState)
    epoch: int = 0
    best_val_dice: float = -math.inf
    best_val_dice_std: float = math.nan
    best_epoch: int = 0
    epochs_since_improvement: int = 0
    epoch_seconds: list = field(default_factory=list)
    rng: np.random.Generator = None

    @property
    def mean_epoch_seconds(self):
        return float(np.mean(self.epoch_seconds)) if self.epoch_seconds else 0.0


def mask_targets(mask, K, dims, M):
    """
    Per-patch targets [patch_count, K**dims * M] for a binary mask.

    M = 1 gives the mask itself; M = 2 gives (background, foreground)
    one-hot pairs, pixel-major. Pad pixels are background.
    """
    _, patches = ravel(np.asarray(mask, dtype=np.float64), K, dims=dims)
    fg = patches[..., 0]
    if M == 1:
        return fg
    if M == 2:
        return np.stack([1.0 - fg, fg], axis=-1).reshape(fg.shape[0], -1)
    raise ConfigurationError(f"Binary masks support M in (1, 2), got M={M}")


def batch_loss_and_gradients(model, features, targets, loss_name, images=1, threads=1,
                             deterministic=True):
    """
    Loss and parameter gradients over a stack of patches.

    Cross-entropy is the per-patch mean summed over patches and averaged
    over images; Dice pools every patch. Chunk results are reduced in chunk
    order, so the gradient is a pure function of the inputs when chunking
    is fixed.

    Args:
        model (MPSModel): Model
        features (np.ndarray): [B, N, C*d]
        targets (np.ndarray): [B, P]
        loss_name (str): Loss config name
        images (int): Number of images the patches came from
        threads (int): Worker threads
        deterministic (bool): Fixed chunk size independent of threads

    Returns:
        tuple: (loss, logits [B, P], gradients in parameters() order)
    """
    count = len(features)
    if deterministic or not threads or threads <= 1:
        slices = chunk_slices(count)
    else:
        slices = chunk_slices(count, max(1, -(-count // threads)))

    def forward_chunk(s):
        cache = model.environments(features[s])
        return model.forward(features[s], cache), cache

    forwards = parallel_map(forward_chunk, slices, threads)
    logits = np.concatenate([f[0] for f in forwards], axis=0)

    loss, upstream = get_loss(loss_name)(logits, targets)
    if loss_name == CROSS_ENTROPY:
        scale = count / images
        loss, upstream = loss * scale, upstream * scale

    def backward_chunk(index):
        s = slices[index]
        return model.backward(features[s], upstream[s], forwards[index][1])

    parts = parallel_map(backward_chunk, range(len(slices)), threads)
    grads = [np.array(g, copy=True) for g in parts[0]]
    for part in parts[1:]:
        for total, g in zip(grads, part):
            total += g
    return loss, logits, grads


class Trainer:
    """
    Trains an MPSModel on a list of Samples.

    Args:
        model (MPSModel): Initialized model; updated in place
        config (TrainConfig): Optimization settings
        callback (callable, optional): Called as callback(epoch, model, state)
            after each epoch's validation
    """

    def __init__(self, model, config, callback=None):
        self.model = model
        self.config = config
        self.callback = callback
        self.feature_map = model.feature_map or LocalFeatureMap(d=model.d)
        if self.feature_map.d != model.d:
            raise ConfigurationError(
                f"Feature map has d={self.feature_map.d} but the model expects d={model.d}"
            )
        self.state = TrainState(
            adam=AdamState.zeros_like(model.parameters()),
            rng=np.random.default_rng([config.seed, SHUFFLE_STREAM]),
        )
        self.history = []
        self.best_model = model.copy()

    def _prepare(self, samples):
        prepared = []
        for sample in samples:
            image = normalize_image(sample.image) if self.config.normalize else sample.image
            prepared.append((sample.id, image.data, sample.mask))
        return prepared

    def _encode(self, data, mask):
        model = self.model
        _, features = patch_features(data, model.K, model.dims, self.feature_map)
        return features, mask_targets(mask, model.K, model.dims, model.M)

    def _check_logits(self, logits, owners, epoch, batch):
        bad = np.flatnonzero(~np.all(np.isfinite(logits), axis=1))
        if bad.size:
            patch = int(bad[0])
            raise NumericError(
                f"Non-finite logits in patch {owners[patch][1]} of image '{owners[patch][0]}'",
                epoch=epoch, batch=batch,
            )

    def _train_epoch(self, train, cached, epoch):
        config = self.config
        order = self.state.rng.permutation(len(train))
        losses = []
        for batch, start in enumerate(range(0, len(order), config.batch_size)):
            indices = order[start:start + config.batch_size]
            features, targets, owners = [], [], []
            for i in indices:
                sample_id, data, mask = train[i]
                if config.augment:
                    data, mask = augment(data, mask, self.state.rng)
                    f, t = self._encode(data, mask)
                else:
                    f, t = cached[i]
                features.append(f)
                targets.append(t)
                owners.extend((sample_id, p) for p in range(len(f)))

            loss, logits, grads = batch_loss_and_gradients(
                self.model, np.concatenate(features), np.concatenate(targets),
                config.loss, images=len(indices), threads=config.threads,
                deterministic=config.deterministic,
            )
            self._check_logits(logits, owners, epoch, batch)
            adam_step(
                self.model.parameters(), grads, self.state.adam, config.lr,
                clip_norm=config.clip_norm, epoch=epoch, batch=batch,
            )
            if not self.model.is_finite():
                raise NumericError("Parameters became non-finite after update", epoch=epoch, batch=batch)
            losses.append(loss)
        return float(np.mean(losses))

    def validate(self, val, cached=None):
        """
        Mean loss and mean per-image Dice at the default threshold.

        Args:
            val (list): Prepared (id, data, mask) triples
            cached (list, optional): Precomputed (features, targets) per item

        Returns:
            tuple: (val_loss, mean val Dice, std of the per-image Dice)
        """
        model, config = self.model, self.config
        loss_fn = get_loss(config.loss)
        losses, dices = [], []
        for index, (_, data, mask) in enumerate(val):
            features, targets = cached[index] if cached else self._encode(data, mask)
            logits = predict_logits(model, features, config.threads)
            loss, _ = loss_fn(logits, targets)
            if config.loss == CROSS_ENTROPY:
                loss *= len(features)
            losses.append(loss)
            grid = PatchGrid(image_dims=mask.shape, K=model.K, channels=model.C)
            soft = foreground(unravel(grid, sigmoid(logits)), model.M)
            dices.append(dice(soft, mask, DEFAULT_THRESHOLD))
        return float(np.mean(losses)), float(np.mean(dices)), float(np.std(dices))

    def fit(self, train_set, val_set):
        """
        Train until patience or max_epochs runs out.

        Args:
            train_set (list of Sample): Training samples
            val_set (list of Sample): Validation samples

        Returns:
            tuple: (best model by validation Dice, history DataFrame)

        Raises:
            ConfigurationError: On empty sets or dims/channels mismatch
            NumericError: If training produces NaN or infinite values
        """
        if not train_set or not val_set:
            raise ConfigurationError(
                f"Training needs non-empty train and validation sets "
                f"(got {len(train_set)} / {len(val_set)})"
            )
        check_samples(list(train_set) + list(val_set), self.model.dims, self.model.C)

        config, state = self.config, self.state
        train, val = self._prepare(train_set), self._prepare(val_set)
        cached = None if config.augment else [self._encode(d, m) for _, d, m in train]
        val_cached = [self._encode(d, m) for _, d, m in val]
        logger.info(
            f"Training {self.model} on {len(train)} images, validating on {len(val)} "
            f"(loss {config.loss}, lr {config.lr}, batch {config.batch_size})"
        )

        for epoch in range(1, config.max_epochs + 1):
            started = time.perf_counter()
            train_loss = self._train_epoch(train, cached, epoch)
            val_loss, val_dice, val_dice_std = self.validate(val, val_cached)
            elapsed = time.perf_counter() - started

            state.epoch = epoch
            state.epoch_seconds.append(elapsed)
            self.history.append({
                "epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "val_dice": val_dice,
            })
            if val_dice > state.best_val_dice:
                state.best_val_dice = val_dice
                state.best_val_dice_std = val_dice_std
                state.best_epoch = epoch
                state.epochs_since_improvement = 0
                self.best_model = self.model.copy()
            else:
                state.epochs_since_improvement += 1

            logger.info(
                f"Epoch {epoch}/{config.max_epochs}: train_loss={train_loss:.5f} "
                f"val_loss={val_loss:.5f} val_dice={val_dice:.4f} "
                f"(best {state.best_val_dice:.4f} @ {state.best_epoch}, {elapsed:.1f}s)"
            )
            if self.callback is not None:
                self.callback(epoch, self.model, state)

            if state.epochs_since_improvement >= config.patience:
                logger.info(f"No validation improvement for {state.epochs_since_improvement} epochs; stopping")
                break

        logger.info(
            f"Finished after {state.epoch} epochs ({state.mean_epoch_seconds:.2f}s per epoch); "
            f"best val_dice {state.best_val_dice:.4f} at epoch {state.best_epoch}"
        )
        return self.best_model, self.history_frame()

    def history_frame(self):
        return pd.DataFrame(self.history, columns=HISTORY_COLUMNS)

    def summary(self):
        """
        Training statistics for checkpoint metadata.

        Wall times are left out so that identical runs write identical files.
        """
        return {
            "best_epoch": self.state.best_epoch,
            "best_val_dice": self.state.best_val_dice,
            "epochs": self.state.epoch,
        }


def fit(model, train_set, val_set, config, callback=None):
    """
    Train a model; see Trainer.fit.

    Returns:
        tuple: (best model, history DataFrame with columns epoch, train_loss,
            val_loss, val_dice)
    """
    return Trainer(model, config, callback=callback).fit(train_set, val_set)


def save_history(history, path):
    """Write history rows as CSV with the epoch,train_loss,val_loss,val_dice header."""
    frame = history if isinstance(history, pd.DataFrame) else pd.DataFrame(history, columns=HISTORY_COLUMNS)
    frame.to_csv(path, index=False, columns=HISTORY_COLUMNS)
    logger.info(f"Wrote training history to {path}")


def load_history(path):
    return pd.read_csv(path)
