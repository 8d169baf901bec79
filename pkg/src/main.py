"""
Main entry point for the strided MPS segmentation tool.

Subcommands: gen-synth, train, predict, eval, sweep, count, plot.
"""
import argparse
import logging
import os
import sys
from pathlib import Path

import pandas as pd
from dotenv import load_dotenv

from src.data.dataset import check_samples, load_dataset, split, write_dataset
from src.data.images import load_image, save_mask, save_soft, save_volume
from src.data.synthetic import gen_synthetic
from src.evaluation.metrics import EvalReport, binarize, uniform_patch_fraction
from src.network import mps
from src.training.checkpoint import load_checkpoint, save_checkpoint
from src.training.inference import check_compatible, default_threads, predict_image, predict_samples
from src.training.trainer import Trainer, load_history, save_history
from src.utils.config import RunConfig
from src.utils.errors import ConfigurationError, exit_code_for
from src.utils.logger import create_log_file_path, setup_logging
from src.utils.plotting import plot_learning_curve, plot_overlay

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["patch_size", "bond_dim", "param_count", "best_val_dice", "val_dice_std", "epochs"]


def _int_list(text):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _add_config_overrides(parser):
    parser.add_argument('--config', type=str, help='Path to JSON run configuration')
    parser.add_argument('--dims', type=int, choices=[2, 3], help='Spatial dimensions')
    parser.add_argument('--patch-size', type=int, help='Patch edge K')
    parser.add_argument('--bond-dim', type=int, help='Bond dimension')
    parser.add_argument('--lr', type=float, help='Learning rate')
    parser.add_argument('--batch-size', type=int, help='Images per minibatch')
    parser.add_argument('--epochs', type=int, dest='max_epochs', help='Maximum epochs')
    parser.add_argument('--patience', type=int, help='Early-stopping patience')
    parser.add_argument('--loss', type=str, choices=['cross-entropy', 'dice'], help='Training loss')
    parser.add_argument('--seed', type=int, help='Random seed')


def parse_arguments(argv=None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(description='Strided MPS image segmentation')
    parser.add_argument('--env', type=str, default='.env', help='Path to environment file')
    parser.add_argument('--log-level', type=str, default=None,
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='Logging level (default: LOG_LEVEL or INFO)')
    parser.add_argument('--log-dir', type=str, default=os.getenv('STNET_LOG_DIR'),
                        help='Also write a log file into this directory')
    parser.add_argument('--threads', type=int, default=None,
                        help='Worker threads (default: STNET_THREADS or all cores)')

    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen-synth', help='Generate a synthetic blob dataset')
    gen.add_argument('--out', type=str, required=True, help='Dataset root to write')
    gen.add_argument('--n', type=int, default=200, help='Number of samples')
    gen.add_argument('--size', type=int, default=64, help='Image edge length')
    gen.add_argument('--seed', type=int, default=42, help='Random seed')
    gen.add_argument('--dims', type=int, default=2, choices=[2, 3], help='2D images or 3D volumes')

    train = commands.add_parser('train', help='Train a model')
    _add_config_overrides(train)
    train.add_argument('--data', type=str, help='Dataset root (default: data_root / STNET_DATA_ROOT)')
    train.add_argument('--out', type=str, required=True, help='Checkpoint path')
    train.add_argument('--history', type=str, help='Training history CSV path')
    train.add_argument('--report', type=str, help='Test-split evaluation CSV path')
    train.add_argument('--snapshot-dir', type=str, help='Directory for per-epoch overlay snapshots')

    predict = commands.add_parser('predict', help='Segment one image')
    predict.add_argument('--model', type=str, required=True, help='Checkpoint path')
    predict.add_argument('--input', type=str, required=True, help='Input image (.pgm/.ppm/.stv)')
    predict.add_argument('--output', type=str, required=True, help='Output mask path')
    predict.add_argument('--soft', type=str, help='Also write soft probabilities here')

    evaluate = commands.add_parser('eval', help='Evaluate a model on a dataset')
    evaluate.add_argument('--model', type=str, required=True, help='Checkpoint path')
    evaluate.add_argument('--data', type=str, required=True, help='Dataset root')
    evaluate.add_argument('--report', type=str, required=True, help='Report CSV path')
    evaluate.add_argument('--overlay-dir', type=str, help='Write TP/FN/FP overlays here')

    sweep = commands.add_parser('sweep', help='Train one model per patch size and bond dimension')
    _add_config_overrides(sweep)
    sweep.add_argument('--data', type=str, help='Dataset root')
    sweep.add_argument('--bond-dims', type=_int_list, help='Comma-separated bond dimensions (default: config)')
    sweep.add_argument('--patch-sizes', type=_int_list, help='Comma-separated patch sizes (default: config)')
    sweep.add_argument('--out', type=str, required=True, help='Sweep CSV path')

    count = commands.add_parser('count', help='Print the parameter count of a configuration')
    _add_config_overrides(count)

    plot = commands.add_parser('plot', help='Plot a training history CSV')
    plot.add_argument('--history', type=str, required=True, help='History CSV')
    plot.add_argument('--out', type=str, required=True, help='Output image path')

    return parser.parse_args(argv)


def load_run_config(args):
    """
    Build and validate the run configuration from --config and flag overrides.

    Raises:
        ConfigurationError: On a missing or invalid key
    """
    overrides = {
        key: getattr(args, key, None)
        for key in ('dims', 'bond_dim', 'lr', 'batch_size', 'max_epochs', 'patience', 'loss', 'seed')
    }
    overrides['patch_size'] = getattr(args, 'patch_size', None)
    overrides['threads'] = args.threads
    config = RunConfig(args.config, env_file=args.env, overrides=overrides)
    return config.validate()


def _threads(args):
    """--threads, else STNET_THREADS, else all cores."""
    return args.threads or int(os.getenv('STNET_THREADS') or 0) or default_threads()


def _data_root(args, config):
    root = getattr(args, 'data', None) or config.data_root
    if not root:
        raise ConfigurationError("No dataset given: pass --data or set data_root / STNET_DATA_ROOT")
    return root


def _snapshot_callback(config, val_samples, snapshot_dir):
    """Overlay of the first validation image at the configured epochs."""
    epochs = set(config.snapshot_epochs or [])
    Path(snapshot_dir).mkdir(parents=True, exist_ok=True)
    sample = val_samples[0]

    def callback(epoch, model, state):
        if epochs and epoch not in epochs:
            return
        soft = predict_image(model, sample.image, normalize=config.normalize, threads=config.threads)
        fraction = uniform_patch_fraction(binarize(soft), model.K, model.dims, reference=sample.mask)
        plot_overlay(
            sample.image.data, sample.mask, soft, Path(snapshot_dir) / f"epoch_{epoch:03d}.png",
            title=f"{sample.id} epoch {epoch} (uniform patches {fraction:.0%})",
        )
        logger.info(f"Epoch {epoch}: {fraction:.1%} of boundary patches uniformly classified")

    return callback


def train_model(config, samples, snapshot_dir=None, callback=None):
    """
    Split, initialize and train.

    Args:
        config (RunConfig): Validated configuration
        samples (list of Sample): Whole dataset
        snapshot_dir (str, optional): Directory for overlay snapshots
        callback (callable, optional): Extra per-epoch callback(epoch, model, state)

    Returns:
        tuple: (Trainer, best model, history DataFrame, test samples)
    """
    check_samples(samples, config.dims, config.channels)
    train_set, val_set, test_set = split(samples, config.split, config.seed)
    logger.info(f"Split {len(samples)} samples into {len(train_set)}/{len(val_set)}/{len(test_set)}")

    model = mps.init(
        seed=config.seed, feature_map=config.local_feature_map(),
        epsilon=config.init_noise, **config.model_kwargs(),
    )
    callbacks = [fn for fn in (
        _snapshot_callback(config, val_set, snapshot_dir) if snapshot_dir else None, callback,
    ) if fn is not None]

    def on_epoch(epoch, model, state):
        for fn in callbacks:
            fn(epoch, model, state)

    trainer = Trainer(model, config.train_config(), callback=on_epoch)
    best, history = trainer.fit(train_set, val_set)
    return trainer, best, history, test_set


def evaluate_model(model, samples, normalize=True, threads=1):
    """Predict every sample and build an EvalReport."""
    predictions = predict_samples(model, samples, normalize=normalize, threads=threads)
    return EvalReport.from_predictions(
        [s.id for s in samples], predictions, [s.mask for s in samples]
    ), predictions


def cmd_gen_synth(args):
    samples = gen_synthetic(args.n, args.size, args.seed, dims=args.dims)
    write_dataset(samples, args.out)
    print(f"Wrote {len(samples)} image/mask pairs to {args.out}")
    return 0


def cmd_train(args):
    config = load_run_config(args)
    logger.info(f"Configuration loaded: {config}")
    samples = load_dataset(_data_root(args, config))
    snapshot_dir = args.snapshot_dir or config.snapshot_dir
    trainer, best, history, test_set = train_model(config, samples, snapshot_dir)

    metadata = {"config": config.to_dict(), "normalize": config.normalize, "training": trainer.summary()}
    save_checkpoint(args.out, best, metadata, dtype=config.checkpoint_dtype)
    if args.history:
        save_history(history, args.history)

    report, _ = evaluate_model(best, test_set, normalize=config.normalize, threads=config.threads)
    print(f"Test set: {report}")
    if args.report:
        report.save_csv(args.report)
    return 0


def _load_model(path):
    model, metadata = load_checkpoint(path)
    return model, bool(metadata.get("normalize", True))


def cmd_predict(args):
    model, normalize = _load_model(args.model)
    image = load_image(args.input)
    check_compatible(model, image)
    soft = predict_image(model, image, normalize=normalize, threads=_threads(args))

    if image.dims == 3:
        save_volume(args.output, binarize(soft).astype("float32"))
        if args.soft:
            save_volume(args.soft, soft)
    else:
        save_mask(args.output, binarize(soft))
        if args.soft:
            save_soft(args.soft, soft)
    print(f"Wrote mask for {args.input} to {args.output}")
    return 0


def cmd_eval(args):
    model, normalize = _load_model(args.model)
    samples = load_dataset(args.data)
    check_samples(samples, model.dims, model.C)
    report, predictions = evaluate_model(model, samples, normalize=normalize, threads=_threads(args))
    report.save_csv(args.report)

    if args.overlay_dir:
        Path(args.overlay_dir).mkdir(parents=True, exist_ok=True)
        for sample, soft, score in zip(samples, predictions, report.dices):
            plot_overlay(sample.image.data, sample.mask, soft, Path(args.overlay_dir) / f"{sample.id}.png",
                         title=f"{sample.id} Dice {score:.3f}")
    print(report)
    return 0


def cmd_sweep(args):
    config = load_run_config(args)
    samples = load_dataset(_data_root(args, config))
    patch_sizes = args.patch_sizes or [config.patch_size]
    bond_dims = args.bond_dims or [config.bond_dim]
    rows = []
    for patch_size in patch_sizes:
        for bond_dim in bond_dims:
            config.patch_size, config.bond_dim = patch_size, bond_dim
            config.validate()
            logger.info(f"Sweep: training with patch size {patch_size}, bond dimension {bond_dim}")
            trainer, best, _, _ = train_model(config, samples)
            rows.append({
                "patch_size": patch_size,
                "bond_dim": bond_dim,
                "param_count": best.n_params,
                "best_val_dice": trainer.state.best_val_dice,
                "val_dice_std": trainer.state.best_val_dice_std,
                "epochs": trainer.state.epoch,
            })
    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    frame.to_csv(args.out, index=False)
    winner = frame.loc[frame["best_val_dice"].idxmax()]
    logger.info(
        f"Sweep: best validation Dice {winner['best_val_dice']:.4f} with patch size "
        f"{int(winner['patch_size'])}, bond dimension {int(winner['bond_dim'])}"
    )
    print(frame.to_string(index=False))
    return 0


def cmd_count(args):
    config = load_run_config(args)
    count = mps.param_count(**config.model_kwargs())
    print(count)
    return 0


def cmd_plot(args):
    plot_learning_curve(load_history(args.history), args.out, title=Path(args.history).stem)
    return 0


COMMANDS = {
    'gen-synth': cmd_gen_synth,
    'train': cmd_train,
    'predict': cmd_predict,
    'eval': cmd_eval,
    'sweep': cmd_sweep,
    'count': cmd_count,
    'plot': cmd_plot,
}


def main(argv=None):
    """
    Main entry point.

    Returns:
        int: Process exit code
    """
    args = parse_arguments(argv)
    load_dotenv(args.env)

    log_level = args.log_level or os.getenv('LOG_LEVEL', 'INFO')
    log_file = create_log_file_path(args.command.replace('-', '_'), args.log_dir) if args.log_dir else None
    setup_logging(log_level, log_file)

    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return 130
    except Exception as e:
        code = exit_code_for(e)
        if code == 1:
            logger.exception(f"{args.command} failed: {e}")
        else:
            logger.error(f"{args.command} failed: {e}")
        return code


if __name__ == "__main__":
    sys.exit(main())
