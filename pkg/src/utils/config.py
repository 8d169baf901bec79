"""
Run configuration: JSON file, then environment variables, then command-line
overrides.
"""
import copy
import json
import logging
import os
from pathlib import Path

from dotenv import load_dotenv

from src.features.featuremaps import LocalFeatureMap
from src.training.inference import default_threads
from src.training.trainer import TrainConfig
from src.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("dims", "patch_size", "bond_dim", "feature_map")

DEFAULTS = {
    "channels": 1,
    "classes": 1,
    "init_noise": 1e-2,
    "lr": 5e-4,
    "batch_size": 4,
    "max_epochs": 300,
    "patience": 10,
    "loss": "cross-entropy",
    "seed": 0,
    "deterministic": True,
    "clip_norm": 1.0,
    "augment": False,
    "threads": None,
    "normalize": True,
    "split": [0.6, 0.2, 0.2],
    "data_root": None,
    "checkpoint_dtype": "float64",
    "snapshot_epochs": [],
    "snapshot_dir": None,
}

# Environment variable -> (config key, parser)
ENV_OVERRIDES = {
    "STNET_THREADS": ("threads", int),
    "STNET_SEED": ("seed", int),
    "STNET_DATA_ROOT": ("data_root", str),
}

TRAIN_KEYS = (
    "lr", "batch_size", "max_epochs", "patience", "loss", "seed",
    "deterministic", "clip_norm", "augment", "threads", "normalize",
)


class RunConfig:
    """Configuration for one train / predict / eval run."""

    def __init__(self, config_file=None, env_file='.env', overrides=None, values=None):
        """
        Initialize configuration.

        Args:
            config_file (str, optional): Path to the JSON config
            env_file (str): Path to the .env file
            overrides (dict, optional): Command-line values; None entries are ignored
            values (dict, optional): Config values used instead of a file
        """
        load_dotenv(env_file)
        self.config_file = config_file
        self._load_config(config_file, values, overrides or {})

    def _load_config(self, config_file, values, overrides):
        raw = copy.deepcopy(values) if values is not None else {}
        if config_file is not None:
            raw = self._read_json(config_file)

        settings = copy.deepcopy(DEFAULTS)
        unknown = sorted(set(raw) - set(DEFAULTS) - set(REQUIRED_KEYS))
        if unknown:
            logger.warning(f"Ignoring unknown config keys: {', '.join(unknown)}")
        settings.update({k: v for k, v in raw.items() if k not in unknown})

        for env_var, (key, parse) in ENV_OVERRIDES.items():
            value = os.getenv(env_var)
            if value:
                try:
                    settings[key] = parse(value)
                except ValueError as e:
                    raise ConfigurationError(f"Invalid {env_var}={value!r}: {e}") from e

        settings.update({k: v for k, v in overrides.items() if v is not None})
        self.log_level = os.getenv('LOG_LEVEL', 'INFO')

        for key in REQUIRED_KEYS:
            setattr(self, key, settings.pop(key, None))
        for key, value in settings.items():
            setattr(self, key, value)
        if self.threads is None:
            self.threads = default_threads()

    @staticmethod
    def _read_json(config_file):
        path = Path(config_file)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError as e:
            raise ConfigurationError(f"Config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Config file {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigurationError(f"Config file {path} must hold a JSON object")
        return raw

    def validate(self):
        """
        Validate configuration.

        Returns:
            RunConfig: self, for chaining

        Raises:
            ConfigurationError: Naming the first missing or invalid key
        """
        missing = [key for key in REQUIRED_KEYS if getattr(self, key) is None]
        if missing:
            raise ConfigurationError(f"Missing required configuration key(s): {', '.join(missing)}")

        if self.dims not in (2, 3):
            raise ConfigurationError(f"dims must be 2 or 3, got {self.dims}")
        for key, minimum in (("patch_size", 2), ("bond_dim", 1), ("channels", 1), ("classes", 1)):
            value = getattr(self, key)
            if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
                raise ConfigurationError(f"{key} must be an integer >= {minimum}, got {value!r}")
        if self.classes > 2:
            raise ConfigurationError(f"classes must be 1 or 2 for binary masks, got {self.classes}")
        if not isinstance(self.feature_map, dict):
            raise ConfigurationError(f"feature_map must be an object with kind and d, got {self.feature_map!r}")
        self.local_feature_map()
        if self.checkpoint_dtype not in ("float64", "float32"):
            raise ConfigurationError(f"checkpoint_dtype must be float64 or float32, got {self.checkpoint_dtype}")
        if len(self.split) != 3:
            raise ConfigurationError(f"split must hold three fractions, got {self.split}")
        self.train_config()
        return self

    def local_feature_map(self):
        return LocalFeatureMap.from_dict(self.feature_map)

    def train_config(self):
        """
        Optimization settings as a TrainConfig.

        Raises:
            ConfigurationError: If any training value is invalid
        """
        try:
            return TrainConfig(**{key: getattr(self, key) for key in TRAIN_KEYS})
        except TypeError as e:
            raise ConfigurationError(f"Invalid training settings: {e}") from e

    def model_kwargs(self):
        """Keyword arguments for mps.init."""
        return {
            "K": self.patch_size, "M": self.classes, "C": self.channels,
            "d": self.local_feature_map().d, "bond_dim": self.bond_dim, "dims": self.dims,
        }

    def to_dict(self):
        """
        Convert configuration to dictionary.

        Returns:
            dict: Configuration keys and values
        """
        keys = list(REQUIRED_KEYS) + list(DEFAULTS)
        return {key: getattr(self, key) for key in keys}

    def __str__(self):
        """Return string representation of configuration."""
        return str(self.to_dict())
