"""Command configuration: flags, config files and defaults.

A config file is flat ``key=value`` text (dotenv syntax, ``#`` comments, keys are
case-insensitive)::

    # train.env
    epochs=50
    batch_size=30

Unknown keys are rejected with their line number. A run manifest written by
any command is also accepted; its ``config`` block is used. Precedence is
flag > file > default, and every resolved key remembers where its value came
from.
"""

import argparse
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

import orjson
from dotenv import dotenv_values
from pydantic import BaseModel

from pmgan.core.errors import ArtifactNotFoundError, ConfigurationError, UnknownConfigKeyError
from pmgan.schemas.configs import NoiseSpec, SynthConfig, TrainConfig, validated

SOURCE_FLAG = "flag"
SOURCE_FILE = "file"
SOURCE_DEFAULT = "default"
# Values copied from an input artifact rather than chosen by the user
SOURCE_ARTIFACT = "artifact"
# Training hyperparameters taken over from a resumed checkpoint
SOURCE_CHECKPOINT = "checkpoint"


@dataclass(frozen=True)
class Option:
    """One configurable key and the command-line flag that sets it."""

    key: str
    flag: str
    type: Callable[[str], Any] = str
    help: str = ""
    const: Optional[Any] = None

    def add_to(self, parser: argparse.ArgumentParser) -> None:
        if self.const is not None:
            parser.add_argument(
                self.flag, dest=self.key, action="store_const", const=self.const, default=None, help=self.help
            )
        else:
            parser.add_argument(self.flag, dest=self.key, type=self.type, default=None, help=self.help)


@dataclass
class ResolvedConfig:
    values: dict[str, Any] = field(default_factory=dict)
    sources: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def subset(self, keys: Sequence[str]) -> dict[str, Any]:
        return {k: self.values[k] for k in keys if k in self.values}

    def record(self, key: str, value: Any, source: str) -> None:
        self.values[key] = value
        self.sources[key] = source


def model_defaults(model: type[BaseModel], exclude: Sequence[str] = ()) -> dict[str, Any]:
    return {
        name: info.get_default(call_default_factory=True)
        for name, info in model.model_fields.items()
        if name not in exclude
    }


# Synthetic-data keys
SYNTH_DEFAULTS = model_defaults(SynthConfig)

SYNTH_OPTIONS = [
    Option("class_count", "--classes", int, "number of classes C"),
    Option("samples_per_class", "--samples-per-class", int, "paired videos per class"),
    Option("clips", "--clips", int, "clips per video T"),
    Option("height", "--height", int, "feature map height H"),
    Option("width", "--width", int, "feature map width W"),
    Option("channels", "--channels", int, "feature map depth D"),
    Option("latent_dim", "--latent-dim", int, "latent dimension L"),
    Option("infrared_rank", "--infrared-rank", int, "rank r of the infrared projection"),
    Option("noise_sigma", "--noise-sigma", float, "per-clip observation noise"),
    Option("class_separation", "--class-separation", float, "scale of the class-mean draw"),
    Option("train_fraction", "--train-fraction", float, "per-class train share"),
    Option("seed", "--seed", int, "random seed"),
    Option("retain_latents", "--retain-latents", help="store each sample's latent", const=True),
]

# Training keys; generator noise is flattened to z_*
TRAIN_DEFAULTS = {
    **model_defaults(TrainConfig, exclude=("noise",)),
    **{f"z_{name}": value for name, value in model_defaults(NoiseSpec).items()},
}

TRAIN_OPTIONS = [
    Option("w1", "--w1", float, "adversarial weight"),
    Option("w2", "--w2", float, "predictive weight"),
    Option("learning_rate", "--lr", float, "Adam learning rate"),
    Option("beta1", "--beta1", float, "Adam beta1"),
    Option("beta2", "--beta2", float, "Adam beta2"),
    Option("adam_epsilon", "--adam-epsilon", float, "Adam epsilon"),
    Option("batch_size", "--batch-size", int, "mini-batch size"),
    Option("epochs", "--epochs", int, "training epochs"),
    Option("d_steps_per_g_step", "--d-steps", int, "discriminator steps per generator step"),
    Option("seed", "--seed", int, "random seed"),
    Option("gen_cls_feedback", "--gen-cls-feedback", help="add the predictive loss to L_G", const=True),
    Option("kernel_size", "--kernel-size", int, "odd generator kernel size"),
    Option("z_enabled", "--noise", help="append noise channels to the generator input", const=True),
    Option("z_channels", "--noise-channels", int, "generator noise channels"),
    Option("z_sigma", "--noise-scale", float, "generator noise standard deviation"),
    Option("verify_alternation", "--verify-alternation", help="hash-check frozen parameters", const=True),
    Option("train_single_heads", "--no-single-heads", help="skip the single-modality heads", const=False),
]


def _line_of(key: str, lines: Sequence[str]) -> Optional[int]:
    for number, raw in enumerate(lines, start=1):
        text = raw.strip()
        if text.startswith("export "):
            text = text[len("export "):].lstrip()
        name = text.split("=", 1)[0].strip()
        if name == key:
            return number
    return None


def _manifest_config(path: Path, raw: bytes) -> Optional[dict[str, Any]]:
    try:
        payload = orjson.loads(raw)
    except orjson.JSONDecodeError:
        return None
    if not isinstance(payload, dict) or not isinstance(payload.get("config"), dict):
        return None
    sources = payload.get("sources", {})
    return {
        key: value
        for key, value in payload["config"].items()
        if sources.get(key) != SOURCE_ARTIFACT
    }


def load_config_file(path: Path, allowed: Sequence[str]) -> dict[str, Any]:
    """Read ``path`` and reject keys outside ``allowed``."""
    path = Path(path)
    if not path.is_file():
        raise ArtifactNotFoundError(f"config file not found: {path}")
    raw = path.read_bytes()
    known = set(allowed)

    from_manifest = _manifest_config(path, raw)
    if from_manifest is not None:
        for key in from_manifest:
            if key not in known:
                raise UnknownConfigKeyError(key, None, str(path))
        return from_manifest

    lines = raw.decode("utf-8").splitlines()
    values: dict[str, Any] = {}
    for key, value in dotenv_values(path).items():
        name = key.strip().lower()
        if name not in known:
            raise UnknownConfigKeyError(key, _line_of(key, lines), str(path))
        if value is None:
            raise ConfigurationError(f"{path}:{_line_of(key, lines)}: key '{key}' has no value")
        values[name] = value
    return values


def resolve(
    defaults: Mapping[str, Any],
    args: argparse.Namespace,
    config_path: Optional[Path] = None,
) -> ResolvedConfig:
    """Flag, then file, then default, for every key in ``defaults``."""
    from_file = load_config_file(config_path, list(defaults)) if config_path else {}
    resolved = ResolvedConfig()
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            resolved.record(key, flag, SOURCE_FLAG)
        elif key in from_file:
            resolved.record(key, from_file[key], SOURCE_FILE)
        else:
            resolved.record(key, default, SOURCE_DEFAULT)
    return resolved


def build_synth_config(resolved: ResolvedConfig) -> SynthConfig:
    config = validated(SynthConfig, **resolved.subset(list(SYNTH_DEFAULTS)))
    _echo(resolved, config.model_dump(mode="json"))
    return config


def build_train_config(resolved: ResolvedConfig) -> TrainConfig:
    noise = validated(
        NoiseSpec,
        enabled=resolved["z_enabled"],
        channels=resolved["z_channels"],
        sigma=resolved["z_sigma"],
    )
    plain = [k for k in TRAIN_DEFAULTS if not k.startswith("z_")]
    config = validated(TrainConfig, **resolved.subset(plain), noise=noise)
    _echo(resolved, train_config_values(config))
    return config


def train_config_values(config: TrainConfig) -> dict[str, Any]:
    """Flat key=value view of ``config``, generator noise as z_*."""
    values = config.model_dump(mode="json")
    values.update({f"z_{k}": v for k, v in values.pop("noise").items()})
    return values


def _echo(resolved: ResolvedConfig, typed: Mapping[str, Any]) -> None:
    """Replace raw file strings with the validated, typed values."""
    for key, value in typed.items():
        if key in resolved.values:
            resolved.values[key] = value


def coerce(resolved: ResolvedConfig, key: str, kind: Callable[[Any], Any]) -> Any:
    """Convert one resolved value in place; bad values are configuration errors."""
    try:
        value = kind(resolved[key])
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid value for '{key}': {resolved[key]!r}") from exc
    resolved.values[key] = value
    return value
