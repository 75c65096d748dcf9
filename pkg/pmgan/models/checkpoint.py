"""PMGK checkpoint files.

Layout (all integers u32 LE, floats float64 LE)::

    "PMGK" | version
    json     {"model": ModelSpec, "weights": {w1, w2}, "train": TrainConfig | null}
    u32      tensor count, then named arrays (model parameters, then single heads
             as "head.<mode>.s.weights" / "head.<mode>.s.bias")
    u32      1 if a training state follows, else 0
    json     {"epoch", "rng_state", "log", "adam": {"d": hyper, "g": hyper}}
    u32      moment count, then named arrays "adam.<d|g>.<m|v>.<param>"
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
from structlog import get_logger

from pmgan.core.binio import BinaryReader, BinaryWriter
from pmgan.core.errors import ArtifactNotFoundError, ConfigurationError, FormatError
from pmgan.engine.optim import AdamState
from pmgan.models.network import PmGanParams, SingleHeadParams
from pmgan.schemas.configs import LossWeights, ModelSpec, TrainConfig

logger = get_logger(__name__)

MAGIC = b"PMGK"
VERSION = 1


@dataclass
class TrainingState:
    """Everything beyond the parameters needed to continue a run bit-identically."""

    epoch: int
    rng_state: dict[str, Any]
    d_optimizer: AdamState
    g_optimizer: AdamState
    log: list[dict[str, float]] = field(default_factory=list)


@dataclass
class Checkpoint:
    params: PmGanParams
    weights: LossWeights
    heads: dict[str, SingleHeadParams] = field(default_factory=dict)
    train_config: Optional[TrainConfig] = None
    state: Optional[TrainingState] = None


def encode_rng_state(state: Any) -> Any:
    """JSON-safe copy of a numpy bit-generator state (128-bit ints become strings)."""
    if isinstance(state, dict):
        return {k: encode_rng_state(v) for k, v in state.items()}
    if isinstance(state, bool) or not isinstance(state, (int, np.integer)):
        return state
    return {"int": str(int(state))}


def decode_rng_state(state: Any) -> Any:
    if isinstance(state, dict):
        if set(state) == {"int"}:
            return int(state["int"])
        return {k: decode_rng_state(v) for k, v in state.items()}
    return state


def _write_adam(writer: BinaryWriter, prefix: str, state: AdamState) -> None:
    for name in sorted(state.first_moment):
        writer.named_array(f"adam.{prefix}.m.{name}", state.first_moment[name])
        writer.named_array(f"adam.{prefix}.v.{name}", state.second_moment[name])


def _adam_hyper(state: AdamState) -> dict[str, Any]:
    return {
        "learning_rate": state.learning_rate,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "epsilon": state.epsilon,
        "step_count": state.step_count,
    }


def save_checkpoint(path: Path, checkpoint: Checkpoint) -> Path:
    """Write ``checkpoint`` to ``path`` in the PMGK layout."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = checkpoint.params
    tensors = dict(params.arrays())
    for mode, head in sorted(checkpoint.heads.items()):
        for name, value in head.arrays().items():
            tensors[f"head.{mode}.{name}"] = value

    with open(path, "wb") as stream:
        writer = BinaryWriter(stream)
        writer.header(MAGIC, VERSION)
        writer.json(
            {
                "model": params.spec.model_dump(mode="json"),
                "weights": checkpoint.weights.model_dump(mode="json"),
                "train": (
                    checkpoint.train_config.model_dump(mode="json")
                    if checkpoint.train_config is not None
                    else None
                ),
            }
        )
        writer.u32(len(tensors))
        for name, value in tensors.items():
            writer.named_array(name, value)

        state = checkpoint.state
        writer.u32(0 if state is None else 1)
        if state is not None:
            writer.json(
                {
                    "epoch": state.epoch,
                    "rng_state": encode_rng_state(state.rng_state),
                    "log": state.log,
                    "adam": {"d": _adam_hyper(state.d_optimizer), "g": _adam_hyper(state.g_optimizer)},
                }
            )
            moments = 2 * (len(state.d_optimizer.first_moment) + len(state.g_optimizer.first_moment))
            writer.u32(moments)
            _write_adam(writer, "d", state.d_optimizer)
            _write_adam(writer, "g", state.g_optimizer)

    logger.info("checkpoint saved", path=str(path), tensors=len(tensors), resumable=state is not None)
    return path


def _read_adam(hyper: dict[str, Any], moments: dict[str, np.ndarray], prefix: str) -> AdamState:
    state = AdamState(
        learning_rate=hyper["learning_rate"],
        beta1=hyper["beta1"],
        beta2=hyper["beta2"],
        epsilon=hyper["epsilon"],
        step_count=hyper["step_count"],
    )
    head = f"adam.{prefix}."
    for key, value in moments.items():
        if not key.startswith(head):
            continue
        kind, name = key[len(head):].split(".", 1)
        target = state.first_moment if kind == "m" else state.second_moment
        target[name] = value
    return state


def load_checkpoint(path: Path) -> Checkpoint:
    """Read a PMGK file; raises format, version or truncation errors by name."""
    path = Path(path)
    if not path.is_file():
        raise ArtifactNotFoundError(f"checkpoint not found: {path}")

    with open(path, "rb") as stream:
        reader = BinaryReader(stream, path)
        reader.header(MAGIC, VERSION)
        config = reader.json("config block")
        try:
            spec = ModelSpec(**config["model"])
            weights = LossWeights(**config["weights"])
            train_config = TrainConfig(**config["train"]) if config.get("train") else None
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(str(path), b"PMGK config", str(exc).encode()) from exc

        tensors = dict(reader.named_array() for _ in range(reader.u32("tensor count")))

        state = None
        if reader.u32("state flag"):
            meta = reader.json("training state")
            moments = dict(reader.named_array() for _ in range(reader.u32("moment count")))
            try:
                state = TrainingState(
                    epoch=int(meta["epoch"]),
                    rng_state=decode_rng_state(meta["rng_state"]),
                    d_optimizer=_read_adam(meta["adam"]["d"], moments, "d"),
                    g_optimizer=_read_adam(meta["adam"]["g"], moments, "g"),
                    log=meta["log"],
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(str(path), b"PMGK training state", str(exc).encode()) from exc
        reader.expect_end()

    heads: dict[str, dict[str, np.ndarray]] = {}
    model_arrays = {}
    for name, value in tensors.items():
        if name.startswith("head."):
            parts = name.split(".", 2)
            if len(parts) != 3:
                raise FormatError(str(path), b"head.<mode>.<param>", name.encode())
            _, mode, key = parts
            heads.setdefault(mode, {})[key] = value
        else:
            model_arrays[name] = value

    try:
        params = PmGanParams.from_arrays(spec, model_arrays)
    except KeyError as exc:
        raise ConfigurationError(f"{path}: checkpoint lacks parameter {exc}") from exc

    return Checkpoint(
        params=params,
        weights=weights,
        heads={mode: SingleHeadParams.from_arrays(arrays) for mode, arrays in heads.items()},
        train_config=train_config,
        state=state,
    )
