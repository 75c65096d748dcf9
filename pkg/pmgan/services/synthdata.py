"""Synthetic paired infrared/visible corpus and the PMFD dataset file format.

Each class ``c`` owns a mean ``mu_c``; a sample draws a latent ``u ~ N(mu_c, I)``
and every clip renders two views of it::

    visible  = tanh(B u) + eps
    infrared = A P u + eps'

``P`` projects onto a random rank-r subspace, so the infrared view carries
strictly less information about ``u`` than the visible one.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
from structlog import get_logger

from pmgan.core.binio import BinaryReader, BinaryWriter
from pmgan.core.errors import ArtifactNotFoundError, ConfigurationError, ContractError, FormatError
from pmgan.models.fusion import ClipStack, sum_fuse_batch
from pmgan.schemas.configs import SynthConfig

logger = get_logger(__name__)

MAGIC = b"PMFD"
VERSION = 1


@dataclass(frozen=True)
class PairedSample:
    """Aligned infrared and visible clip stacks of one video with its label."""

    sample_id: int
    infrared: ClipStack
    visible: ClipStack
    label: np.ndarray
    latent: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.infrared.values.shape != self.visible.values.shape:
            raise ContractError(
                f"sample {self.sample_id}: infrared {self.infrared.values.shape} "
                f"and visible {self.visible.values.shape} stacks differ"
            )
        label = np.asarray(self.label, dtype=np.float64)
        if label.ndim != 1 or np.count_nonzero(label == 1.0) != 1 or np.count_nonzero(label) != 1:
            raise ContractError(f"sample {self.sample_id}: label must be one-hot")

    @property
    def class_index(self) -> int:
        return int(np.argmax(self.label))


@dataclass
class DatasetSplit:
    """Train/test partition plus the configuration that produced it."""

    train: list[PairedSample]
    test: list[PairedSample]
    config: SynthConfig
    condition: str = "standard"
    shift_scale: float = 0.0

    def __post_init__(self) -> None:
        overlap = {s.sample_id for s in self.train} & {s.sample_id for s in self.test}
        if overlap:
            raise ContractError(f"train and test share samples {sorted(overlap)[:5]}")

    @property
    def class_count(self) -> int:
        return self.config.class_count


@dataclass(frozen=True)
class SampleArrays:
    """Sum-fused maps of a sample list, stacked along a leading batch axis."""

    infrared: np.ndarray
    visible: np.ndarray
    labels: np.ndarray
    sample_ids: np.ndarray

    def __len__(self) -> int:
        return self.labels.shape[0]

    def take(self, index: np.ndarray) -> "SampleArrays":
        return SampleArrays(
            self.infrared[index], self.visible[index], self.labels[index], self.sample_ids[index]
        )


def fuse_samples(samples: Sequence[PairedSample]) -> SampleArrays:
    """Sum-fuse both modalities of every sample."""
    if not samples:
        raise ContractError("no samples to fuse")
    return SampleArrays(
        infrared=sum_fuse_batch(np.stack([s.infrared.values for s in samples])),
        visible=sum_fuse_batch(np.stack([s.visible.values for s in samples])),
        labels=np.stack([s.label for s in samples]),
        sample_ids=np.array([s.sample_id for s in samples]),
    )


@dataclass(frozen=True)
class SynthModel:
    """The fixed random quantities shared by every sample of one seed."""

    config: SynthConfig
    class_means: np.ndarray
    visible_mix: np.ndarray
    infrared_mix: np.ndarray
    projection: np.ndarray
    shift_direction: np.ndarray = field(repr=False)

    @classmethod
    def draw(cls, config: SynthConfig, rng: np.random.Generator) -> "SynthModel":
        latent, rank = config.latent_dim, config.infrared_rank
        features = config.height * config.width * config.channels
        class_means = rng.normal(0.0, config.class_separation, size=(config.class_count, latent))
        visible_mix = rng.normal(0.0, 1.0 / np.sqrt(latent), size=(features, latent))
        infrared_mix = rng.normal(0.0, 1.0 / np.sqrt(rank), size=(features, latent))
        basis, _ = np.linalg.qr(rng.normal(size=(latent, rank)))
        direction = rng.normal(size=latent)
        return cls(
            config=config,
            class_means=class_means,
            visible_mix=visible_mix,
            infrared_mix=infrared_mix,
            projection=basis @ basis.T,
            shift_direction=direction / np.linalg.norm(direction),
        )

    @property
    def map_shape(self) -> tuple[int, int, int]:
        return (self.config.height, self.config.width, self.config.channels)

    def render_clean(self, latent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Noise-free (infrared, visible) maps of one latent."""
        infrared = self.infrared_mix @ (self.projection @ latent)
        visible = np.tanh(self.visible_mix @ latent)
        return infrared.reshape(self.map_shape), visible.reshape(self.map_shape)

    def render(self, latent: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """T noisy clips of each modality, shaped T x H x W x D."""
        clean_inf, clean_vis = self.render_clean(latent)
        sigma, clips = self.config.noise_sigma, self.config.clips
        visible = clean_vis[None] + rng.normal(0.0, sigma, size=(clips,) + clean_vis.shape)
        infrared = clean_inf[None] + rng.normal(0.0, sigma, size=(clips,) + clean_inf.shape)
        return infrared, visible


def _generate(config: SynthConfig, shift_scale: float) -> tuple[DatasetSplit, SynthModel]:
    if shift_scale < 0:
        raise ConfigurationError(f"shift_scale must be >= 0, got {shift_scale}")
    rng = np.random.default_rng(config.seed)
    model = SynthModel.draw(config, rng)
    n, n_train = config.samples_per_class, config.train_per_class

    train: list[PairedSample] = []
    test: list[PairedSample] = []
    for c in range(config.class_count):
        label = np.zeros(config.class_count)
        label[c] = 1.0
        train_slots = set(rng.permutation(n)[:n_train].tolist())
        for i in range(n):
            in_train = i in train_slots
            mean = model.class_means[c]
            if not in_train:
                mean = mean + shift_scale * model.shift_direction
            latent = mean + rng.normal(size=config.latent_dim)
            infrared, visible = model.render(latent, rng)
            sample = PairedSample(
                sample_id=c * n + i,
                infrared=ClipStack(infrared),
                visible=ClipStack(visible),
                label=label,
                latent=latent if config.retain_latents else None,
            )
            (train if in_train else test).append(sample)

    condition = "shifted" if shift_scale > 0 else "standard"
    split = DatasetSplit(train, test, config, condition=condition, shift_scale=shift_scale)
    logger.info(
        "dataset synthesized",
        seed=config.seed,
        classes=config.class_count,
        train=len(train),
        test=len(test),
        shift_scale=shift_scale,
    )
    return split, model


def synthesize(config: SynthConfig) -> DatasetSplit:
    """Stratified 75/25 paired dataset drawn deterministically from ``config.seed``."""
    return _generate(config, 0.0)[0]


def synthesize_shifted(config: SynthConfig, shift_scale: float) -> DatasetSplit:
    """Same protocol, with test-class means displaced by ``shift_scale`` along a fixed direction.

    The train split is identical to :func:`synthesize`'s for the same seed.
    """
    return _generate(config, shift_scale)[0]


def synth_model(config: SynthConfig) -> SynthModel:
    """The mixing matrices and class means used for ``config.seed``."""
    return SynthModel.draw(config, np.random.default_rng(config.seed))


# PMFD files


def _write_samples(writer: BinaryWriter, samples: Sequence[PairedSample], with_latents: bool) -> None:
    writer.u32(len(samples))
    for sample in samples:
        writer.u32(sample.sample_id)
        writer.u32(sample.class_index)
        writer.array(sample.infrared.values)
        writer.array(sample.visible.values)
        if with_latents:
            writer.array(sample.latent)


def _read_samples(reader: BinaryReader, config: SynthConfig, with_latents: bool) -> Iterator[PairedSample]:
    for _ in range(reader.u32("sample count")):
        sample_id = reader.u32("sample id")
        class_index = reader.u32("class index")
        if class_index >= config.class_count:
            raise ContractError(f"{reader.path}: class index {class_index} out of range")
        label = np.zeros(config.class_count)
        label[class_index] = 1.0
        infrared = reader.array("infrared stack")
        visible = reader.array("visible stack")
        latent = reader.array("latent") if with_latents else None
        yield PairedSample(sample_id, ClipStack(infrared), ClipStack(visible), label, latent)


def save_dataset(split: DatasetSplit, path: Path) -> Path:
    """Write ``split`` as a PMFD file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with_latents = all(s.latent is not None for s in split.train + split.test) and bool(
        split.train + split.test
    )
    with open(path, "wb") as stream:
        writer = BinaryWriter(stream)
        writer.header(MAGIC, VERSION)
        writer.json(
            {
                "config": split.config.model_dump(mode="json"),
                "condition": split.condition,
                "shift_scale": split.shift_scale,
                "latents": with_latents,
            }
        )
        _write_samples(writer, split.train, with_latents)
        _write_samples(writer, split.test, with_latents)
    logger.info("dataset saved", path=str(path), train=len(split.train), test=len(split.test))
    return path


def load_dataset(path: Path) -> DatasetSplit:
    """Read a PMFD file written by :func:`save_dataset`."""
    path = Path(path)
    if not path.is_file():
        raise ArtifactNotFoundError(f"dataset not found: {path}")
    with open(path, "rb") as stream:
        reader = BinaryReader(stream, path)
        reader.header(MAGIC, VERSION)
        meta = reader.json("config block")
        try:
            config = SynthConfig(**meta["config"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(str(path), b"PMFD config", str(exc).encode()) from exc
        with_latents = bool(meta.get("latents", False))
        train = list(_read_samples(reader, config, with_latents))
        test = list(_read_samples(reader, config, with_latents))
        reader.expect_end()
    return DatasetSplit(
        train,
        test,
        config,
        condition=meta.get("condition", "standard"),
        shift_scale=float(meta.get("shift_scale", 0.0)),
    )
