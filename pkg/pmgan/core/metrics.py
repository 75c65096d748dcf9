"""Metrics collection for training and evaluation runs."""

from pathlib import Path
from typing import Optional

from prometheus_client import (
    CollectorRegistry,
    Counter,
    Gauge,
    Histogram,
    generate_latest,
    write_to_textfile,
)
from structlog import get_logger

from pmgan.core.config import settings

logger = get_logger(__name__)


class MetricsCollector:
    """Prometheus metrics collector backed by a private registry."""

    def __init__(self, enabled: Optional[bool] = None):
        self.enabled = settings.metrics_enabled if enabled is None else enabled
        if not self.enabled:
            return

        self.registry = CollectorRegistry()

        # Training progress
        self.batches = Counter(
            "pmgan_batches_total",
            "Mini-batches processed",
            registry=self.registry,
        )
        self.updates = Counter(
            "pmgan_updates_total",
            "Optimizer updates applied",
            ["player"],
            registry=self.registry,
        )
        self.epochs = Counter(
            "pmgan_epochs_total",
            "Completed training epochs",
            registry=self.registry,
        )
        self.epoch_duration = Histogram(
            "pmgan_epoch_duration_seconds",
            "Wall time per training epoch",
            buckets=(0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0, 60.0),
            registry=self.registry,
        )

        # Latest values
        self.loss = Gauge(
            "pmgan_epoch_loss",
            "Mean loss of the latest epoch",
            ["component"],
            registry=self.registry,
        )
        self.moment_distance = Gauge(
            "pmgan_moment_distance",
            "Moment distance between generated and real visible maps",
            registry=self.registry,
        )
        self.accuracy = Gauge(
            "pmgan_accuracy",
            "Test accuracy per modality mode",
            ["mode"],
            registry=self.registry,
        )

    def record_batch(self, d_steps: int, g_steps: int) -> None:
        """Record one mini-batch and its optimizer updates."""
        if not self.enabled:
            return

        self.batches.inc()
        self.updates.labels(player="discriminator").inc(d_steps)
        self.updates.labels(player="generator").inc(g_steps)

    def record_epoch(self, losses: dict[str, float], moment_distance: float, seconds: float) -> None:
        """Record epoch means and duration."""
        if not self.enabled:
            return

        self.epochs.inc()
        self.epoch_duration.observe(seconds)
        for component, value in losses.items():
            self.loss.labels(component=component).set(value)
        self.moment_distance.set(moment_distance)

    def record_accuracy(self, mode: str, accuracy: float) -> None:
        """Record one evaluation result."""
        if not self.enabled:
            return

        self.accuracy.labels(mode=mode).set(accuracy)

    def get_metrics(self) -> bytes:
        """Get Prometheus exposition text."""
        if not self.enabled:
            return b""

        return generate_latest(self.registry)

    def write(self, path: Path) -> Optional[Path]:
        """Write the registry as a Prometheus textfile."""
        if not self.enabled:
            return None

        path.parent.mkdir(parents=True, exist_ok=True)
        write_to_textfile(str(path), self.registry)
        logger.debug("metrics written", path=str(path))
        return path
