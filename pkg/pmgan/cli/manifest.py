"""Run manifests: one JSON document per command invocation."""

import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

import orjson
from structlog import get_logger

from pmgan import __version__
from pmgan.cli.config_loader import ResolvedConfig
from pmgan.core.errors import ArtifactNotFoundError, FormatError
from pmgan.schemas.reports import RunManifest

logger = get_logger(__name__)


class RunRecorder:
    """Collects artifacts while a command runs and writes its manifest at the end."""

    def __init__(self, command: str, resolved: ResolvedConfig, seed: Optional[int] = None):
        self.command = command
        self.resolved = resolved
        self.seed = seed
        self.artifacts: dict[str, str] = {}
        self.started_at = datetime.now(timezone.utc)
        self._clock = time.perf_counter()

    def artifact(self, name: str, path: Path) -> Path:
        self.artifacts[name] = str(path)
        return path

    def finish(self, path: Path, exit_code: int = 0) -> RunManifest:
        manifest = RunManifest(
            command=self.command,
            config=self.resolved.values,
            sources=self.resolved.sources,
            seed=self.seed,
            artifacts=self.artifacts,
            tool_version=__version__,
            started_at=self.started_at,
            wall_time_s=time.perf_counter() - self._clock,
            exit_code=exit_code,
        )
        write_manifest(path, manifest)
        return manifest


def write_manifest(path: Path, manifest: RunManifest) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = manifest.model_dump(mode="json")
    path.write_bytes(orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS))
    logger.info("manifest written", path=str(path), command=manifest.command)
    return path


def read_manifest(path: Path) -> RunManifest:
    path = Path(path)
    if not path.is_file():
        raise ArtifactNotFoundError(f"manifest not found: {path}")
    try:
        payload: Any = orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as exc:
        raise FormatError(str(path), b"json manifest", str(exc).encode()) from exc
    return RunManifest(**payload)
