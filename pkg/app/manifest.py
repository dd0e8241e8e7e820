# app/manifest.py
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from app import __version__
from app.files import atomic_write_text, dumps
from app.schemas import RunManifest
from app.state import RUN_LOG

logger = logging.getLogger(__name__)


def manifest_path(out: str) -> str:
    return f"{out}.manifest.json"


class ManifestRecorder:
    """Keeps a record of every run: what went in, which knobs were set, what came out."""

    # keep the in-memory log bounded for long-lived servers
    MAX_ENTRIES = 1000

    def record(
        self,
        command: str,
        inputs: Iterable[str] = (),
        params: Optional[Dict[str, Any]] = None,
        outputs: Iterable[str] = (),
        notes: Iterable[str] = (),
    ) -> RunManifest:
        manifest = RunManifest(
            command=command,
            input_paths=[str(p) for p in inputs],
            parameter_echo=dict(params or {}),
            tool_version=__version__,
            output_paths=[str(p) for p in outputs],
            notes=list(notes),
        )
        RUN_LOG.append(manifest)
        if len(RUN_LOG) > self.MAX_ENTRIES:
            del RUN_LOG[: len(RUN_LOG) - self.MAX_ENTRIES]
        for note in manifest.notes:
            logger.warning("run=%s note=%s", command, note)
        return manifest

    def write(self, manifest: RunManifest, out: str) -> str:
        path = manifest_path(out)
        atomic_write_text(path, dumps(manifest.model_dump(mode="json")))
        return path

    def recent(self, limit: int = 50) -> List[RunManifest]:
        return RUN_LOG[-limit:] if limit > 0 else []


# Create a single, shared instance for the whole app
RECORDER = ManifestRecorder()
