"""Run manifests: what was run, with which options, seeds and inputs."""

import hashlib
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO, Union

from pydantic import BaseModel, Field

from detection import __version__


class RunManifest(BaseModel):
    """One record per CLI invocation."""

    subcommand: str
    options: Dict[str, Any] = Field(default_factory=dict, description="Fully resolved options")
    seeds: List[int] = Field(default_factory=list)
    version: str = __version__
    input_digests: Dict[str, str] = Field(default_factory=dict, description="path -> sha256")
    started_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    finished_at: Optional[datetime] = None
    exit_code: Optional[int] = None

    def add_input(self, path: Union[str, Path], data: Optional[bytes] = None) -> None:
        """Record the sha256 of an input file (or of bytes read from stdin)."""
        self.input_digests[str(path)] = file_digest(path) if data is None else hashlib.sha256(data).hexdigest()

    def finish(self, exit_code: int) -> "RunManifest":
        self.finished_at = datetime.now(timezone.utc)
        self.exit_code = exit_code
        return self

    def comparable(self) -> Dict[str, Any]:
        """The manifest without timestamps."""
        return self.model_dump(mode="json", exclude={"started_at", "finished_at"})


def file_digest(path: Union[str, Path]) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def emit_manifest(manifest: RunManifest, path: Optional[Union[str, Path]] = None, stderr: Optional[TextIO] = None) -> None:
    """Write to path, or to stderr when no path is given."""
    text = manifest.model_dump_json(indent=2) + "\n"
    if path is None:
        (stderr or sys.stderr).write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
