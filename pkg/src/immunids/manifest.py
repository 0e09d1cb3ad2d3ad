"""Run manifests: traceability records tying every output file to its run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__

MANIFEST_FORMAT_VERSION = 1


@dataclass(slots=True)
class RunManifest:
    command: str
    config_hash: str
    seed: int
    artifacts: dict[str, str] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    created: str = ""
    tool_version: str = __version__

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        payload = {
            "format_version": MANIFEST_FORMAT_VERSION,
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "artifacts": self.artifacts,
            "extra": self.extra,
            "created": self.created or datetime.now(timezone.utc).isoformat(),
            "tool_version": self.tool_version,
        }
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        tmp.replace(path)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        payload = json.loads(Path(path).read_text())
        version = payload.get("format_version")
        if version != MANIFEST_FORMAT_VERSION:
            raise ValueError(f"unsupported manifest format version {version!r} in {path}")
        return cls(
            command=payload["command"],
            config_hash=payload["config_hash"],
            seed=payload["seed"],
            artifacts=dict(payload.get("artifacts", {})),
            extra=dict(payload.get("extra", {})),
            created=payload.get("created", ""),
            tool_version=payload.get("tool_version", "unknown"),
        )

    def resolve_artifact(self, name: str, base: Path) -> Path:
        if name not in self.artifacts:
            raise FileNotFoundError(f"manifest has no artifact {name!r}")
        raw = Path(self.artifacts[name])
        return raw if raw.is_absolute() else base / raw
