"""Run manifests: the resolved inputs of a command, written before it computes

A manifest sits at the root of every output directory as `manifest.yaml`.
Feeding it back through `--from-manifest` repeats the run with the same
resolved configuration and seed.
"""

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .version import __version__

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.yaml"


class ManifestError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    seed: int
    config: dict[str, Any]
    artifacts: dict[str, str] = field(default_factory=dict)
    version: str = __version__

    def to_primitive(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "command": self.command,
            "seed": self.seed,
            "config": dict(self.config),
            "artifacts": dict(self.artifacts),
        }

    @classmethod
    def from_primitive(cls, payload: Mapping[str, Any]) -> "RunManifest":
        missing = [k for k in ("command", "seed", "config") if k not in payload]
        if missing:
            raise ManifestError(f"Manifest lacks required key(s): {missing}")
        if not isinstance(payload["config"], Mapping):
            raise ManifestError("Manifest 'config' must be a mapping")
        return cls(
            command=str(payload["command"]),
            seed=int(payload["seed"]),
            config=dict(payload["config"]),
            artifacts={
                str(k): str(v) for k, v in (payload.get("artifacts") or {}).items()
            },
            version=str(payload.get("version", "unknown")),
        )

    def save(self, out_dir: Path) -> Path:
        path = Path(out_dir) / MANIFEST_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as f:
            yaml.safe_dump(self.to_primitive(), f, sort_keys=False)
        logger.debug(f"Wrote manifest {path}")
        return path

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_FILE
        try:
            with path.open() as f:
                payload = yaml.safe_load(f)
        except FileNotFoundError:
            raise ManifestError(f"Manifest {path} does not exist") from None
        except yaml.YAMLError as e:
            raise ManifestError(f"Manifest {path} is not valid YAML: {e}") from e
        if not isinstance(payload, Mapping):
            raise ManifestError(f"Manifest {path} must hold a mapping")
        manifest = cls.from_primitive(payload)
        if manifest.version != __version__:
            logger.warning(
                f"Manifest {path} was written by version {manifest.version}, "
                f"running {__version__}"
            )
        return manifest


def load_manifest(path: Path | None, command: str) -> RunManifest | None:
    """Read the manifest at `path` back for `command`; no path gives None"""
    if path is None:
        return None
    manifest = RunManifest.load(path)
    if manifest.command != command:
        raise ManifestError(
            f"Manifest {path} belongs to '{manifest.command}', not '{command}'"
        )
    return manifest
