"""Run manifests: the audit record emitted once per CLI command.

A manifest pins the fully resolved configuration, the derived seeds, wall
timestamps, and a SHA-256 checksum of every output file.  Output files are
byte-reproducible functions of (config, seed); the manifest itself carries
the timestamps and is therefore the one file excluded from that contract —
it is how reruns are compared.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__

MANIFEST_NAME = "run_manifest.json"


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class ManifestWriter:
    """Collects run facts and writes the manifest exactly once."""

    command: str
    resolved_config: dict
    out_dir: Path
    seed_derivations: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    started_at: float = field(default_factory=time.time)
    _written: bool = False

    def add_output(self, path) -> Path:
        path = Path(path)
        self.outputs.append(path)
        return path

    def note_seed(self, label: str, seed: int) -> None:
        self.seed_derivations[label] = int(seed)

    def write(self, status: str = "ok", error: str | None = None) -> Path:
        if self._written:
            raise RuntimeError("manifest already written for this run")
        self._written = True
        payload = {
            "artifact_version": __version__,
            "command": self.command,
            "resolved_config": dict(sorted(self.resolved_config.items())),
            "seed_derivations": dict(sorted(self.seed_derivations.items())),
            "started_at": self.started_at,
            "finished_at": time.time(),
            "status": status,
            "error": error,
            "outputs": {
                str(p.relative_to(self.out_dir)): file_sha256(p)
                for p in self.outputs
                if p.exists()
            },
        }
        path = self.out_dir / MANIFEST_NAME
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def read_manifest(out_dir) -> dict:
    with open(Path(out_dir) / MANIFEST_NAME, encoding="utf-8") as fh:
        return json.load(fh)
