"""Run manifests: enough provenance to rerun any command and get the same
bytes back. The manifest id hashes everything that determines the output
(command, parameters, seed, input content, tool version) and nothing that
does not, so the wall-clock timestamp is recorded but excluded from the id
and from result files.
"""

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional

from . import __version__


def hash_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class RunManifest:
    command: str
    parameters: dict
    seed: Optional[int]
    input_hashes: dict
    version: str
    timestamp: str

    @property
    def manifest_id(self) -> str:
        body = canonical_json(
            {
                "command": self.command,
                "parameters": self.parameters,
                "seed": self.seed,
                "input_hashes": self.input_hashes,
                "version": self.version,
            }
        )
        return hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]

    def embed(self) -> dict:
        """Timestamp-free form embedded in result files."""
        return {
            "command": self.command,
            "parameters": self.parameters,
            "seed": self.seed,
            "input_hashes": self.input_hashes,
            "version": self.version,
            "manifest_id": self.manifest_id,
        }

    def to_dict(self) -> dict:
        out = self.embed()
        out["timestamp"] = self.timestamp
        return out


def build_manifest(command: str, parameters: dict, seed: Optional[int],
                   inputs: dict, timestamp: Optional[str] = None) -> RunManifest:
    """Assemble a manifest, hashing each input file's content.

    ``inputs`` maps a short label to a file path; ``parameters`` must be
    JSON-serializable.
    """
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    input_hashes = {
        str(label): hash_file(path) for label, path in sorted(inputs.items())
    }
    json.dumps(parameters)  # fail fast on non-serializable parameters
    return RunManifest(
        command=command,
        parameters=parameters,
        seed=seed,
        input_hashes=input_hashes,
        version=__version__,
        timestamp=timestamp,
    )
