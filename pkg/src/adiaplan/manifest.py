"""Run manifests: what was run, on which inputs, producing which outputs.

One manifest JSON is written atomically next to each command's outputs.
Input and output files are identified by SHA-256 digests; the timestamp is
informational and not part of any digest, so re-running a command on
identical inputs yields identical input/output digests.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

from . import __version__


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def write_manifest(out_dir, command: str, parameters: dict,
                   inputs: dict, outputs: dict) -> Path:
    """inputs/outputs map logical names to file paths; digests are computed."""
    doc = {
        "command": command,
        "tool_version": __version__,
        "parameters": parameters,
        "inputs": {name: {"path": str(p), "digest": sha256_file(p)}
                   for name, p in inputs.items()},
        "outputs": {name: {"path": str(p), "digest": sha256_file(p)}
                    for name, p in outputs.items()},
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    out_dir = Path(out_dir)
    target = out_dir / f"{command.replace('-', '_')}_manifest.json"
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(json.dumps(doc, indent=2) + "\n")
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target
