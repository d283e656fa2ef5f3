"""Run manifests: what was run, with which configuration, and what it wrote."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__

_LOCK = threading.Lock()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    path: Path
    command: str
    config_snapshot: dict
    tool_version: str = __version__
    status: str = "running"
    started: str = field(default_factory=_now)
    finished: str | None = None
    outputs: dict = field(default_factory=dict)   # relative name -> sha256
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "tool_version": self.tool_version,
            "status": self.status,
            "started": self.started,
            "finished": self.finished,
            "config": self.config_snapshot,
            "outputs": dict(sorted(self.outputs.items())),
            "extra": self.extra,
        }

    def write(self) -> None:
        with _LOCK:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            tmp = self.path.with_suffix(".tmp")
            tmp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
            tmp.replace(self.path)

    def register(self, file_path) -> None:
        p = Path(file_path)
        self.outputs[str(p.relative_to(self.path.parent))] = sha256_file(p)

    def finalize(self, ok: bool) -> None:
        self.status = "ok" if ok else "failed"
        self.finished = _now()
        for name in list(self.outputs):
            p = self.path.parent / name
            if p.exists():
                self.outputs[name] = sha256_file(p)
        self.write()

    @classmethod
    def begin(cls, out_dir, command: str, config_snapshot: dict, **extra) -> "RunManifest":
        m = cls(Path(out_dir) / "manifest.json", command, config_snapshot, extra=extra)
        m.write()
        return m


def verify(manifest_path) -> list[str]:
    """Names of listed outputs whose hash no longer matches (or that vanished)."""
    path = Path(manifest_path)
    data = json.loads(path.read_text())
    bad = []
    for name, digest in data["outputs"].items():
        p = path.parent / name
        if not p.exists() or sha256_file(p) != digest:
            bad.append(name)
    return bad
