import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import click

from .config import settings
from .errors import EmirError


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: os.PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def dump_jsonl(records: Iterable[Any]) -> str:
    return "".join(json.dumps(r, allow_nan=False, separators=(",", ":")) + "\n" for r in records)


class ArtifactStore:
    """Reads and atomically writes run artifacts under one root directory."""

    def __init__(self, root: Optional[os.PathLike] = None):
        self.root = Path(root) if root is not None else None

    def path(self, name: os.PathLike) -> Path:
        p = Path(name)
        return p if p.is_absolute() or self.root is None else self.root / p

    def write_text(self, name: os.PathLike, text: str) -> Path:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        try:
            with click.open_file(str(target), "w", encoding="utf-8", atomic=True) as fh:
                fh.write(text)
        except OSError as e:
            raise EmirError("IO_ERROR", f"cannot write {target}: {e.strerror}") from e
        return target

    def read_text(self, name: os.PathLike) -> str:
        target = self.path(name)
        try:
            limit = settings.max_artifact_bytes
            if target.stat().st_size > limit:
                raise EmirError("IO_ERROR", f"{target} exceeds {limit} bytes")
            return target.read_text(encoding="utf-8")
        except OSError as e:
            raise EmirError("IO_ERROR", f"cannot read {target}: {e.strerror}") from e

    def write_json(self, name: os.PathLike, obj: Any) -> Path:
        return self.write_text(name, dump_json(obj))

    def checksums(self, names: Iterable[os.PathLike]) -> Dict[str, str]:
        """name -> sha256 hex of every listed artifact that exists."""
        out = {}
        for name in names:
            target = self.path(name)
            if target.exists():
                out[Path(name).as_posix()] = sha256_file(target)
        return out


store = ArtifactStore()
