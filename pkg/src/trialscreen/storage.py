"""Key-value document persistence.

Everything the service and pipeline persist (report bytes, run state,
triage items) goes through this narrow interface, so tests run in memory
and deployments get plain files on disk with keys as relative paths.
"""

from __future__ import annotations

import re
import threading
from pathlib import Path
from typing import Optional, Protocol

from .errors import ValidationError

_KEY_RE = re.compile(r"^[A-Za-z0-9._-]+(/[A-Za-z0-9._-]+)*$")


def check_key(key: str) -> str:
    if not _KEY_RE.match(key) or ".." in key.split("/"):
        raise ValidationError(f"illegal store key {key!r}")
    return key


class KeyValueStore(Protocol):
    def get(self, key: str) -> Optional[bytes]: ...

    def put(self, key: str, value: bytes) -> None: ...

    def delete(self, key: str) -> None: ...

    def keys(self, prefix: str = "") -> list[str]: ...


class MemoryStore:
    def __init__(self) -> None:
        self._data: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def get(self, key: str) -> Optional[bytes]:
        with self._lock:
            return self._data.get(check_key(key))

    def put(self, key: str, value: bytes) -> None:
        with self._lock:
            self._data[check_key(key)] = bytes(value)

    def delete(self, key: str) -> None:
        with self._lock:
            self._data.pop(check_key(key), None)

    def keys(self, prefix: str = "") -> list[str]:
        with self._lock:
            return sorted(k for k in self._data if k.startswith(prefix))


class FileStore:
    """Keys are relative paths under a root directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.root / check_key(key)

    def get(self, key: str) -> Optional[bytes]:
        path = self._path(key)
        with self._lock:
            if not path.is_file():
                return None
            return path.read_bytes()

    def put(self, key: str, value: bytes) -> None:
        path = self._path(key)
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(value)

    def delete(self, key: str) -> None:
        path = self._path(key)
        with self._lock:
            if path.is_file():
                path.unlink()

    def keys(self, prefix: str = "") -> list[str]:
        with self._lock:
            found = [str(p.relative_to(self.root)).replace("\\", "/")
                     for p in self.root.rglob("*") if p.is_file()]
        return sorted(k for k in found if k.startswith(prefix))
