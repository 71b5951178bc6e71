"""Append-only knowledge base of reviewer corrections.

Each entry captures one human-identified assessment error and the guidance
that prevents it.  Versions are just entry counts: version N is the first N
entries, so any historical prompt rendering can be reproduced exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .errors import ValidationError


class ErrorMode(str, Enum):
    DOMAIN_KNOWLEDGE = "domain_knowledge"
    LOGICAL = "logical"
    MISSING_INFORMATION = "missing_information"
    IRRELEVANT_CRITERION = "irrelevant_criterion"
    OTHER = "other"


@dataclass(frozen=True)
class KnowledgeEntry:
    entry_id: int
    text: str
    error_mode: ErrorMode
    trial_id: str = ""
    criterion_id: str = ""
    author: str = ""
    created_at: str = ""

    def __post_init__(self) -> None:
        if self.entry_id < 1:
            raise ValidationError("entry_id must be >= 1")
        if not self.text.strip():
            raise ValidationError("entry text must be non-empty")


@dataclass(frozen=True)
class KBSnapshot:
    version: int
    entries: tuple[KnowledgeEntry, ...]

    def render_for_prompt(self) -> str:
        """Concatenate entry texts in insertion order; scope is metadata only."""
        return "\n---\n".join(e.text for e in self.entries)


class KnowledgeBase:
    """Mutable owner of the entry log; snapshots are immutable views."""

    def __init__(self, entries: Iterable[KnowledgeEntry] = ()) -> None:
        self._entries: list[KnowledgeEntry] = []
        for entry in entries:
            self._check_next(entry)
            self._entries.append(entry)

    def _check_next(self, entry: KnowledgeEntry) -> None:
        if entry.entry_id != len(self._entries) + 1:
            raise ValidationError(
                f"entry_id {entry.entry_id} breaks the append-only sequence "
                f"(expected {len(self._entries) + 1})")

    @property
    def version(self) -> int:
        return len(self._entries)

    def append(self, text: str, error_mode: ErrorMode = ErrorMode.OTHER, *,
               trial_id: str = "", criterion_id: str = "", author: str = "",
               created_at: str = "") -> KnowledgeEntry:
        entry = KnowledgeEntry(entry_id=len(self._entries) + 1, text=text,
                               error_mode=error_mode, trial_id=trial_id,
                               criterion_id=criterion_id, author=author,
                               created_at=created_at)
        self._entries.append(entry)
        return entry

    def snapshot(self, version: Optional[int] = None) -> KBSnapshot:
        """Version N is exactly the first N entries (prefix property)."""
        if version is None:
            version = self.version
        if not 0 <= version <= self.version:
            raise ValidationError(f"no such version: {version}")
        return KBSnapshot(version=version, entries=tuple(self._entries[:version]))

    def entries(self) -> tuple[KnowledgeEntry, ...]:
        return tuple(self._entries)


# ---------------------------------------------------------------------------
# Persistence (JSON lines, one entry per line, in id order)

KB_FORMAT = "kb-v1"


def entry_to_record(entry: KnowledgeEntry) -> dict:
    return {
        "entry_id": entry.entry_id,
        "text": entry.text,
        "error_mode": entry.error_mode.value,
        "trial_id": entry.trial_id,
        "criterion_id": entry.criterion_id,
        "author": entry.author,
        "created_at": entry.created_at,
    }


def entry_from_record(record: dict) -> KnowledgeEntry:
    return KnowledgeEntry(
        entry_id=int(record["entry_id"]),
        text=record["text"],
        error_mode=ErrorMode(record["error_mode"]),
        trial_id=record.get("trial_id", ""),
        criterion_id=record.get("criterion_id", ""),
        author=record.get("author", ""),
        created_at=record.get("created_at", ""))


def save_kb(kb: KnowledgeBase, path: str | Path) -> None:
    lines = [json.dumps(entry_to_record(e), sort_keys=True) for e in kb.entries()]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_kb(path: str | Path) -> KnowledgeBase:
    p = Path(path)
    if not p.exists():
        return KnowledgeBase()
    entries = [entry_from_record(json.loads(line))
               for line in p.read_text(encoding="utf-8").splitlines() if line.strip()]
    return KnowledgeBase(entries)
