"""Trial protocols: criteria, flags, and predetermined answers.

Protocols are loaded from flat per-trial text files so that every criterion
stays auditable against the source trial documentation.  File format
(``format: trial-protocol-v1``)::

    format: trial-protocol-v1
    id: 16-323
    nct_id: NCT02603341
    metastatic_group: excluded

    criterion:
      id: inclusion criterion 1
      kind: inclusion
      flag: normal
      text: Age at least 18 years at the time of registration.

Top-level ``key: value`` lines describe the trial.  Each ``criterion:``
line opens a block of indented ``key: value`` lines; criterion order in the
file is the protocol order.  ``#`` lines and blank lines are ignored.
Criterion text occupies the remainder of its line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

from .errors import ConflictError, ProtocolParseError

FORMAT_TAG = "trial-protocol-v1"


class CriterionKind(str, Enum):
    INCLUSION = "inclusion"
    EXCLUSION = "exclusion"


class CriterionFlag(str, Enum):
    NORMAL = "normal"
    VACUOUS = "vacuous"
    REQUIRES_HUMAN_REVIEW = "requires_human_review"


class CriterionStatus(str, Enum):
    """The closed three-valued assessment outcome used everywhere."""

    MET = "met"
    NOT_MET = "not_met"
    UNABLE_TO_DETERMINE = "unable_to_determine"

    @property
    def display(self) -> str:
        return _STATUS_DISPLAY[self]


_STATUS_DISPLAY = {
    CriterionStatus.MET: "Met",
    CriterionStatus.NOT_MET: "Not Met",
    CriterionStatus.UNABLE_TO_DETERMINE: "Unable to Determine",
}


class MetastaticGroup(str, Enum):
    """Whether metastatic disease is required, excluded, or neither."""

    REQUIRED = "required"
    EXCLUDED = "excluded"
    NONE = "none"


@dataclass(frozen=True)
class Criterion:
    id: str
    kind: CriterionKind
    text: str
    flag: CriterionFlag = CriterionFlag.NORMAL

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("criterion id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"criterion {self.id!r}: text must be non-empty")
        if (self.kind is CriterionKind.EXCLUSION
                and self.flag is CriterionFlag.VACUOUS):
            # A vacuous criterion is predetermined Met, and an exclusion
            # assessed Met disqualifies; the combination would rule out
            # every patient, so it is rejected as an authoring mistake.
            raise ValueError(
                f"criterion {self.id!r}: an exclusion criterion cannot be vacuous")


def resolve_flagged(criterion: Criterion) -> Optional[CriterionStatus]:
    """Predetermined answer for flagged criteria, or None for normal ones.

    Vacuous criteria are always satisfied; requires-human-review criteria
    are outside automatable scope.  A None result means the criterion must
    be assessed by the expert workflow.
    """
    if criterion.flag is CriterionFlag.VACUOUS:
        return CriterionStatus.MET
    if criterion.flag is CriterionFlag.REQUIRES_HUMAN_REVIEW:
        return CriterionStatus.UNABLE_TO_DETERMINE
    return None


@dataclass(frozen=True)
class Trial:
    id: str
    nct_id: str
    criteria: tuple[Criterion, ...]
    metastatic_group: MetastaticGroup = MetastaticGroup.NONE

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for c in self.criteria:
            if c.id in seen:
                raise ValueError(f"trial {self.id}: duplicate criterion id {c.id!r}")
            seen.add(c.id)

    def criterion(self, criterion_id: str) -> Criterion:
        for c in self.criteria:
            if c.id == criterion_id:
                return c
        raise KeyError(criterion_id)

    def count(self, kind: Optional[CriterionKind] = None,
              flag: Optional[CriterionFlag] = None) -> int:
        n = 0
        for c in self.criteria:
            if kind is not None and c.kind is not kind:
                continue
            if flag is not None and c.flag is not flag:
                continue
            n += 1
        return n


# ---------------------------------------------------------------------------
# File parsing

_TRIAL_FIELDS = {"id", "nct_id", "metastatic_group"}
_CRITERION_FIELDS = {"id", "kind", "flag", "text"}


def _split_kv(raw: str, path: str, lineno: int) -> tuple[str, str]:
    if ":" not in raw:
        raise ProtocolParseError("expected 'key: value'", path=path, line=lineno)
    key, _, value = raw.partition(":")
    return key.strip(), value.strip()


def parse_protocol(text: str, path: str = "<string>") -> Trial:
    """Parse a single trial-protocol-v1 document."""
    header: dict[str, str] = {}
    criteria: list[Criterion] = []
    current: dict[str, str] | None = None
    current_line = 0

    def finish_criterion() -> None:
        nonlocal current
        if current is None:
            return
        for f in ("id", "kind", "text"):
            if f not in current:
                raise ProtocolParseError("criterion is missing required field",
                                         path=path, line=current_line, field=f)
        try:
            kind = CriterionKind(current["kind"])
        except ValueError:
            raise ProtocolParseError(f"unknown kind {current['kind']!r}",
                                     path=path, line=current_line, field="kind")
        try:
            flag = CriterionFlag(current.get("flag", "normal"))
        except ValueError:
            raise ProtocolParseError(f"unknown flag {current['flag']!r}",
                                     path=path, line=current_line, field="flag")
        try:
            criteria.append(Criterion(id=current["id"], kind=kind,
                                      text=current["text"], flag=flag))
        except ValueError as exc:
            raise ProtocolParseError(str(exc), path=path, line=current_line)
        current = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        indented = raw[:1].isspace()
        if stripped == "criterion:":
            finish_criterion()
            current = {}
            current_line = lineno
            continue
        key, value = _split_kv(stripped, path, lineno)
        if indented:
            if current is None:
                raise ProtocolParseError("indented line outside a criterion block",
                                         path=path, line=lineno, field=key)
            if key not in _CRITERION_FIELDS:
                raise ProtocolParseError(f"unknown criterion field {key!r}",
                                         path=path, line=lineno, field=key)
            current[key] = value
        else:
            if key == "format":
                if value != FORMAT_TAG:
                    raise ProtocolParseError(f"unsupported format {value!r}",
                                             path=path, line=lineno, field="format")
                continue
            if key not in _TRIAL_FIELDS:
                raise ProtocolParseError(f"unknown trial field {key!r}",
                                         path=path, line=lineno, field=key)
            header[key] = value
    finish_criterion()

    for f in ("id", "nct_id"):
        if f not in header:
            raise ProtocolParseError("trial is missing required field",
                                     path=path, line=None, field=f)
    try:
        group = MetastaticGroup(header.get("metastatic_group", "none"))
    except ValueError:
        raise ProtocolParseError(
            f"unknown metastatic_group {header['metastatic_group']!r}",
            path=path, line=None, field="metastatic_group")
    try:
        return Trial(id=header["id"], nct_id=header["nct_id"],
                     criteria=tuple(criteria), metastatic_group=group)
    except ValueError as exc:
        raise ProtocolParseError(str(exc), path=path)


def serialize_protocol(trial: Trial) -> str:
    """Render a Trial back to trial-protocol-v1 text (round-trip safe)."""
    lines = [
        f"format: {FORMAT_TAG}",
        f"id: {trial.id}",
        f"nct_id: {trial.nct_id}",
        f"metastatic_group: {trial.metastatic_group.value}",
        "",
    ]
    for c in trial.criteria:
        lines.append("criterion:")
        lines.append(f"  id: {c.id}")
        lines.append(f"  kind: {c.kind.value}")
        lines.append(f"  flag: {c.flag.value}")
        lines.append(f"  text: {c.text}")
        lines.append("")
    return "\n".join(lines)


def load_protocols(source: Union[str, Path, Iterable[Union[str, Path]]]) -> list[Trial]:
    """Load trials from a directory of ``*.trial`` files or explicit paths.

    Files are read in sorted filename order.  Duplicate trial ids across the
    file set raise ConflictError.
    """
    if isinstance(source, (str, Path)):
        root = Path(source)
        paths = sorted(root.glob("*.trial")) if root.is_dir() else [root]
    else:
        paths = [Path(p) for p in source]

    trials: list[Trial] = []
    seen: dict[str, str] = {}
    for p in paths:
        trial = parse_protocol(p.read_text(encoding="utf-8"), path=str(p))
        if trial.id in seen:
            raise ConflictError(
                f"duplicate trial id {trial.id!r} in {p} (already defined in {seen[trial.id]})")
        seen[trial.id] = str(p)
        trials.append(trial)
    return trials


def packaged_protocol_dir() -> Path:
    """Directory of the six-trial protocol fixture shipped with the package."""
    return Path(__file__).parent / "fixtures" / "protocols"


def load_packaged_protocols() -> list[Trial]:
    return load_protocols(packaged_protocol_dir())
