"""Local, decentralized skill register and its tab-separated persistence."""
import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from .errors import DescriptionConflictError, InvalidArgumentError
from .models import BodyKind, validate_skill_name
from .utils import get_logger

logger = get_logger(__name__)

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def _escape(text: str) -> str:
    return "".join(_ESCAPES.get(c, c) for c in text)


def _unescape(text: str) -> str:
    out: List[str] = []
    chars = iter(text)
    for c in chars:
        if c == "\\":
            nxt = next(chars, "")
            out.append(_UNESCAPES.get(nxt, nxt))
        else:
            out.append(c)
    return "".join(out)


@dataclass
class RegisterEntry:
    description: str
    owners: List[str] = field(default_factory=list)
    body_digest: Optional[str] = None
    body_kind: Optional[BodyKind] = None


class SkillRegister:
    """Map from skill name to description, known owners and body digest."""

    def __init__(self) -> None:
        self.entries: Dict[str, RegisterEntry] = {}

    def __contains__(self, skill: str) -> bool:
        return skill in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SkillRegister) and self.entries == other.entries

    def names(self) -> List[str]:
        return list(self.entries)

    def known_skills(self) -> List[Tuple[str, str]]:
        return [(name, entry.description) for name, entry in self.entries.items()]

    def description(self, skill: str) -> str:
        try:
            return self.entries[skill].description
        except KeyError:
            raise InvalidArgumentError(f"skill '{skill}' is not in the register") from None

    def lookup(self, skill: str) -> List[str]:
        """Owners of ``skill`` in insertion order; empty if unknown."""
        entry = self.entries.get(skill)
        return list(entry.owners) if entry else []

    def record(
        self,
        skill: str,
        description: str,
        owner: str,
        body_digest: Optional[str] = None,
        body_kind: Optional[BodyKind] = None,
    ) -> "SkillRegister":
        validate_skill_name(skill)
        owner = str(owner)
        entry = self.entries.get(skill)
        if entry is None:
            self.entries[skill] = RegisterEntry(
                description=description,
                owners=[owner],
                body_digest=body_digest,
                body_kind=BodyKind(body_kind) if body_kind else None,
            )
            return self
        if entry.description != description:
            raise DescriptionConflictError(
                f"skill '{skill}' already registered as {entry.description!r}, got {description!r}"
            )
        if owner not in entry.owners:
            entry.owners.append(owner)
        if entry.body_digest is None and body_digest:
            entry.body_digest = body_digest
        if entry.body_kind is None and body_kind:
            entry.body_kind = BodyKind(body_kind)
        return self

    def copy(self) -> "SkillRegister":
        clone = SkillRegister()
        clone.entries = copy.deepcopy(self.entries)
        return clone

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------
    def dumps(self) -> str:
        lines = []
        for name, entry in self.entries.items():
            kind = entry.body_kind.value if entry.body_kind else ""
            lines.append(
                "\t".join(
                    [
                        name,
                        _escape(entry.description),
                        kind,
                        entry.body_digest or "",
                        ",".join(entry.owners),
                    ]
                )
            )
        return "".join(line + "\n" for line in lines)

    @classmethod
    def loads(cls, text: str) -> "SkillRegister":
        register = cls()
        for lineno, line in enumerate(text.split("\n"), start=1):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                logger.warning("Skipping register line %d: expected 5 fields, got %d", lineno, len(fields))
                continue
            name, description, kind, digest, owners = fields
            owner_ids = [o for o in owners.split(",") if o]
            if not owner_ids:
                logger.warning("Skipping register line %d: no owners", lineno)
                continue
            try:
                for owner in owner_ids:
                    register.record(
                        name,
                        _unescape(description),
                        owner,
                        body_digest=digest or None,
                        body_kind=BodyKind(kind) if kind else None,
                    )
            except (ValueError, DescriptionConflictError) as e:
                logger.warning("Skipping register line %d: %s", lineno, e)
        return register

    def save(self, path: Path | str) -> None:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.dumps())
        logger.info("Saved register with %d skills to %s", len(self), target)

    @classmethod
    def load(cls, path: Path | str) -> "SkillRegister":
        source = Path(path)
        if not source.exists():
            return cls()
        try:
            text = source.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            logger.warning("Failed to load register from %s: %s", source, e)
            return cls()
        return cls.loads(text)


def register_lookup(register: SkillRegister, skill: str) -> List[str]:
    return register.lookup(skill)


def register_record(
    register: SkillRegister, skill: str, description: str, owner: str, **kwargs
) -> SkillRegister:
    return register.record(skill, description, owner, **kwargs)


def register_from_catalog(entries: Iterable[Tuple[str, str, str]]) -> SkillRegister:
    """Build a register from (skill, description, owner) triples."""
    register = SkillRegister()
    for skill, description, owner in entries:
        register.record(skill, description, owner)
    return register
