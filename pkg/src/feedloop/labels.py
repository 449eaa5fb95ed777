"""Cross-cutting enums: the binary label, classification pathway, dataset split,
and gold-label provenance."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional


class Label(str, Enum):
    CT = "CT"
    NOT_CT = "NOT_CT"

    def other(self) -> "Label":
        return Label.NOT_CT if self is Label.CT else Label.CT


class Pathway(str, Enum):
    FT = "FT"  # locally trained reference classifier
    P = "P"  # prompt-based via text-completion client


class Split(str, Enum):
    TRAIN = "TRAIN"
    VALIDATION = "VALIDATION"
    TEST = "TEST"


@dataclass(frozen=True)
class Provenance:
    """How a gold label was produced: direct feedback, implicit affirmation,
    or a recorded conflict resolution."""

    kind: str  # EXPLICIT | IMPLICIT | RESOLVED
    resolver_id: Optional[str] = None

    EXPLICIT_KIND = "EXPLICIT"
    IMPLICIT_KIND = "IMPLICIT"
    RESOLVED_KIND = "RESOLVED"

    @classmethod
    def explicit(cls) -> "Provenance":
        return cls(kind=cls.EXPLICIT_KIND)

    @classmethod
    def implicit(cls) -> "Provenance":
        return cls(kind=cls.IMPLICIT_KIND)

    @classmethod
    def resolved(cls, resolver_id: str) -> "Provenance":
        return cls(kind=cls.RESOLVED_KIND, resolver_id=resolver_id)

    def encode(self) -> str:
        if self.kind == self.RESOLVED_KIND:
            return f"RESOLVED:{self.resolver_id}"
        return self.kind

    @classmethod
    def decode(cls, text: str) -> "Provenance":
        if text.startswith("RESOLVED:"):
            return cls.resolved(text.split(":", 1)[1])
        return cls(kind=text)
