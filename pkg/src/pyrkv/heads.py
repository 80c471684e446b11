"""Head categories shared by the trace labels, the classifier and the policies."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional


class HeadKind(enum.IntEnum):
    # values double as the on-disk label codes
    ANCHOR = 0
    WAVE = 1
    VEIL = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, name: str) -> "HeadKind":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown head class {name!r}") from None


UNLABELED = 255


@dataclass(frozen=True)
class HeadClass:
    kind: HeadKind
    period: Optional[float] = None

    def __post_init__(self):
        if (self.period is not None) != (self.kind is HeadKind.WAVE):
            raise ValueError("period must be given exactly for wave heads")
        if self.period is not None and self.period < 2:
            raise ValueError(f"wave period {self.period} below 2 frames")

    @classmethod
    def anchor(cls) -> "HeadClass":
        return cls(HeadKind.ANCHOR)

    @classmethod
    def veil(cls) -> "HeadClass":
        return cls(HeadKind.VEIL)

    @classmethod
    def wave(cls, period: float) -> "HeadClass":
        return cls(HeadKind.WAVE, float(period))
