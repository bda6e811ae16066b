"""Dementia-qualifying ICD-10 codes and their diagnostic categories."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import InputError


class DiagnosticCategory(str, enum.Enum):
    AlzheimersDisease = "AlzheimersDisease"
    VascularDementia = "VascularDementia"
    NonSpecificDementia = "NonSpecificDementia"
    PicksDisease = "PicksDisease"
    NeurocognitiveDisorder = "NeurocognitiveDisorder"


CATEGORIES: tuple[DiagnosticCategory, ...] = tuple(DiagnosticCategory)


@dataclass(frozen=True)
class DementiaCode:
    code: str
    category: DiagnosticCategory
    description: str


_DEFAULT_TABLE = (
    ("G300", DiagnosticCategory.AlzheimersDisease, "Alzheimer's disease with early onset"),
    ("G301", DiagnosticCategory.AlzheimersDisease, "Alzheimer's disease with late onset"),
    ("G308", DiagnosticCategory.AlzheimersDisease, "Other Alzheimer's disease"),
    ("G309", DiagnosticCategory.AlzheimersDisease, "Alzheimer's disease, unspecified"),
    ("G3183", DiagnosticCategory.NeurocognitiveDisorder, "Neurocognitive disorder with Lewy bodies"),
    ("G3185", DiagnosticCategory.NeurocognitiveDisorder, "Corticobasal degeneration"),
    ("F0280", DiagnosticCategory.NonSpecificDementia,
     "Dementia in other diseases classified elsewhere, unspecified severity, without behavioral "
     "disturbance, psychotic disturbance, mood disturbance, and anxiety"),
    ("F0281", DiagnosticCategory.NonSpecificDementia,
     "Dementia in other diseases classified elsewhere, unspecified severity, with behavioral disturbance"),
    ("F0390", DiagnosticCategory.NonSpecificDementia,
     "Unspecified dementia, unspecified severity, without behavioral disturbance, psychotic "
     "disturbance, mood disturbance, and anxiety"),
    ("F0391", DiagnosticCategory.NonSpecificDementia,
     "Unspecified dementia, unspecified severity, with behavioral disturbance"),
    ("G3109", DiagnosticCategory.NonSpecificDementia, "Other frontotemporal neurocognitive disorder"),
    ("G311", DiagnosticCategory.NonSpecificDementia, "Senile degeneration of brain, not elsewhere classified"),
    ("G3189", DiagnosticCategory.NonSpecificDementia, "Other specified degenerative diseases of nervous system"),
    ("G319", DiagnosticCategory.NonSpecificDementia, "Degenerative disease of nervous system, unspecified"),
    ("G3101", DiagnosticCategory.PicksDisease, "Pick's disease"),
    ("F0150", DiagnosticCategory.VascularDementia,
     "Vascular dementia, unspecified severity, without behavioral disturbance, psychotic "
     "disturbance, mood disturbance, and anxiety"),
    ("F0151", DiagnosticCategory.VascularDementia,
     "Vascular dementia, unspecified severity, with behavioral disturbance"),
)


def normalize(code: str) -> str:
    """Trim, uppercase and delete a single dot (``"f01.50 "`` -> ``"F0150"``)."""
    return code.strip().upper().replace(".", "", 1)


class Codebook:
    """Immutable lookup table from normalized code to :class:`DementiaCode`.

    Codes keep their table order, which fixes the row/column order of every
    code-level matrix downstream.
    """

    def __init__(self, entries: Iterable[DementiaCode]):
        entries = tuple(entries)
        index: dict[str, int] = {}
        for i, entry in enumerate(entries):
            if entry.code in index:
                raise InputError(f"duplicate code {entry.code!r} in codebook")
            index[entry.code] = i
        if not entries:
            raise InputError("codebook is empty")
        self._entries = entries
        self._index = index

    @classmethod
    def default(cls) -> "Codebook":
        return cls(DementiaCode(c, cat, d) for c, cat, d in _DEFAULT_TABLE)

    @classmethod
    def from_file(cls, path: str | Path, delimiter: str = ",") -> "Codebook":
        path = Path(path)
        try:
            fh = path.open(newline="", encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot read codebook {path}: {exc}") from exc
        entries = []
        with fh:
            reader = csv.DictReader(fh, delimiter=delimiter)
            missing = {"code", "category", "description"} - set(reader.fieldnames or ())
            if missing:
                raise InputError(f"{path}: codebook header lacks {sorted(missing)}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    category = DiagnosticCategory(row["category"].strip())
                except ValueError:
                    raise InputError(
                        f"{path}:{lineno}: unknown category {row['category']!r}"
                    ) from None
                entries.append(DementiaCode(normalize(row["code"]), category, row["description"].strip()))
        return cls(entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __getitem__(self, i: int) -> DementiaCode:
        return self._entries[i]

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(e.code for e in self._entries)

    def index_of(self, code: str) -> int | None:
        return self._index.get(normalize(code))

    def lookup(self, code: str) -> DementiaCode | None:
        i = self.index_of(code)
        return None if i is None else self._entries[i]

    def classify_code(self, code: str) -> DiagnosticCategory | None:
        entry = self.lookup(code)
        return None if entry is None else entry.category

    def is_dementia_qualifying(self, code: str) -> bool:
        return self.classify_code(code) is not None

    def codes_in(self, category: DiagnosticCategory) -> tuple[str, ...]:
        return tuple(e.code for e in self._entries if e.category is category)

    def category_index(self) -> list[int]:
        """Position in :data:`CATEGORIES` of each code's category, in code order."""
        return [CATEGORIES.index(e.category) for e in self._entries]


DEFAULT_CODEBOOK = Codebook.default()


def classify_code(code: str) -> DiagnosticCategory | None:
    return DEFAULT_CODEBOOK.classify_code(code)


def is_dementia_qualifying(code: str) -> bool:
    return DEFAULT_CODEBOOK.is_dementia_qualifying(code)
