"""The fixed 21-class bone marrow cell taxonomy."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import TaxonomyError

NUM_CLASSES = 21

# Alphabetical by code; position is the label index used everywhere.
DEFAULT_ENTRIES: tuple[tuple[str, str], ...] = (
    ("ABE", "Abnormal eosinophil"),
    ("ART", "Artefact"),
    ("BAS", "Basophil"),
    ("BLA", "Blast"),
    ("EBO", "Erythroblast"),
    ("EOS", "Eosinophil"),
    ("FGC", "Faggott cell"),
    ("HAC", "Hairy cell"),
    ("KSC", "Smudge cell"),
    ("LYI", "Immature lymphocyte"),
    ("LYT", "Lymphocyte"),
    ("MMZ", "Metamyelocyte"),
    ("MON", "Monocyte"),
    ("MYB", "Myelocyte"),
    ("NGB", "Band neutrophil"),
    ("NGS", "Segmented neutrophil"),
    ("NIF", "Not identifiable"),
    ("OTH", "Other cells"),
    ("PEB", "Proerythroblast"),
    ("PLM", "Plasma cell"),
    ("PMO", "Promyelocyte"),
)


@dataclass(frozen=True)
class ClassTaxonomy:
    entries: tuple[tuple[str, str], ...]

    def __post_init__(self):
        codes = [code for code, _ in self.entries]
        if len(codes) != NUM_CLASSES:
            raise TaxonomyError(f"taxonomy must have {NUM_CLASSES} entries, got {len(codes)}")
        dupes = sorted({c for c in codes if codes.count(c) > 1})
        if dupes:
            raise TaxonomyError(f"duplicate class codes: {', '.join(dupes)}")
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(codes)})

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def codes(self) -> list[str]:
        return [code for code, _ in self.entries]

    def __contains__(self, code: str) -> bool:
        return code in self._index

    def index_of(self, code: str) -> int:
        try:
            return self._index[code]
        except KeyError:
            raise KeyError(f"unknown class code {code!r}") from None

    def code_of(self, index: int) -> str:
        if not 0 <= index < len(self.entries):
            raise IndexError(f"class index {index} outside [0, {len(self.entries)})")
        return self.entries[index][0]

    def name_of(self, code: str) -> str:
        return self.entries[self.index_of(code)][1]

    def digest(self) -> str:
        """SHA-256 over the ordered (code, name) pairs."""
        text = "".join(f"{code}\t{name}\n" for code, name in self.entries)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_class_taxonomy(path: str | Path | None = None) -> ClassTaxonomy:
    """Return the built-in taxonomy, or one read from a YAML override.

    The override is a list of ``{code: ..., name: ...}`` mappings; order in
    the file defines label indices.
    """
    if path is None:
        return ClassTaxonomy(DEFAULT_ENTRIES)
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise TaxonomyError(f"cannot parse taxonomy file {path}: {exc}") from exc
    if isinstance(doc, list):
        try:
            entries = tuple((str(e["code"]), str(e["name"])) for e in doc)
        except (TypeError, KeyError) as exc:
            raise TaxonomyError(f"taxonomy entries need 'code' and 'name': {exc}") from exc
    else:
        raise TaxonomyError("taxonomy file must hold a list of {code, name} entries")
    return ClassTaxonomy(entries)
