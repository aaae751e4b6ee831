"""
Corpus manifest: which diagram of which .ncd file, at which desk-scale
bindings, checked against which oracle.
"""

import json
import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field, field_validator

from ..config import get_current_config
from ..core.errors import UndefinedName
from ..core.ir import Diagram
from ..parser.lower import compile_file

logger = logging.getLogger(__name__)

REPO_ROOT = Path(__file__).resolve().parents[2]


class CorpusEntry(BaseModel):
    """One corpus diagram and its oracle pairing"""
    name: str = Field(..., description="Unique entry name")
    file: str = Field(..., description=".ncd file, relative to the corpus directory")
    diagram: str = Field(..., description="Diagram defined in that file")
    bindings: Dict[str, int] = Field(default_factory=dict, description="Axis overrides for desk-scale runs")
    oracle: Optional[str] = Field(None, description="Oracle id, or none for run-only entries")
    tolerance: float = Field(1e-12, ge=0.0, description="Largest accepted oracle error")
    options: Dict[str, Union[int, str]] = Field(default_factory=dict, description="Oracle arguments")
    description: str = ""

    @field_validator("bindings")
    @classmethod
    def _positive_axes(cls, value: Dict[str, int]) -> Dict[str, int]:
        for name, n in value.items():
            if n < 1:
                raise ValueError(f"axis {name} must be bound to a length >= 1, got {n}")
        return value


class CorpusManifest(BaseModel):
    entries: List[CorpusEntry]


def _resolve(path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else REPO_ROOT / p


def corpus_directory() -> Path:
    return _resolve(get_current_config().corpus.directory)


def golden_directory() -> Path:
    return _resolve(get_current_config().corpus.golden_directory)


def load_corpus(manifest: Optional[str] = None) -> List[CorpusEntry]:
    """Every manifest entry, in manifest order."""
    path = _resolve(manifest or get_current_config().corpus.manifest)
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    entries = CorpusManifest.model_validate(data).entries
    names = [e.name for e in entries]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise ValueError(f"duplicate corpus entries: {', '.join(duplicates)}")
    logger.debug("loaded %d corpus entries from %s", len(entries), os.path.basename(path))
    return entries


def find_entry(name: str, entries: Optional[List[CorpusEntry]] = None) -> CorpusEntry:
    for entry in entries if entries is not None else load_corpus():
        if entry.name == name:
            return entry
    raise UndefinedName(f"no corpus entry named '{name}'")


def entry_path(entry: CorpusEntry) -> Path:
    return corpus_directory() / entry.file


def compile_entry(entry: CorpusEntry, bindings: Optional[Dict[str, int]] = None) -> Diagram:
    """The entry's diagram at its desk bindings (plus any overrides)."""
    return compile_diagram(entry, entry.diagram, bindings)


def compile_diagram(entry: CorpusEntry, name: str, bindings: Optional[Dict[str, int]] = None) -> Diagram:
    """Another diagram of the same file, at the entry's bindings."""
    diagrams = compile_file(str(entry_path(entry)), dict(entry.bindings, **(bindings or {})))
    if name not in diagrams:
        raise UndefinedName(f"{entry.file} defines no diagram '{name}'")
    return diagrams[name]
