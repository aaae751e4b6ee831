"""Corpus of transcribed architectures and their oracle checks"""
from .registry import (
    CorpusEntry,
    CorpusManifest,
    load_corpus,
    find_entry,
    compile_entry,
    compile_diagram,
    corpus_directory,
    golden_directory,
)
from .verify import (
    ORACLES, EntryReport, check_oracle, golden_artifacts, verify_entry, verify_corpus, write_golden,
)

__all__ = [
    'CorpusEntry',
    'CorpusManifest',
    'load_corpus',
    'find_entry',
    'compile_entry',
    'compile_diagram',
    'corpus_directory',
    'golden_directory',
    'ORACLES',
    'EntryReport',
    'check_oracle',
    'verify_entry',
    'verify_corpus',
    'golden_artifacts',
    'write_golden',
]
