"""Compiler configuration for ncdc"""
from .compiler_config import (
    CompilerConfig,
    InterpSettings,
    RewriteSettings,
    RenderSettings,
    DiagnosticsSettings,
    CorpusSettings,
    load_compiler_config,
    get_current_config,
    reset_config,
)

__all__ = [
    'CompilerConfig',
    'InterpSettings',
    'RewriteSettings',
    'RenderSettings',
    'DiagnosticsSettings',
    'CorpusSettings',
    'load_compiler_config',
    'get_current_config',
    'reset_config',
]
