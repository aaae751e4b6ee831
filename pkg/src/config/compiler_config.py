"""
Compiler Configuration

Per-installation settings for the diagram compiler:
- interpreter limits (materialization size, finite-difference step)
- rewrite engine (normalize fixpoint bound)
- SVG grid metrics
- diagnostics coloring
- corpus location and seed

Settings are read from config/ncdc_config.json (or NCDC_CONFIG_PATH).
A .env file in the working directory is honoured for both variables.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

ROOT_DIR = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
CONFIG_PATH = os.path.join(ROOT_DIR, "config", "ncdc_config.json")


@dataclass
class InterpSettings:
    materialize_limit: int = 10_000
    fd_step: float = 1e-3
    fd_clamp: float = 1e-12


@dataclass
class RewriteSettings:
    normalize_max_passes: int = 64


@dataclass
class RenderSettings:
    column_width: int = 96
    stub_length: int = 24
    row_height: int = 28
    separator_gap: int = 14
    margin: int = 24
    font_size: int = 11
    font_family: str = "DejaVu Sans, sans-serif"


@dataclass
class DiagnosticsSettings:
    color: bool = False


@dataclass
class CorpusSettings:
    directory: str = "corpus"
    manifest: str = "corpus/corpus.json"
    golden_directory: str = "corpus/golden"
    seed: int = 20240601


def _section(cls, data: Optional[Dict[str, Any]]):
    """Build a settings dataclass, ignoring unknown keys and keeping defaults for missing ones."""
    data = data or {}
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        logger.warning("ignoring unknown %s keys: %s", cls.__name__, ", ".join(unknown))
    return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class CompilerConfig:
    interp: InterpSettings = field(default_factory=InterpSettings)
    rewrite: RewriteSettings = field(default_factory=RewriteSettings)
    render: RenderSettings = field(default_factory=RenderSettings)
    diagnostics: DiagnosticsSettings = field(default_factory=DiagnosticsSettings)
    corpus: CorpusSettings = field(default_factory=CorpusSettings)

    @classmethod
    def load(cls, path: Optional[str] = None) -> "CompilerConfig":
        target_path = path if path else CONFIG_PATH
        if not os.path.exists(target_path):
            if not path:
                logger.info("config not found at %s, using defaults", target_path)
                return cls()
            raise FileNotFoundError(f"Config not found at {target_path}")

        with open(target_path, "r", encoding="utf-8") as f:
            data = json.load(f)

        return cls(
            interp=_section(InterpSettings, data.get("interp")),
            rewrite=_section(RewriteSettings, data.get("rewrite")),
            render=_section(RenderSettings, data.get("render")),
            diagnostics=_section(DiagnosticsSettings, data.get("diagnostics")),
            corpus=_section(CorpusSettings, data.get("corpus")),
        )

    def resolve(self, relative: str) -> str:
        """Resolve a repository-relative path from the settings."""
        return relative if os.path.isabs(relative) else os.path.join(ROOT_DIR, relative)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# Global config instance
_current_config: Optional[CompilerConfig] = None


def _env_flag(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes", "on")


def load_compiler_config(config_path: Optional[str] = None) -> CompilerConfig:
    """
    Load compiler configuration from file, then apply environment overrides.
    """
    global _current_config
    load_dotenv()

    if config_path is None:
        config_path = os.getenv("NCDC_CONFIG_PATH")

    if config_path is None:
        for path in (CONFIG_PATH, "config/ncdc_config.json", "ncdc_config.json"):
            if Path(path).exists():
                config_path = path
                break

    config = CompilerConfig.load(config_path)
    color = os.getenv("NCDC_COLOR")
    if color is not None:
        config.diagnostics.color = _env_flag(color)

    _current_config = config
    return _current_config


def get_current_config() -> CompilerConfig:
    """Get the current compiler configuration (loads if not already loaded)"""
    global _current_config
    if _current_config is None:
        return load_compiler_config()
    return _current_config


def reset_config() -> None:
    """Forget the cached configuration (tests and CLI re-entry)."""
    global _current_config
    _current_config = None
