"""Per-layer occurrence embedding extraction for transformer checkpoints."""

from .errors import ConfigError, ExtractionError
from .extract import CoverageRow, ExtractionConfig, ExtractionResult, extract

__all__ = [
    "ConfigError",
    "CoverageRow",
    "ExtractionConfig",
    "ExtractionError",
    "ExtractionResult",
    "extract",
]
