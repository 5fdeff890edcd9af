"""Exception types raised by the extractor."""


class ExtractionError(Exception):
    """Base class for everything embextract raises on purpose."""


class ConfigError(ExtractionError):
    """Invalid extraction configuration."""
