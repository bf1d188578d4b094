"""Package version, importable without pulling in the full package."""

__version__ = "0.1.0"
