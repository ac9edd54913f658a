"""irackg: IRAC knowledge-graph extraction and training-data pipeline for
legal case opinions."""

__version__ = "0.1.0"
