"""Extract-then-abstract summarization pipeline for long narrative reports."""

__version__ = "0.1.0"
