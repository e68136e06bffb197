"""iclselect: ambiguity-aware demonstration selection for in-context
text classification, with the standard baseline suite and analysis metrics."""

__version__ = "0.1.0"
