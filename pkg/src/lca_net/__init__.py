"""Local context-aware MHSA network for targeted sentiment classification."""

__version__ = "0.1.0"
