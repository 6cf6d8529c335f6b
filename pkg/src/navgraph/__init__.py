"""LLM-driven instruction-following navigation over discrete viewpoint graphs."""

__version__ = "0.1.0"
