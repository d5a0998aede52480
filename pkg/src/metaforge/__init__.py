"""Template-driven metadata extraction: chunking, chunk selection, LLM extraction, grading, evaluation."""

__version__ = "0.1.0"
