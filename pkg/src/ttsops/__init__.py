"""Evaluation-in-the-loop construction of multi-speaker TTS corpora from noisy candidates."""

__version__ = "0.1.0"
