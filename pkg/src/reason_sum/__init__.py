"""Reasoning-strategy summarization harness.

Nine prompt pipelines (vanilla plus eight reasoning strategies) over any
chat-completions endpoint, a deterministic mock for testing, lexical and
judge-based metrics, and a resumable experiment runner.
"""

__version__ = "0.1.0"
