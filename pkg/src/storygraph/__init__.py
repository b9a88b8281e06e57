"""Node-based storytelling engine: story graphs, task orchestration,
media job queue, timed exports, evaluation, and an HTTP service."""

__version__ = "0.1.0"
