"""Exception types shared across the package.

Domain failures are modeled as exceptions; validation findings that are data
(not control flow) live in ``graph.ValidationReport`` instead.
"""

from __future__ import annotations


class StoryGraphError(Exception):
    """Base class for all domain errors raised by this package."""


# --- document parsing -------------------------------------------------------

class MalformedDocument(StoryGraphError):
    """The input is not syntactically valid JSON."""


class SchemaViolation(StoryGraphError):
    """A field is missing, unexpected, of the wrong type, or malformed."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message if path is None else f"{path}: {message}")
        self.path = path


class IntegrityViolation(StoryGraphError):
    """Referential or structural integrity is broken (dangling edge, duplicate
    id, self-loop, cycle)."""

    def __init__(self, message: str, subject: str | None = None):
        super().__init__(message)
        self.subject = subject


# --- graph operations --------------------------------------------------------

class UnknownNode(StoryGraphError):
    def __init__(self, node_id: str):
        super().__init__(f"unknown node id {node_id!r}")
        self.node_id = node_id


class EmptyGraph(StoryGraphError):
    def __init__(self, message: str = "operation requires a non-empty graph"):
        super().__init__(message)


class EmptySelection(StoryGraphError):
    def __init__(self, message: str = "selection must not be empty"):
        super().__init__(message)


class WouldCreateCycle(StoryGraphError):
    def __init__(self, message: str = "edit would create a cycle"):
        super().__init__(message)


# --- orchestration ------------------------------------------------------------

class UnroutableRequest(StoryGraphError):
    """Neither an utterance nor an explicit command was supplied."""


class BackendFailure(StoryGraphError):
    """A generative backend call failed after any internal retries."""

    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class UnparseableDecomposition(StoryGraphError):
    """The decomposition stage produced output that could not be parsed,
    even after one repair re-prompt."""


class CyclicDrafts(StoryGraphError):
    """Draft successor lists imply a cyclic edge relation."""


class DanglingSuccessor(StoryGraphError):
    def __init__(self, ordinal: int):
        super().__init__(f"draft successor references unknown ordinal {ordinal}")
        self.ordinal = ordinal


class PipelineError(StoryGraphError):
    """Wraps a stage failure inside the generate -> reason -> diagram pipeline."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"pipeline stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# --- media ---------------------------------------------------------------------

class EmptySegment(StoryGraphError):
    def __init__(self, node_id: str):
        super().__init__(f"node {node_id!r} has an empty segment; nothing to generate from")
        self.node_id = node_id


# --- export ----------------------------------------------------------------------

class InvalidPath(StoryGraphError):
    """A requested export path is not a root-to-sink path of the graph."""


class EmptyOrder(StoryGraphError):
    def __init__(self, message: str = "export order must not be empty"):
        super().__init__(message)


class MissingAsset(StoryGraphError):
    def __init__(self, path: str):
        super().__init__(f"referenced asset file is missing: {path}")
        self.path = path


class IOFailure(StoryGraphError):
    """A filesystem operation failed."""


# --- evaluation --------------------------------------------------------------------

class DomainError(StoryGraphError):
    """An argument is outside the mathematical domain of the operation."""


# --- service -------------------------------------------------------------------------

class CorruptProject(StoryGraphError):
    """A stored project failed validation on load; the file is left untouched."""


class VersionConflict(StoryGraphError):
    """A mutating request carried a stale version token."""

    def __init__(self, expected: int, got: int):
        super().__init__(f"version conflict: project is at {expected}, request carried {got}")
        self.expected = expected
        self.got = got
