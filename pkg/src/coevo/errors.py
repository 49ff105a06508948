"""Exception taxonomy shared across the engine.

The CLI maps these onto exit codes: contract/validation/config problems
exit 3, transport problems exit 4, anything else unexpected exits 5.
"""

from __future__ import annotations


class CoevoError(Exception):
    """Base class for all engine errors."""


class ContractError(CoevoError):
    """A documented precondition was violated by the caller."""


class ConfigError(CoevoError):
    """Invalid or inconsistent configuration."""


class TransportError(CoevoError):
    """Backend request failed (network, HTTP status, rate limit)."""


class RateLimitError(TransportError):
    """Backend signalled throttling (HTTP 429)."""


class EmptyCompletionError(TransportError):
    """Backend returned an empty completion."""


class ScriptExhaustedError(TransportError):
    """A strict scripted backend had no row for the requested lookup."""


class PersonaParseError(CoevoError):
    """Persona document is structurally malformed (distinct from invariant
    violations, which are reported, not raised)."""


class GenerationError(CoevoError):
    """Backend output stayed unusable after the configured retries."""


class JudgeValidationError(CoevoError):
    """Judge response violated the structured-output schema."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class TreeBuildError(CoevoError):
    """Tree construction failed mid-build; carries the completed subtree."""

    def __init__(self, message: str, partial_tree=None):
        super().__init__(message)
        self.partial_tree = partial_tree


class ScoringError(CoevoError):
    """Judging failed for one or more nodes after retries."""

    def __init__(self, failed_nodes, message: str | None = None):
        self.failed_nodes = sorted(failed_nodes)
        super().__init__(
            message or f"judging failed for nodes {self.failed_nodes}"
        )


class ValuationError(CoevoError):
    """Q backup requested on a tree with unscored nodes."""


class ExtractionError(CoevoError):
    """Pair extraction requested on a tree without backed-up Q values."""


class MetricError(CoevoError):
    """Metric aggregation over empty or malformed inputs."""


class ArtifactLookupError(CoevoError):
    """A required policy artifact is not registered."""


class IterationError(CoevoError):
    """An iteration stage failed; state up to the last checkpoint is on disk."""

    def __init__(self, message: str, stage: str, iteration: int):
        super().__init__(f"iteration {iteration}, stage '{stage}': {message}")
        self.stage = stage
        self.iteration = iteration


class StudyError(CoevoError):
    """Blinded-study configuration or sampling problem."""


class UnknownTaskError(StudyError):
    """Ranking submitted for a task id the session does not contain."""


class DuplicateSubmissionError(StudyError):
    """Ranking submitted twice for the same task."""
